#ifndef AFFAGG_IO_HPP
#define AFFAGG_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "affagg/simulation.hpp"

namespace affagg {

inline constexpr int kCsvSchemaVersion = 1;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Header-free, row-major numeric CSV.
Matrix read_matrix_csv(const std::filesystem::path& path);
/// One value per line, or a single row.
Vector read_vector_csv(const std::filesystem::path& path);
void write_matrix_csv(std::ostream& os, const Matrix& m);

void write_records_csv(std::ostream& os, const std::vector<TrialRecord>& records);
void write_tail_report_csv(std::ostream& os, const TailCheckReport& report);

nlohmann::json to_json(const TailCheckReport& report);
nlohmann::json to_json(const IdentityCheckReport& report);
nlohmann::json to_json(const IdentitySuiteReport& report);
nlohmann::json to_json(const AggregateOutput& output);

}  // namespace affagg

#endif
