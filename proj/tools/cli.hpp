#ifndef COPRIMARY_TOOLS_CLI_HPP
#define COPRIMARY_TOOLS_CLI_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <coprimary/core_types.hpp>

namespace coprimary::cli
{

inline constexpr const char* tool_version = "1.0.0";

/// Exit codes of every subcommand.
inline constexpr int exit_ok = 0;
inline constexpr int exit_error = 1;
inline constexpr int exit_study_failed = 2;

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based source line of each row.
    std::vector<std::size_t> lines;
};

/// Comma-separated table with a header row. Blank lines are skipped; a row whose field count
/// differs from the header raises ParseError naming the line.
CsvTable read_csv(std::istream& in, const std::string& source);
CsvTable read_csv_file(const std::string& path);

/// Binary prediction columns with their names and the 0/1 label of each subject.
struct LabeledPredictions
{
    std::vector<std::string> names;
    BinaryMatrix predictions;
    std::vector<std::uint8_t> labels;
};

/// One table with a `label` column; every other column is a model.
LabeledPredictions parse_combined(const CsvTable& table, const std::string& source);
/// Predictions and labels in separate tables with matching row order.
LabeledPredictions parse_separate(const CsvTable& predictions, const CsvTable& labels, const std::string& pred_source,
                                  const std::string& label_source);

/// Flat `key = value` lines ('#' starts a comment) turned into `--key=value` tokens.
std::vector<std::string> config_arguments(std::istream& in, const std::string& source);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Runs the tool on arguments without the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace coprimary::cli

#endif // COPRIMARY_TOOLS_CLI_HPP
