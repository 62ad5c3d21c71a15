#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ltraj {

/// monostate is an empty cell (null in JSON, blank in CSV).
using Cell = std::variant<std::monostate, bool, std::int64_t, std::uint64_t, double, std::string>;

Cell optional_cell(const std::optional<double>& value);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  /// Throws Error(invariant) when the row width differs from `columns`.
  void add_row(std::vector<Cell> row);
  /// Index of a column; throws Error(out_of_range) if absent.
  std::size_t column(std::string_view name) const;
};

enum class OutputFormat { json_lines, csv };

std::optional<OutputFormat> parse_output_format(std::string_view text) noexcept;
std::string_view to_string(OutputFormat format) noexcept;

/// Shortest round-trip decimal form; "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double value);

/// json_lines: one object per row, first key "table". csv: one block per
/// table with a leading "table" column, blocks separated by a blank line.
/// Non-finite doubles are written as empty cells in both formats.
void write_tables(std::ostream& out, std::span<const Table> tables, OutputFormat format);
std::string render_tables(std::span<const Table> tables, OutputFormat format);

}  // namespace ltraj
