#include "ltraj/report.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ltraj/error.hpp"

namespace ltraj {

namespace {

template <typename... F>
struct overloaded : F... {
  using F::operator()...;
};
template <typename... F>
overloaded(F...) -> overloaded<F...>;

bool is_empty(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return true;
  if (const auto* d = std::get_if<double>(&c)) return !std::isfinite(*d);
  return false;
}

std::string scalar_text(const Cell& c) {
  return std::visit(overloaded{
                        [](std::monostate) { return std::string{}; },
                        [](bool b) { return std::string(b ? "true" : "false"); },
                        [](std::int64_t v) { return std::to_string(v); },
                        [](std::uint64_t v) { return std::to_string(v); },
                        [](double v) { return format_double(v); },
                        [](const std::string& s) { return s; },
                    },
                    c);
}

std::string json_cell(const Cell& c) {
  if (is_empty(c)) return "null";
  if (const auto* s = std::get_if<std::string>(&c)) return nlohmann::json(*s).dump();
  return scalar_text(c);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

Cell optional_cell(const std::optional<double>& value) {
  if (!value) return std::monostate{};
  return *value;
}

void Table::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw Error(ErrorCode::invariant, name + ": row has " + std::to_string(row.size()) + " cells for " +
                                          std::to_string(columns.size()) + " columns");
  }
  rows.push_back(std::move(row));
}

std::size_t Table::column(std::string_view col) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == col) return i;
  }
  throw Error(ErrorCode::out_of_range, name + " has no column " + std::string(col));
}

std::optional<OutputFormat> parse_output_format(std::string_view text) noexcept {
  if (text == "json-lines" || text == "jsonl") return OutputFormat::json_lines;
  if (text == "csv") return OutputFormat::csv;
  return std::nullopt;
}

std::string_view to_string(OutputFormat format) noexcept {
  return format == OutputFormat::csv ? "csv" : "json-lines";
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_tables(std::ostream& out, std::span<const Table> tables, OutputFormat format) {
  bool first_block = true;
  for (const auto& t : tables) {
    if (format == OutputFormat::json_lines) {
      const std::string name = nlohmann::json(t.name).dump();
      std::vector<std::string> keys;
      for (const auto& c : t.columns) keys.push_back(nlohmann::json(c).dump());
      for (const auto& row : t.rows) {
        out << "{\"table\":" << name;
        for (std::size_t i = 0; i < row.size(); ++i) out << ',' << keys[i] << ':' << json_cell(row[i]);
        out << "}\n";
      }
      continue;
    }
    if (!first_block) out << '\n';
    first_block = false;
    out << "table";
    for (const auto& c : t.columns) out << ',' << csv_field(c);
    out << '\n';
    for (const auto& row : t.rows) {
      out << csv_field(t.name);
      for (const auto& cell : row) out << ',' << (is_empty(cell) ? std::string{} : csv_field(scalar_text(cell)));
      out << '\n';
    }
  }
}

std::string render_tables(std::span<const Table> tables, OutputFormat format) {
  std::ostringstream out;
  write_tables(out, tables, format);
  return out.str();
}

}  // namespace ltraj
