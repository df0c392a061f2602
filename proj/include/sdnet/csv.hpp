#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdnet {

/// In-memory CSV table of already formatted cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
  friend bool operator==(const Table&, const Table&) = default;
};

/// Shortest round-trippable decimal form, identical across runs.
std::string format_number(double v);

void write_csv(const Table& t, std::ostream& os);
void write_csv(const Table& t, const std::string& path);
Table read_csv(std::istream& is);
Table read_csv(const std::string& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line chart; identical inputs produce identical bytes.
std::string svg_line_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);
void write_text(const std::string& text, const std::string& path);

}  // namespace sdnet
