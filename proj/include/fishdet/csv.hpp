#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fishdet::csv {

// Splits one CSV line on commas, honouring double-quoted fields ("" escapes a
// quote). Trailing '\r' is stripped.
std::vector<std::string> split_line(std::string_view line);

// Line-oriented reader with a header row. Blank lines are skipped.
class Reader {
 public:
  explicit Reader(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }

  // Column index for `name`, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;

  // Like find() but throws ConfigError naming the column and file.
  std::size_t require(std::string_view name) const;

  bool next(std::vector<std::string>& fields);

  std::size_t line_number() const { return line_no_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t line_no_ = 0;
};

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Shortest representation that round-trips.
std::string format_double(double v);
// Fixed number of decimals.
std::string format_fixed(double v, int decimals);

}  // namespace fishdet::csv
