#ifndef GBF_TEXT_IO_HPP_
#define GBF_TEXT_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gbf {

// Flat `key = value` file. '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// RFC-4180-style record splitting (quoted fields may contain commas and "").
std::vector<std::string> parse_csv_line(std::string_view line);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

// 17 significant digits ("%.17g"); round-trips every double.
std::string format_double(double v);

double parse_double(std::string_view s, std::string_view what);

}  // namespace gbf

#endif  // GBF_TEXT_IO_HPP_
