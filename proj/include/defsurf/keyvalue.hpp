// keyvalue.hpp
// Flat `key = value` text documents used for manifests, training configs,
// experiment specs and metric records. Keys may repeat (table rows); order
// is preserved. Lines starting with '#' are comments.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace defsurf {

class KeyValue {
 public:
  static KeyValue parse_string(const std::string& text);
  static KeyValue parse_file(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  // First value for `key`; throws std::invalid_argument when absent.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::vector<std::string> all(const std::string& key) const;

  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int_or(const std::string& key, long fallback) const;

  void set(const std::string& key, const std::string& value);  // replace first
  void add(const std::string& key, const std::string& value);  // append

  const std::vector<std::pair<std::string, std::string>>& items() const {
    return items_;
  }

  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

// "a,b , c" -> {"a", "b", "c"}; empty tokens dropped.
std::vector<std::string> split_list(const std::string& text, char delim = ',');

// Attribute rows like "id=seq0 light=Lc split=train dir=seq0".
KeyValue parse_attributes(const std::string& row);

// Applies `key=value` override strings onto a document, rejecting keys that
// are not in `allowed` (pass an empty list to allow any key).
void apply_overrides(KeyValue& doc, const std::vector<std::string>& overrides,
                     const std::vector<std::string>& allowed);

}  // namespace defsurf
