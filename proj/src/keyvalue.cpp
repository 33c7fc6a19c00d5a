#include "defsurf/keyvalue.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace defsurf {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValue KeyValue::parse_string(const std::string& text) {
  KeyValue doc;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("key-value line without '=': " + t);
    doc.items_.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return doc;
}

KeyValue KeyValue::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

bool KeyValue::has(const std::string& key) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const auto& kv) { return kv.first == key; });
}

const std::string& KeyValue::get(const std::string& key) const {
  for (const auto& kv : items_)
    if (kv.first == key) return kv.second;
  throw std::invalid_argument("missing key: " + key);
}

std::string KeyValue::get_or(const std::string& key,
                             const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::vector<std::string> KeyValue::all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& kv : items_)
    if (kv.first == key) out.push_back(kv.second);
  return out;
}

double KeyValue::get_double(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size())
    throw std::invalid_argument("not a number for key " + key + ": " + v);
  return d;
}

double KeyValue::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long KeyValue::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t pos = 0;
  const long n = std::stol(v, &pos);
  if (pos != v.size())
    throw std::invalid_argument("not an integer for key " + key + ": " + v);
  return n;
}

long KeyValue::get_int_or(const std::string& key, long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

void KeyValue::set(const std::string& key, const std::string& value) {
  for (auto& kv : items_)
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  items_.emplace_back(key, value);
}

void KeyValue::add(const std::string& key, const std::string& value) {
  items_.emplace_back(key, value);
}

std::string KeyValue::to_string() const {
  std::ostringstream out;
  for (const auto& kv : items_) out << kv.first << " = " << kv.second << "\n";
  return out.str();
}

void KeyValue::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_string();
}

std::vector<std::string> split_list(const std::string& text, char delim) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, delim)) {
    const std::string t = trim(token);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

KeyValue parse_attributes(const std::string& row) {
  KeyValue doc;
  std::istringstream in(row);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("attribute without '=': " + token);
    doc.add(token.substr(0, eq), token.substr(eq + 1));
  }
  return doc;
}

void apply_overrides(KeyValue& doc, const std::vector<std::string>& overrides,
                     const std::vector<std::string>& allowed) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key=value: " + ov);
    const std::string key = trim(ov.substr(0, eq));
    const std::string value = trim(ov.substr(eq + 1));
    if (!allowed.empty() &&
        std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument("unknown config key: " + key);
    doc.set(key, value);
  }
}

}  // namespace defsurf
