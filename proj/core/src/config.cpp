#include "ebmc/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "ebmc/csv.hpp"
#include "ebmc/errors.hpp"

namespace ebmc::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
  return true;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string at = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_name(section)) throw ConfigError(at + ": bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + ": expected 'key = value'");
    const std::string name = trim(line.substr(0, eq));
    if (!valid_name(name)) throw ConfigError(at + ": bad key '" + name + "'");
    const std::string key = section.empty() ? name : section + "." + name;
    if (cfg.values_.count(key)) throw ConfigError(at + ": key '" + key + "' repeated");
    cfg.values_[key] = trim(line.substr(eq + 1));
    cfg.lines_[key] = line_no;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValueConfig::where(const std::string& key) const {
  const auto it = lines_.find(key);
  if (it == lines_.end()) return source_ + ": key '" + key + "'";
  return source_ + ":" + std::to_string(it->second) + ": key '" + key + "'";
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(source_ + ": missing required key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  try {
    return csv::parse_double(get(key));
  } catch (const IoError&) {
    throw ConfigError(where(key) + ": expected a number, got '" + get(key) + "'");
  }
}

long long KeyValueConfig::get_int(const std::string& key) const {
  try {
    return csv::parse_int(get(key));
  } catch (const IoError&) {
    throw ConfigError(where(key) + ": expected an integer, got '" + get(key) + "'");
  }
}

std::size_t KeyValueConfig::get_count(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) throw ConfigError(where(key) + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(where(key) + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (get(key).empty()) return out;
  for (const auto& item : csv::split(get(key), ',')) {
    const std::string t = trim(item);
    if (t.empty()) throw ConfigError(where(key) + ": empty list item");
    out.push_back(t);
  }
  return out;
}

void KeyValueConfig::set(const std::string& key, std::string value) {
  if (!valid_name(key)) throw ConfigError("bad key '" + key + "'");
  values_[key] = std::move(value);
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (!known.count(key)) throw ConfigError(where(key) + ": unknown key");
}

void KeyValueConfig::require(const std::vector<std::string>& keys) const {
  for (const auto& k : keys)
    if (!has(k)) throw ConfigError(source_ + ": missing required key '" + k + "'");
}

std::string KeyValueConfig::serialize() const {
  std::ostringstream out;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [key, value] : values_) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos) {
      out << key << " = " << value << "\n";
    } else {
      sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value);
    }
  }
  bool first = out.tellp() == 0;
  for (const auto& [section, entries] : sections) {
    if (!first) out << "\n";
    first = false;
    out << "[" << section << "]\n";
    for (const auto& [name, value] : entries) out << name << " = " << value << "\n";
  }
  return out.str();
}

}  // namespace ebmc::config
