#include "clvsurvey/config.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include "clvsurvey/error.hpp"
#include "clvsurvey/tabular.hpp"

namespace clvsurvey {

namespace {

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '_' ||
                    ch == '-' || ch == '.';
    if (!ok) return false;
  }
  return true;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

}  // namespace

Config Config::parse(std::istream& in, std::string_view source) {
  Config cfg;
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where(source, line_no) + ": unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw ValidationError(where(source, line_no) + ": invalid section name");
      section = std::string(name);
      cfg.values_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where(source, line_no) + ": expected key = value");
    if (section.empty()) throw ValidationError(where(source, line_no) + ": key outside of any section");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!valid_name(key)) throw ValidationError(where(source, line_no) + ": invalid key name");
    auto& sec = cfg.values_[section];
    if (sec.count(std::string(key))) {
      throw ValidationError(where(source, line_no) + ": duplicate key " + section + "." + std::string(key));
    }
    sec[std::string(key)] = std::string(value);
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  return parse(in, path);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  if (!valid_name(section) || !valid_name(key)) throw ValidationError("invalid config name " + section + "." + key);
  values_[section][key] = value;
}

bool Config::has(const std::string& section, const std::string& key) const { return get(section, key).has_value(); }

std::optional<std::string> Config::get(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
  return get(section, key).value_or(fallback);
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
  const auto v = get(section, key);
  return v ? parse_double(*v, section + "." + key) : fallback;
}

long long Config::get_int(const std::string& section, const std::string& key, long long fallback) const {
  const auto v = get(section, key);
  return v ? parse_int(*v, section + "." + key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  if (v->empty()) throw ValidationError(section + "." + key + ": expected an unsigned integer");
  for (char ch : *v) {
    if (ch < '0' || ch > '9') throw ValidationError(section + "." + key + ": expected an unsigned integer, got '" + *v + "'");
    const auto digit = static_cast<std::uint64_t>(ch - '0');
    if (out > (UINT64_MAX - digit) / 10) throw ValidationError(section + "." + key + ": value out of range");
    out = out * 10 + digit;
  }
  return out;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
  if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
  throw ValidationError(section + "." + key + ": expected true or false, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& section, const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  const auto v = get(section, key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (const auto& f : split_csv_line(*v)) {
    const auto t = trim(f);
    if (t.empty()) throw ValidationError(section + "." + key + ": empty list entry");
    out.emplace_back(t);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const auto& s : get_list(section, key, {})) out.push_back(parse_double(s, section + "." + key));
  return out;
}

std::vector<std::string> Config::sections() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : values_) out.push_back(name);
  return out;
}

std::vector<std::string> Config::keys(const std::string& section) const {
  std::vector<std::string> out;
  const auto s = values_.find(section);
  if (s == values_.end()) return out;
  for (const auto& [k, _] : s->second) out.push_back(k);
  return out;
}

std::string Config::canonical() const {
  std::ostringstream out;
  for (const auto& [section, kv] : values_) {
    if (kv.empty()) continue;
    out << '[' << section << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  }
  return out.str();
}

std::string Config::hash() const { return fnv1a_hex(canonical()); }

}  // namespace clvsurvey
