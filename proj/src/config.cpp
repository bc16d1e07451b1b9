#include "sgm/config.hpp"

#include "sgm/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace sgm {

namespace {

std::string trim(std::string const &s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) { return {}; }
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

FlatConfig FlatConfig::parse(std::string const &text, std::string const &source)
{
  FlatConfig c;
  c.source_ = source;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto const hash = line.find('#'); hash != std::string::npos) { line.resize(hash); }
    line = trim(line);
    if (line.empty()) { continue; }
    auto const eq = line.find('=');
    auto const where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) { throw ArgumentError(where + ": expected 'key = value'"); }
    auto const key = trim(line.substr(0, eq));
    auto const value = trim(line.substr(eq + 1));
    if (key.empty()) { throw ArgumentError(where + ": empty key"); }
    if (c.values_.count(key)) { throw ArgumentError(where + ": duplicate key '" + key + "'"); }
    c.values_[key] = value;
  }
  return c;
}

FlatConfig FlatConfig::load(std::filesystem::path const &file)
{
  std::ifstream in(file);
  if (!in) { throw IoError(file, "cannot open config file"); }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.string());
}

std::optional<std::string> FlatConfig::get(std::string const &key) const
{
  auto it = values_.find(key);
  if (it == values_.end()) { return std::nullopt; }
  return it->second;
}

std::string FlatConfig::get_string(std::string const &key, std::string const &fallback) const
{
  return get(key).value_or(fallback);
}

int64_t FlatConfig::get_int(std::string const &key, int64_t fallback) const
{
  auto const v = get(key);
  if (!v) { return fallback; }
  int64_t out = 0;
  auto const *end = v->data() + v->size();
  auto const [p, ec] = std::from_chars(v->data(), end, out);
  if (ec != std::errc() || p != end) { throw ArgumentError(source_ + ": '" + key + "' is not an integer: " + *v); }
  return out;
}

double FlatConfig::get_double(std::string const &key, double fallback) const
{
  auto const v = get(key);
  if (!v) { return fallback; }
  try {
    size_t used = 0;
    auto const d = std::stod(*v, &used);
    if (used != v->size()) { throw std::invalid_argument(*v); }
    return d;
  } catch (std::exception const &) {
    throw ArgumentError(source_ + ": '" + key + "' is not a number: " + *v);
  }
}

bool FlatConfig::get_bool(std::string const &key, bool fallback) const
{
  auto const v = get(key);
  if (!v) { return fallback; }
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") { return true; }
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") { return false; }
  throw ArgumentError(source_ + ": '" + key + "' is not a boolean: " + *v);
}

std::vector<int64_t> FlatConfig::get_ints(std::string const &key, std::vector<int64_t> const &fallback) const
{
  auto const v = get(key);
  if (!v) { return fallback; }
  std::vector<int64_t> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    FlatConfig one;
    one.source_ = source_;
    one.values_[key] = trim(item);
    out.push_back(one.get_int(key, 0));
  }
  if (out.empty()) { throw ArgumentError(source_ + ": '" + key + "' is an empty list"); }
  return out;
}

void FlatConfig::require_known(std::set<std::string> const &known) const
{
  for (auto const &[k, v] : values_) {
    if (!known.count(k)) { throw ArgumentError(source_ + ": unknown key '" + k + "'"); }
  }
}

} // namespace sgm
