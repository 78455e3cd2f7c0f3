#include "sparsest/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace sparsest {
namespace {

class LineParser {
 public:
  LineParser(std::string_view s, int line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  std::string key() {
    skip_ws();
    if (peek() == '"') return quoted();
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
            s_[pos_] == '-' || s_[pos_] == '.')) {
      ++pos_;
    }
    if (start == pos_) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  ConfigValue value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return {quoted()};
    if (c == '[') {
      ++pos_;
      ConfigArray arr;
      skip_ws();
      if (peek() == ']') {
        ++pos_;
        return {arr};
      }
      while (true) {
        arr.push_back(value());
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          skip_ws();
          if (peek() == ']') {
            ++pos_;
            break;
          }
          continue;
        }
        if (peek() == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in array");
      }
      return {arr};
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
           s_[pos_] != ' ' && s_[pos_] != '\t') {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return {true};
    if (tok == "false") return {false};
    std::string digits;
    for (char ch : tok) {
      if (ch != '_') digits += ch;
    }
    if (digits.empty()) fail("missing value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos ||
                          digits == "inf" || digits == "+inf" || digits == "-inf" ||
                          digits == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* b = digits.data() + (digits[0] == '+' ? 1 : 0);
      const auto [p, ec] = std::from_chars(b, digits.data() + digits.size(), v);
      if (ec == std::errc() && p == digits.data() + digits.size()) return {v};
      fail("bad integer '" + tok + "'");
    }
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(digits, &used);
    } catch (const std::exception&) {
      fail("bad number '" + tok + "'");
    }
    if (used != digits.size()) fail("bad number '" + tok + "'");
    return {d};
  }

 private:
  std::string quoted() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("dangling escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_;
};

template <class T>
const T& expect_type(const ConfigValue& v, const std::string& key, const char* name) {
  if (const T* p = std::get_if<T>(&v.v)) return *p;
  throw ConfigError("key '" + key + "' must be " + name);
}

}  // namespace

ConfigDoc ConfigDoc::parse(std::string_view text) {
  ConfigDoc doc;
  std::string section;
  int lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    start = end + 1;

    LineParser p(line, lineno);
    if (p.at_end_or_comment()) continue;
    if (p.peek() == '[') {
      p.expect('[');
      section = p.key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.fail("junk after section header");
      continue;
    }
    std::string key = p.key();
    p.expect('=');
    ConfigValue v = p.value();
    if (!p.at_end_or_comment()) p.fail("junk after value");
    if (!section.empty()) key = section + "." + key;
    if (!doc.values_.emplace(key, std::move(v)).second) {
      p.fail("duplicate key '" + key + "'");
    }
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const ConfigValue& ConfigDoc::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

std::int64_t ConfigDoc::get_int(const std::string& key) const {
  return expect_type<std::int64_t>(at(key), key, "an integer");
}

double ConfigDoc::get_double(const std::string& key) const {
  const ConfigValue& v = at(key);
  if (const auto* i = std::get_if<std::int64_t>(&v.v)) return static_cast<double>(*i);
  return expect_type<double>(v, key, "a number");
}

bool ConfigDoc::get_bool(const std::string& key) const {
  return expect_type<bool>(at(key), key, "a boolean");
}

std::string ConfigDoc::get_string(const std::string& key) const {
  return expect_type<std::string>(at(key), key, "a string");
}

std::vector<std::int64_t> ConfigDoc::get_ints(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& e : expect_type<ConfigArray>(at(key), key, "an array")) {
    out.push_back(expect_type<std::int64_t>(e, key, "an array of integers"));
  }
  return out;
}

std::vector<double> ConfigDoc::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& e : expect_type<ConfigArray>(at(key), key, "an array")) {
    if (const auto* i = std::get_if<std::int64_t>(&e.v)) {
      out.push_back(static_cast<double>(*i));
    } else {
      out.push_back(expect_type<double>(e, key, "an array of numbers"));
    }
  }
  return out;
}

std::vector<std::string> ConfigDoc::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : expect_type<ConfigArray>(at(key), key, "an array")) {
    out.push_back(expect_type<std::string>(e, key, "an array of strings"));
  }
  return out;
}

std::int64_t ConfigDoc::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double ConfigDoc::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool ConfigDoc::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::string ConfigDoc::get_string(const std::string& key, std::string fallback) const {
  return has(key) ? get_string(key) : fallback;
}

}  // namespace sparsest
