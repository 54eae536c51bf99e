#pragma once

// Minimal TOML-like reader. Grammar (docs/config.md):
//   document  := { line }
//   line      := blank | comment | section | pair
//   section   := "[" name "]"        name = [A-Za-z0-9_.-]+
//   pair      := key "=" value        key  = [A-Za-z0-9_-]+
//   value     := string | number | "true" | "false" | array
//   string    := '"' chars '"'        escapes \" \\ \n \t
//              | "'" chars "'"        literal, no escapes
//   array     := "[" [ value { "," value } [","] ] "]"   (single line)
//   comment   := "#" to end of line (outside strings)
// The result is a JSON object: top-level keys sit directly in it, each
// section is a nested object under its full dotted name.

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "uapq/error.hpp"

namespace uapq::config {

namespace detail {

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  std::string ident(bool dotted) {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || (dotted && c == '.')) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  nlohmann::json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '\'') return literal();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

 private:
  nlohmann::json string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  nlohmann::json literal() {
    const auto end = s_.find('\'', ++pos_);
    if (end == std::string::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json out = nlohmann::json::array();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      expect(']');
      return out;
    }
  }

  nlohmann::json number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == '-' || s_[pos_] == '+' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    std::erase(tok, '_');
    if (tok.empty()) fail("expected a value");
    const bool integral = tok.find_first_of(".eE") == std::string::npos;
    if (integral) {
      std::int64_t v = 0;
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (r.ec == std::errc() && r.ptr == tok.data() + tok.size()) return v;
    }
    double d = 0.0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), d);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) fail("cannot parse value '" + tok + "'");
    return d;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline nlohmann::json parse(std::string_view text) {
  nlohmann::json doc = nlohmann::json::object();
  nlohmann::json* section = &doc;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    detail::LineParser p(line, line_no);
    if (!p.at_end_or_comment()) {
      if (p.peek() == '[') {
        p.expect('[');
        const std::string name = p.ident(true);
        p.expect(']');
        if (!p.at_end_or_comment()) p.fail("unexpected text after section header");
        if (doc.contains(name)) p.fail("section [" + name + "] defined twice");
        doc[name] = nlohmann::json::object();
        section = &doc[name];
      } else {
        const std::string key = p.ident(false);
        p.expect('=');
        nlohmann::json v = p.value();
        if (!p.at_end_or_comment()) p.fail("unexpected text after value");
        if (section->contains(key)) p.fail("key '" + key + "' set twice");
        (*section)[key] = std::move(v);
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return doc;
}

inline nlohmann::json load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Typed lookups. A missing key yields the fallback; a wrong type is an error
// naming the key.
inline const nlohmann::json* find(const nlohmann::json& section, const std::string& key) {
  if (!section.is_object()) return nullptr;
  const auto it = section.find(key);
  return it == section.end() ? nullptr : &*it;
}

inline std::string get_string(const nlohmann::json& section, const std::string& key, const std::string& where,
                              std::string fallback = {}) {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) throw ConfigError(where + "." + key + " must be a string");
  return v->get<std::string>();
}

inline double get_number(const nlohmann::json& section, const std::string& key, const std::string& where,
                         double fallback) {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw ConfigError(where + "." + key + " must be a number");
  return v->get<double>();
}

inline std::uint64_t get_count(const nlohmann::json& section, const std::string& key, const std::string& where,
                               std::uint64_t fallback) {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
    throw ConfigError(where + "." + key + " must be a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

inline bool get_bool(const nlohmann::json& section, const std::string& key, const std::string& where, bool fallback) {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) throw ConfigError(where + "." + key + " must be true or false");
  return v->get<bool>();
}

inline std::vector<double> get_numbers(const nlohmann::json& section, const std::string& key,
                                       const std::string& where, std::vector<double> fallback) {
  const auto* v = find(section, key);
  if (v == nullptr) return fallback;
  if (!v->is_array()) throw ConfigError(where + "." + key + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number()) throw ConfigError(where + "." + key + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<std::string> get_strings(const nlohmann::json& section, const std::string& key,
                                            const std::string& where) {
  const auto* v = find(section, key);
  if (v == nullptr) return {};
  if (v->is_string()) return {v->get<std::string>()};
  if (!v->is_array()) throw ConfigError(where + "." + key + " must be a string or an array of strings");
  std::vector<std::string> out;
  for (const auto& e : *v) {
    if (!e.is_string()) throw ConfigError(where + "." + key + " must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace uapq::config
