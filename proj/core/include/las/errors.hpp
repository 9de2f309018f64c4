#pragma once

#include <stdexcept>
#include <string>

namespace las {

// Numeric-domain problems (NaN/Inf where finite values are required).
class NumericError : public std::domain_error {
 public:
  explicit NumericError(const std::string& what) : std::domain_error(what) {}
};

// Filesystem / stream failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally broken input (bad magic, truncated header, wrong encoding).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Text-format parse failure; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Bad key/value in a configuration file; names the key and line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, long line, const std::string& what)
      : std::runtime_error("config key '" + key + "' (line " + std::to_string(line) + "): " + what),
        key_(key),
        line_(line) {}
  const std::string& key() const { return key_; }
  long line() const { return line_; }

 private:
  std::string key_;
  long line_;
};

}  // namespace las
