/*
 * Copyright 2026 The hetfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hetfed {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or dataset shapes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its documented domain (negative counts, alpha > 1, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where all values must be finite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents: bad magic, truncation, unparseable rows.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Schema version of a file does not match what this reader understands.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A partition plan that cannot be realized on the given data.
class InfeasiblePlan : public Error {
 public:
  using Error::Error;
};

/// Run configuration failed validation. Carries one diagnostic per bad field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics)
      : Error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid configuration:";
    for (const auto& item : items) {
      out += "\n  ";
      out += item;
    }
    return out;
  }

  std::vector<std::string> diagnostics_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail
}  // namespace hetfed
