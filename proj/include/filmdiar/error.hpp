// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace filmdiar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a type invariant (bad interval, bad label, bad config).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input document. `location()` is the 1-based line number for
/// line-oriented formats or the 0-based element index for array documents.
class ParseError : public Error {
 public:
  ParseError(const std::string &what, std::size_t location)
      : Error(what), location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

/// Operation-level failure that is not an input syntax problem
/// (e.g. nothing left to score after collars are applied).
class ScoringError : public Error {
 public:
  using Error::Error;
};

/// Non-fatal diagnostics collected while processing.
struct Warnings {
  std::vector<std::string> messages;

  void add(std::string message) { messages.push_back(std::move(message)); }
  bool empty() const noexcept { return messages.empty(); }
  std::size_t size() const noexcept { return messages.size(); }
};

}  // namespace filmdiar
