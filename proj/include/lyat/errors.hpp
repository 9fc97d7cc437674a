/* Copyright 2026 The LyAT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace lyat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or config-file content. `key_path` names the
// offending entry (e.g. "arch.H") when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string key_path = {})
      : Error(key_path.empty() ? what : key_path + ": " + what),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

// Non-finite value or broken numeric precondition. `where` is a location
// such as "encoder[0].attention[1].head[2]" or "physics step 1234".
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string where)
      : Error(what + " at " + where), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient control effectiveness or similar; the control step aborts.
class ControlError : public Error {
 public:
  using Error::Error;
};

}  // namespace lyat
