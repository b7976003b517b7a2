//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef LASTMILE_ERROR_HPP_
#define LASTMILE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace lastmile {

// Base class for every error raised by the library. Callers that do not care
// about the category can catch this alone.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes incompatible with a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (misaligned lengths, non-scalar
// loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Sequence longer than the model's positional capacity.
class LengthError : public Error {
 public:
  using Error::Error;
};

class MalformedRecordError : public Error {
 public:
  MalformedRecordError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

// A negative category cannot be built from the given source set.
class InfeasibleCategoryError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was started before the stage producing its inputs.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& path, const std::string& producer)
      : Error("missing artifact '" + path + "'; run `" + producer +
              "` first"),
        producer_(producer) {}
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

}  // namespace lastmile

#endif  // LASTMILE_ERROR_HPP_
