/*
 * Copyright 2026 The DERM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace derm {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A scalar argument lies outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Input lies outside the domain of a function (e.g. negative loss under a log).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite value reached an operation that refuses to propagate it.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A ForwardCache was used with parameters or a batch it was not built from.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `row` is 1-based; 0 when the problem is not tied to a row.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error(row == 0 ? what : "row " + std::to_string(row) + ": " + what),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(std::size_t epoch, std::size_t batch)
      : Error("training diverged: non-finite loss at epoch " +
              std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

// A metric is not defined for the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace derm
