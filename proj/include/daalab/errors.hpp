// Copyright 2026 The DAA Lab Authors.
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

#include <stdexcept>
#include <string>

namespace daalab {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a tree has too many trajectories to enumerate exactly.
class EnumerabilityError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration, manifest, or input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid argument to an operation (empty dataset, bad trajectory, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A differentiable primitive produced a non-finite value.
class NumericDomainError : public Error {
 public:
  NumericDomainError(std::string primitive, const std::string& what)
      : Error(primitive + ": " + what), primitive_(std::move(primitive)) {}

  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

// A least-squares design or a sample is degenerate (rank deficiency,
// zero variance, a policy that cannot produce distinct pairs).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// KL divergence with a support violation.
class InfiniteDivergence : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(long step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace daalab
