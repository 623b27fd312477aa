// ekd/errors.hpp

// Copyright 2026  The EKD Authors

// See ../../LICENSE for clarification regarding multiple authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef EKD_ERRORS_HPP_
#define EKD_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ekd {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible. The message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside an operation's mathematical domain (empty softmax, d < 2 ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API misuse: non-scalar loss, mode mismatch, backward into a frozen tensor.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Teachers disagree on width, length or tap set.
class EnsembleShapeError : public Error {
 public:
  using Error::Error;
};

/// Waveform shorter than one analysis window.
class InputTooShortError : public Error {
 public:
  using Error::Error;
};

/// Zero-power signal passed to an additive distortion.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed file. Carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string &what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// File format version is not the one this build reads.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Stored tensors do not match the configuration that describes them.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace ekd

#endif  // EKD_ERRORS_HPP_
