// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace deband {

// All failures surface as one of these; the code string is what the CLI
// prints as its machine-parsable prefix (e.g. "error: E_DIM: ...").
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("E_DIM", m) {}
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& m) : Error("E_ARG", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("E_IO", m) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("E_FORMAT", m) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& m) : Error("E_CKPT", m) {}
};

struct TrainError : Error {
  explicit TrainError(const std::string& m) : Error("E_TRAIN", m) {}
};

}  // namespace deband
