#pragma once

#include <stdexcept>
#include <string>

namespace txt {

// Base error carrying a short category tag used by the CLI when printing
// the final "error: [category] message" line.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(msg), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

// Tensor/layer shape mismatches. Messages name both offending shapes.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

// Violated operation precondition or type invariant.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error("contract", msg) {}
};

// Unknown token, out-of-range id or label.
class VocabError : public Error {
 public:
  explicit VocabError(const std::string& msg) : Error("vocab", msg) {}
};

// Sequence longer than the configured maximum.
class SequenceError : public Error {
 public:
  explicit SequenceError(const std::string& msg) : Error("sequence", msg) {}
};

// Malformed input file or bundle structure.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format", msg) {}
};

// Bundle payload does not match its recorded checksum.
class ChecksumError : public Error {
 public:
  explicit ChecksumError(const std::string& msg) : Error("checksum", msg) {}
};

// Non-finite gradients and other optimization failures.
class TrainError : public Error {
 public:
  explicit TrainError(const std::string& msg) : Error("train", msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

}  // namespace txt
