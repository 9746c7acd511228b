#pragma once

#include <stdexcept>
#include <string>

namespace ga {

/// Dimension mismatch between operands; the message names both shapes.
class ShapeError : public std::runtime_error {
  public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A grouping violated its contract (empty group, assignment out of range, ...).
class InvalidGroupingError : public std::runtime_error {
  public:
    explicit InvalidGroupingError(const std::string& what) : std::runtime_error(what) {}
};

/// Attention matrix unusable for a ratio check (zero or non-finite entry).
class DegenerateAttentionError : public std::runtime_error {
  public:
    explicit DegenerateAttentionError(const std::string& what) : std::runtime_error(what) {}
};

/// A caller broke a documented precondition (e.g. masking unscaled data).
class ContractError : public std::runtime_error {
  public:
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// A function evaluation produced a non-finite value.
class EvalError : public std::runtime_error {
  public:
    explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace ga
