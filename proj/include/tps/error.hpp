#pragma once

#include <stdexcept>
#include <string>

namespace tps {

/// Base of every error raised by the library. The category decides the CLI
/// exit code: validation problems map to 2, truncation/guard failures to 3 and
/// numerical failures to 4.
class Error : public std::runtime_error {
public:
  enum class Category { Validation, Truncation, Numerical };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

private:
  Category category_;
};

class InvalidTruncation : public Error {
public:
  explicit InvalidTruncation(const std::string& what) : Error(Category::Validation, what) {}
};

/// Coherent-state or Fock-space cutoff too small for the requested accuracy.
class TruncationTooSmall : public Error {
public:
  TruncationTooSmall(const std::string& what, double tail_weight)
      : Error(Category::Truncation, what), tail_weight_(tail_weight) {}
  double tail_weight() const noexcept { return tail_weight_; }

private:
  double tail_weight_;
};

class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& what) : Error(Category::Validation, what) {}
};

class InvalidOrder : public Error {
public:
  explicit InvalidOrder(const std::string& what) : Error(Category::Validation, what) {}
};

class MomentSpecError : public Error {
public:
  explicit MomentSpecError(const std::string& what) : Error(Category::Validation, what) {}
};

class IndexOutOfRange : public Error {
public:
  explicit IndexOutOfRange(const std::string& what) : Error(Category::Validation, what) {}
};

class DegenerateNormalization : public Error {
public:
  explicit DegenerateNormalization(const std::string& what) : Error(Category::Numerical, what) {}
};

class IntegratorFailure : public Error {
public:
  IntegratorFailure(const std::string& what, double time)
      : Error(Category::Numerical, what), time_(time) {}
  double time() const noexcept { return time_; }

private:
  double time_;
};

class InvalidState : public Error {
public:
  explicit InvalidState(const std::string& what) : Error(Category::Numerical, what) {}
};

class UnphysicalCovariance : public Error {
public:
  explicit UnphysicalCovariance(const std::string& what) : Error(Category::Numerical, what) {}
};

class GridTooSmall : public Error {
public:
  GridTooSmall(const std::string& what, double boundary_value)
      : Error(Category::Truncation, what), boundary_value_(boundary_value) {}
  double boundary_value() const noexcept { return boundary_value_; }

private:
  double boundary_value_;
};

class GuardViolation : public Error {
public:
  explicit GuardViolation(const std::string& what) : Error(Category::Truncation, what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(Category::Validation, what) {}
};

}  // namespace tps
