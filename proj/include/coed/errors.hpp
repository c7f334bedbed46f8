#pragma once

#include <stdexcept>
#include <string>

namespace coed {

// Base for everything the library throws. The CLI maps subclasses to exit
// codes; library users can catch the base.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or out-of-contract configuration input.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// Candidate-table file problems.
class ParseError : public Error {
 public:
  ParseError(long line, const std::string& what)
      : Error("parse error at line " + std::to_string(line) + ": " + what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class NonPsdRow : public Error {
 public:
  explicit NonPsdRow(long index)
      : Error("candidate row " + std::to_string(index) +
              " has a non-PSD information matrix"),
        index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

class DuplicatePoint : public Error {
 public:
  explicit DuplicatePoint(long index)
      : Error("candidate row " + std::to_string(index) +
              " duplicates an earlier point"),
        index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

// Grid descriptors produced no points.
class GridEmpty : public Error {
 public:
  explicit GridEmpty(const std::string& what) : Error(what) {}
};

// ODE integration failures.
class StepUnderflow : public Error {
 public:
  explicit StepUnderflow(const std::string& what) : Error(what) {}
};

class OdeFailure : public Error {
 public:
  explicit OdeFailure(const std::string& what) : Error(what) {}
};

class MoleFractionDegenerate : public Error {
 public:
  explicit MoleFractionDegenerate(const std::string& what) : Error(what) {}
};

// Criterion or sensitivity evaluated outside its domain (singular M).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what) {}
};

// Solver-level failures.
class Infeasible : public Error {
 public:
  explicit Infeasible(const std::string& what) : Error(what) {}
};

class Unbounded : public Error {
 public:
  explicit Unbounded(const std::string& what) : Error(what) {}
};

class MaxIterations : public Error {
 public:
  explicit MaxIterations(const std::string& what) : Error(what) {}
};

// Line search could not keep the information matrix nonsingular.
class DomainEscape : public Error {
 public:
  explicit DomainEscape(const std::string& what) : Error(what) {}
};

class PreflightFailed : public Error {
 public:
  explicit PreflightFailed(const std::string& what) : Error(what) {}
};

class NotFeasible : public Error {
 public:
  explicit NotFeasible(const std::string& what) : Error(what) {}
};

}  // namespace coed
