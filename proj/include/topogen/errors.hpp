#pragma once

#include <stdexcept>
#include <string>

namespace topogen {

// Base class for every failure the toolkit raises on purpose.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Caller handed us data that violates a precondition (shape, range, index).
class InvalidInputError : public Error {
public:
  using Error::Error;
};

// The problem itself is ill posed (e.g. unconstrained rigid body motion).
class IllPosedError : public Error {
public:
  using Error::Error;
};

// An iterative solver gave up; carries the last relative residual.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

private:
  double residual_ = 0.0;
};

// Volume constraint cannot be met inside the current move limits.
class InfeasibleVolumeError : public Error {
public:
  using Error::Error;
};

class InvalidConfigError : public Error {
public:
  using Error::Error;
};

// Malformed file content; message carries file and offset where known.
class ParseError : public Error {
public:
  using Error::Error;
};

// Structurally valid file whose content violates an invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

// Training diverged; carries the step at which it happened.
class TrainingError : public Error {
public:
  TrainingError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const { return step_; }

private:
  long step_ = 0;
};

class InvalidBaselineError : public Error {
public:
  using Error::Error;
};

class EmptySplitError : public Error {
public:
  using Error::Error;
};

}  // namespace topogen
