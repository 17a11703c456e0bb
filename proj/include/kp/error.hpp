#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid caller input (bad sizes, out-of-range ranks, mismatched partitions).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A violated internal invariant. Seeing one of these is a bug, not bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised at the sender when the receiving node has failed.
class DeliveryFailure : public Error {
 public:
  DeliveryFailure(int from, int to)
      : Error("node " + std::to_string(from) + " cannot deliver to failed node " +
              std::to_string(to)),
        from_(from), to_(to) {}
  int from() const noexcept { return from_; }
  int to() const noexcept { return to_; }

 private:
  int from_, to_;
};

/// A collective could not complete because participants failed.
class ReductionFailure : public Error {
 public:
  explicit ReductionFailure(std::vector<int> failed)
      : Error("reduction aborted: participant failure"), failed_(std::move(failed)) {}
  const std::vector<int>& failed_ranks() const noexcept { return failed_; }

 private:
  std::vector<int> failed_;
};

/// Numerical breakdown of a Krylov recurrence, naming the offending scalar.
class Breakdown : public Error {
 public:
  Breakdown(std::string scalar, int iteration, double value)
      : Error("breakdown in " + scalar + " at iteration " + std::to_string(iteration) +
              " (value " + std::to_string(value) + "); input is probably not SPD"),
        scalar_(std::move(scalar)), iteration_(iteration) {}
  const std::string& scalar() const noexcept { return scalar_; }
  int iteration() const noexcept { return iteration_; }

 private:
  std::string scalar_;
  int iteration_;
};

/// More simultaneous failures than the redundancy level covers, or data needed for
/// recovery no longer exists anywhere in the cluster.
class UnrecoverableFailure : public Error {
 public:
  using Error::Error;
};

/// A local system inside recovery could not be solved to tolerance.
class LocalSolveError : public Error {
 public:
  using Error::Error;
};

}  // namespace kp
