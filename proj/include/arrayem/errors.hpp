#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace arrayem {

using Index = Eigen::Index;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: bad shapes, out-of-range indices, length mismatches.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed data file. `row` is the 1-based line number in the file (0 when unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& path, long row, const std::string& what)
        : Error(path + (row > 0 ? ":" + std::to_string(row) : std::string()) + ": " + what),
          row_(row) {}
    [[nodiscard]] long row() const noexcept { return row_; }

private:
    long row_;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// A covariance factor failed its Cholesky factorization.
class NotPositiveDefinite : public NumericalError {
public:
    NotPositiveDefinite(Index dimension, const std::string& what)
        : NumericalError("dimension " + std::to_string(dimension + 1) + ": " + what),
          dimension_(dimension) {}
    /// 0-based dimension index.
    [[nodiscard]] Index dimension() const noexcept { return dimension_; }

private:
    Index dimension_;
};

/// Too few effective columns (or all-zero residuals) to estimate a covariance factor.
class RankDeficient : public NumericalError {
public:
    RankDeficient(Index dimension, const std::string& what)
        : NumericalError("dimension " + std::to_string(dimension + 1) + ": " + what),
          dimension_(dimension) {}
    [[nodiscard]] Index dimension() const noexcept { return dimension_; }

private:
    Index dimension_;
};

/// The observed-block covariance of one observation is numerically singular.
class ConditioningError : public NumericalError {
public:
    ConditioningError(Index observation, const std::string& what)
        : NumericalError("observation " + std::to_string(observation + 1) + ": " + what),
          observation_(observation),
          detail_(what) {}
    [[nodiscard]] Index observation() const noexcept { return observation_; }
    /// The message without the observation prefix.
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    Index observation_;
    std::string detail_;
};

class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SizeLimitExceeded : public Error {
public:
    using Error::Error;
};

}  // namespace arrayem
