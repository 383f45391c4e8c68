#pragma once

#include <stdexcept>
#include <cstdint>
#include <string>

namespace gspde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Two grids (or time steps) that do not nest.
class IncommensurableGrids : public Error {
public:
    explicit IncommensurableGrids(const std::string& what)
        : Error("incommensurable grids: " + what) {}
};

class QuadratureError : public Error {
public:
    QuadratureError(const std::string& what, std::size_t row, std::size_t col, double estimate)
        : Error(what), row_(row), col_(col), estimate_(estimate) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }
    double error_estimate() const noexcept { return estimate_; }

private:
    std::size_t row_;
    std::size_t col_;
    double estimate_;
};

/// A state or increment entry became NaN or infinite.
class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, std::size_t cell)
        : Error(what), cell_(cell) {}

    std::size_t cell() const noexcept { return cell_; }

private:
    std::size_t cell_;
};

/// A Monte Carlo trial failed; carries what is needed to replay it.
class TrialError : public Error {
public:
    TrialError(const std::string& what, std::size_t trial, std::uint64_t seed)
        : Error(what), trial_(trial), seed_(seed) {}

    std::size_t trial() const noexcept { return trial_; }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::size_t trial_;
    std::uint64_t seed_;
};

}  // namespace gspde
