#pragma once

#include <stdexcept>
#include <string>

namespace stratx {

// Invalid argument to a numerical routine (x < 0, df < 1, p outside (0,1), ...).
struct DomainError : std::invalid_argument {
    explicit DomainError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Cholesky pivot fell below tolerance; carries the index of the failing pivot
// so callers know which covariate to drop.
struct RankDeficient : std::runtime_error {
    int pivot_index;
    explicit RankDeficient(int pivot, const std::string& msg)
        : std::runtime_error(msg), pivot_index(pivot) {}
};

// Rerandomization rejected every candidate assignment within the draw budget.
struct MaxDrawsExceeded : std::runtime_error {
    int draws;
    explicit MaxDrawsExceeded(int d, const std::string& msg)
        : std::runtime_error(msg), draws(d) {}
};

// Coordinate descent failed to converge within the sweep budget.
struct MaxIters : std::runtime_error {
    explicit MaxIters(const std::string& msg) : std::runtime_error(msg) {}
};

// n_z <= s_hat(z) + 1: the degrees-of-freedom correction would be undefined
// or negative. Never clamped; the caller must reduce the model.
struct DegreesOfFreedomExhausted : std::runtime_error {
    explicit DegreesOfFreedomExhausted(const std::string& msg) : std::runtime_error(msg) {}
};

// CSV parse failure with 1-based row/column location (row 1 is the header).
struct CsvError : std::runtime_error {
    int row;
    int col;
    CsvError(int r, int c, const std::string& msg)
        : std::runtime_error(msg), row(r), col(c) {}
};

}  // namespace stratx
