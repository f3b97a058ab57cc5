#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ma2 {

// Base class for every failure the toolkit reports. `kind()` is the stable
// error-class name written to sweep records and CLI output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class DegenerateEigenvalue : public Error {
public:
    DegenerateEigenvalue(int k, double gap)
        : Error("DegenerateEigenvalue",
                "eigenvalue " + std::to_string(k) + " is not simple (gap " + std::to_string(gap) + ")"),
          k_(k), gap_(gap) {}

    int index() const noexcept { return k_; }
    double gap() const noexcept { return gap_; }

private:
    int k_;
    double gap_;
};

class StepTooLarge : public Error {
public:
    StepTooLarge(double step, double gap)
        : Error("StepTooLarge", "finite-difference step " + std::to_string(step) +
                                    " too large for eigenvalue gap " + std::to_string(gap)) {}
};

// Carries the offending matrix (row-major) for diagnostics.
class EigenNonConvergence : public Error {
public:
    EigenNonConvergence(int n, std::vector<double> entries)
        : Error("EigenNonConvergence", "symmetric eigensolver did not converge for a " +
                                           std::to_string(n) + "x" + std::to_string(n) + " matrix"),
          n_(n), entries_(std::move(entries)) {}

    int dimension() const noexcept { return n_; }
    const std::vector<double>& entries() const noexcept { return entries_; }

private:
    int n_;
    std::vector<double> entries_;
};

class NotConvex : public Error {
public:
    explicit NotConvex(const std::string& what) : Error("NotConvex", what) {}
};

class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, std::vector<double> history)
        : Error("NonConvergence", what), history_(std::move(history)) {}

    // Residual norm per accepted Newton iterate.
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class ConvexityLost : public Error {
public:
    ConvexityLost(const std::string& what, std::vector<double> history)
        : Error("ConvexityLost", what), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class InsufficientSample : public Error {
public:
    explicit InsufficientSample(const std::string& what) : Error("InsufficientSample", what) {}
};

class NotCheckable : public Error {
public:
    explicit NotCheckable(const std::string& reason) : Error("NotCheckable", reason) {}
};

class MixedClass : public Error {
public:
    explicit MixedClass(const std::string& what) : Error("MixedClass", what) {}
};

class InsufficientData : public Error {
public:
    explicit InsufficientData(const std::string& what) : Error("InsufficientData", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("IoError", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

}  // namespace ma2
