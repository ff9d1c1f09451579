#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fracwave {

/// Parameter outside the mathematical domain of an operation.
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A contour node or resolvent argument landed on the spectrum of the model.
class spectral_collision : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The hypotheses of the theorem backing a computation do not hold.
class regime_violation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picard iteration exhausted its budget; carries the increment history.
class nonconvergence : public std::runtime_error {
public:
    nonconvergence(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), history_(std::move(history)) {}

    [[nodiscard]] const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace fracwave
