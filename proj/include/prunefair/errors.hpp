#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace prunefair {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or input shapes that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or arguments.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss during SGD. `step` is the optimizer step (batch) index
/// within the training call; `prune_iteration` is filled in by the pruning
/// loop when the failure happens while retraining.
class TrainingDivergence : public Error {
public:
    TrainingDivergence(std::size_t step, long prune_iteration = -1)
        : Error(make_message(step, prune_iteration)), step_(step),
          prune_iteration_(prune_iteration) {}

    std::size_t step() const noexcept { return step_; }
    long prune_iteration() const noexcept { return prune_iteration_; }

    TrainingDivergence at_iteration(long iteration) const {
        return TrainingDivergence(step_, iteration);
    }

private:
    static std::string make_message(std::size_t step, long prune_iteration) {
        std::string msg = "training diverged (non-finite loss) at step " + std::to_string(step);
        if (prune_iteration >= 0)
            msg += " of pruning iteration " + std::to_string(prune_iteration);
        return msg;
    }

    std::size_t step_;
    long prune_iteration_;
};

/// Malformed input file. `position` is a byte offset for binary formats and
/// a 1-based line number for text formats.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Design matrix without full column rank.
class RankDeficiency : public Error {
public:
    RankDeficiency(const std::string& what, std::vector<std::string> columns)
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

/// No candidate survives the accuracy constraint.
class EmptyFeasibleSet : public Error {
public:
    using Error::Error;
};

/// A computation needed a value that is undefined (for example the accuracy
/// of a class with no evaluation examples).
class UndefinedValue : public Error {
public:
    using Error::Error;
};

}  // namespace prunefair
