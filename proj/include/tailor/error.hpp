#pragma once

#include <stdexcept>
#include <string>

namespace tailor {

// Raised when a config file is malformed or carries unknown keys.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a resource budget cannot be met even at the compression floor.
struct BudgetError : std::runtime_error {
    explicit BudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a training or search loop produces a non-finite loss.
struct TrainingError : std::runtime_error {
    int epoch;
    TrainingError(const std::string& msg, int epoch_idx)
        : std::runtime_error(msg + " (epoch " + std::to_string(epoch_idx) + ")"),
          epoch(epoch_idx) {}

    // Wraps an already-formatted message without re-appending the epoch tag.
    struct raw_tag {};
    TrainingError(raw_tag, const std::string& full_msg, int epoch_idx)
        : std::runtime_error(full_msg), epoch(epoch_idx) {}
};

}  // namespace tailor
