#pragma once

#include <stdexcept>
#include <string>

namespace ruledist {

// Error taxonomy shared across the library; the CLI maps these onto exit
// codes (usage/config -> 1, data -> 2, anything else -> 3).

// Invalid user-supplied configuration (bad ranges, negative counts, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent data: unreadable files, missing benchmark rows,
// instances too large for the exhaustive solver.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A violated precondition. These indicate bugs in the caller, not control
// flow; they are never expected in a correct program.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Tensor shape incompatibility; message carries both shapes.
class ShapeError : public ContractError {
public:
    explicit ShapeError(const std::string& what) : ContractError(what) {}
};

// Unreadable, truncated or incompatible checkpoint files.
class CheckpointError : public DataError {
public:
    explicit CheckpointError(const std::string& what) : DataError(what) {}
};

// Training diverged (non-finite losses); carries a diagnostic dump.
class TrainingError : public std::runtime_error {
public:
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ruledist
