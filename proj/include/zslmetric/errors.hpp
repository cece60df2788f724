#ifndef ZSLMETRIC_ERRORS_HPP
#define ZSLMETRIC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace zslmetric {

// Shape/dimension conformance failures (matmul inner dims, elementwise shapes).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric domain violations: log of nonpositive, division by zero, non-finite
// results produced from finite inputs.
struct DomainError : std::domain_error {
  explicit DomainError(const std::string& msg) : std::domain_error(msg) {}
};

// Out-of-range hyperparameters (dropout rate, margins, smoothing factors).
struct ParamError : std::invalid_argument {
  explicit ParamError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Broken call contracts: non-scalar backward roots, label out of range,
// empty batches where data is required.
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Invalid model/experiment configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external data (IDX files, checkpoints, config text).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// ZSL protocol violations (train/test class overlap).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint incompatible with the requested configuration.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace zslmetric

#endif  // ZSLMETRIC_ERRORS_HPP
