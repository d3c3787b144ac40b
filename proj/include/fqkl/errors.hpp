#pragma once

#include <stdexcept>
#include <string>

namespace fqkl {

/// Tensor/parameter dimension mismatches.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad or missing configuration (config file keys, CLI arguments).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dataset ingestion problems (missing columns, unknown labels, ...).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class WireFault { BadMagic, BadVersion, UnknownType, Truncated, Oversize };

/// Framing-level protocol violation; `fault` identifies the rejection reason.
struct WireError : std::runtime_error {
  WireFault fault;
  WireError(WireFault f, const std::string& msg) : std::runtime_error(msg), fault(f) {}
};

enum class CheckpointFault { BadMagic, BadVersion, Truncated, DuplicateName, BadDtype };

struct CheckpointError : std::runtime_error {
  CheckpointFault fault;
  CheckpointError(CheckpointFault f, const std::string& msg) : std::runtime_error(msg), fault(f) {}
};

/// Federated-protocol violations above the framing layer (mixed rounds,
/// duplicate client ids, aborted rounds).
struct FedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fqkl
