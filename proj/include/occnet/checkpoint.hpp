#pragma once

#include <optional>
#include <string>

#include "occnet/error.hpp"
#include "occnet/network.hpp"

namespace occnet {

inline constexpr int kCheckpointVersion = 1;

enum class CheckpointErrorKind { bad_magic, truncated, version_mismatch, shape_mismatch, malformed };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  CheckpointError(CheckpointErrorKind kind, const std::string& what, std::string tensor)
      : Error(what), kind_(kind), tensor_(std::move(tensor)) {}
  CheckpointErrorKind kind() const { return kind_; }
  // Name of the offending tensor for shape mismatches.
  const std::string& tensor() const { return tensor_; }

 private:
  CheckpointErrorKind kind_;
  std::string tensor_;
};

// Layout:
//   "OCCKPT\n" "version 1\n"
//   "config <bytes>\n" <NetworkConfig text>
//   "step <n>\n" "rng <bytes>\n" <generator state>
//   "tensors <count>\n" then per tensor "<name>\n" and a raw tensor record (float32).
void save_checkpoint(const Model& model, const std::string& path);

// With `expected`, every tensor must also match the shapes that config would build.
Model load_checkpoint(const std::string& path, const std::optional<NetworkConfig>& expected = std::nullopt);

}  // namespace occnet
