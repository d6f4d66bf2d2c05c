#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rilm/nn.hpp"

namespace rilm {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// On-disk layout:
//   "RILMCKPT" | u32 version (=1) | u64 header length | header | payload
// The header is a JSON document {"model_kind", "config", "manifest"} where
// each manifest entry carries name, shape and byte offset into the payload.
// The payload is the concatenation of all tensors as little-endian float64.
struct Checkpoint {
  std::string model_kind;  // "lm" or "asr"
  nlohmann::ordered_json config;
  std::vector<NamedArray> tensors;

  const NamedArray* find(const std::string& name) const;
  NamedArray* find(const std::string& name);
};

inline constexpr char kCheckpointMagic[8] = {'R', 'I', 'L', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies current parameter values into a checkpoint.
Checkpoint snapshot(const std::string& model_kind, nlohmann::ordered_json config,
                    const nn::NamedTensors& params);
// Writes checkpoint values into live parameters; names and shapes must match.
void restore(const Checkpoint& ckpt, const nn::NamedTensors& params);

// Element-wise mean over checkpoints with identical manifests. Uses a running
// mean so that averaging copies of one checkpoint reproduces it exactly.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts);
Checkpoint average_checkpoint_files(const std::vector<std::string>& paths);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace rilm
