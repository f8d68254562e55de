#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ran/model.hpp"

namespace ran {

// Little-endian binary layout:
//   "RANCKPT1"                          8 bytes
//   version                             u32
//   config: variant u32, num_classes u32, backbone count u32 + u32 each,
//           decision_kernel u32, decision_dilation u32,
//           loss weights 3 x f64, stop_grad_attention u8, seed u64
//   parameters                          tensor list
//   iteration                           u64
//   momentum buffers                    tensor list
// A tensor list is: count u32, then per tensor name_len u32, name bytes,
// rank u32, dims u32 x rank, float32 data.

inline constexpr char kCheckpointMagic[8] = {'R', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  RanConfig config;
  std::vector<NamedTensor> parameters;
  std::uint64_t iteration = 0;
  std::vector<NamedTensor> momentum;

  static Checkpoint from_model(const RanModel& model, std::uint64_t iteration = 0,
                               const std::vector<ArrayXd>& momentum = {});
  RanModel to_model() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes via a temporary file and rename so readers never see a partial file.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
void save_checkpoint(const RanModel& model, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ran
