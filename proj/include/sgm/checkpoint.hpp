#pragma once

// Checkpoint directory:
//   params.bin     every parameter and buffer, contiguous little-endian, back to back
//   manifest.json  format version, kind, caller metadata and a tensor table
//                  (name, dtype, shape, byte offset, byte count)

#include "json.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

namespace sgm {

inline constexpr char const *kCheckpointFormatVersion = "sgmnet-checkpoint/1";

struct Checkpoint
{
  std::string kind;
  nlohmann::json meta;
  std::map<std::string, torch::Tensor> tensors;
};

/// Writes parameters and buffers of `module` (named as in named_parameters/named_buffers).
void save_checkpoint(std::filesystem::path const &dir, std::string const &kind, nlohmann::json const &meta,
                     torch::nn::Module const &module);

/// IoError when files are missing, FormatError on a malformed manifest or blob.
Checkpoint load_checkpoint(std::filesystem::path const &dir);
/// Same, and checks the kind.
Checkpoint load_checkpoint(std::filesystem::path const &dir, std::string const &expected_kind);

/// Copies tensors into the module by name; every parameter and buffer must be present
/// with a matching shape. Values are cast to the module's dtype.
void restore(Checkpoint const &ckpt, torch::nn::Module &module);

} // namespace sgm
