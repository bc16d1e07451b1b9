#pragma once

// On-disk dataset: <root>/<split>/<record-id>/{xg.cplx, maps.cplx, y.cplx, mask.json, meta.json[, pgi.cplx]}
//
// Each .cplx file is a flat little-endian array of interleaved float32 (re, im) pairs in
// row-major order. meta.json carries the format version, array shapes and generation
// parameters; mask.json carries the line flags and mask metadata.

#include "sgm/mask.hpp"
#include "sgm/operators.hpp"
#include "sgm/phantom.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sgm {

inline constexpr char const *kRecordFormatVersion = "sgmnet-record/1";

struct DatasetRecord
{
  std::string id;
  torch::Tensor xg; // complex64 [H, W]
  SensitivityMaps maps;
  SamplingMask mask;
  torch::Tensor y;                  // complex64 [C, H, W]
  std::optional<torch::Tensor> pgi; // complex64 [H, W]
  nlohmann::json generation;        // seeds and generator parameters, informational

  int64_t height() const { return xg.size(-2); }
  int64_t width() const { return xg.size(-1); }
};

/// Builds one synthetic record from a phantom and an acquisition description.
DatasetRecord generate_record(std::string id, PhantomSpec const &phantom, AcquisitionConfig const &acq);

void write_cplx(std::filesystem::path const &file, torch::Tensor const &t);
/// Reads exactly prod(shape) complex64 values; a size mismatch is a FormatError naming the file.
torch::Tensor read_cplx(std::filesystem::path const &file, std::vector<int64_t> const &shape);

void write_record(DatasetRecord const &record, std::filesystem::path const &split_dir);
DatasetRecord read_record(std::filesystem::path const &split_dir, std::string const &id);

/// Record ids present in a split directory, sorted.
std::vector<std::string> list_records(std::filesystem::path const &split_dir);
/// Loads at most `cap` records (all when cap <= 0), in id order.
std::vector<DatasetRecord> read_split(std::filesystem::path const &split_dir, int64_t cap = 0);

/// Records stacked along a leading batch axis.
struct Batch
{
  std::vector<std::string> ids;
  torch::Tensor xg;   // [N, H, W]
  torch::Tensor maps; // [N, C, H, W]
  torch::Tensor mask; // [N, 1, 1, W]
  torch::Tensor y;    // [N, C, H, W]
  torch::Tensor pgi;  // [N, H, W], undefined if any record lacks one
  torch::Tensor zero_filled() const;
  int64_t size() const { return static_cast<int64_t>(ids.size()); }
  Batch to(torch::ScalarType real_dtype) const;
};

Batch make_batch(std::span<DatasetRecord const> records);
Batch make_batch(std::span<DatasetRecord const> records, std::span<int64_t const> indices);

} // namespace sgm
