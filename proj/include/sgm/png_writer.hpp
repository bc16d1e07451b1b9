#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace sgm {

/// 8-bit grayscale PNG from a real [H, W] tensor; values are clamped to [0, 1].
void write_png_gray(std::filesystem::path const &file, torch::Tensor const &image);

/// Tiles equally sized [H, W] images into `rows` x `cols` with a gap; missing cells
/// (undefined tensors) stay black.
torch::Tensor tile_images(std::vector<torch::Tensor> const &images, int64_t cols, int64_t gap = 2);

} // namespace sgm
