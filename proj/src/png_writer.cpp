#include "sgm/png_writer.hpp"

#include "sgm/errors.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace sgm {

namespace {

void emit_rows(png_structp png, png_infop info, torch::Tensor const &px)
{
  auto const h = px.size(0), w = px.size(1);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto const *data = px.data_ptr<uint8_t>();
  for (int64_t r = 0; r < h; ++r) { png_write_row(png, data + r * w); }
  png_write_end(png, nullptr);
}

} // namespace

void write_png_gray(std::filesystem::path const &file, torch::Tensor const &image)
{
  if (image.dim() != 2 || image.is_complex()) { throw ShapeError("png: expected a real [H, W] image"); }
  auto const px = (image.detach().to(torch::kDouble).clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();

  std::unique_ptr<FILE, int (*)(FILE *)> fp(std::fopen(file.c_str(), "wb"), &std::fclose);
  if (!fp) { throw IoError(file, "cannot open for writing"); }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(file, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(file, "libpng write failed");
  }
  png_init_io(png, fp.get());
  emit_rows(png, info, px);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor tile_images(std::vector<torch::Tensor> const &images, int64_t cols, int64_t gap)
{
  int64_t h = 0, w = 0;
  for (auto const &im : images) {
    if (im.defined()) {
      h = im.size(0);
      w = im.size(1);
      break;
    }
  }
  if (h == 0 || cols < 1) { throw ArgumentError("tile_images: nothing to tile"); }
  auto const n = static_cast<int64_t>(images.size());
  auto const rows = (n + cols - 1) / cols;
  auto canvas = torch::zeros({rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap}, torch::kDouble);
  for (int64_t i = 0; i < n; ++i) {
    auto const &im = images[static_cast<size_t>(i)];
    if (!im.defined()) { continue; }
    if (im.size(0) != h || im.size(1) != w) { throw ShapeError("tile_images: images differ in size"); }
    auto const r = i / cols, c = i % cols;
    canvas.narrow(0, r * (h + gap), h).narrow(1, c * (w + gap), w).copy_(im.to(torch::kDouble));
  }
  return canvas;
}

} // namespace sgm
