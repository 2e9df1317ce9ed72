#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kinefit/render.hpp"
#include "kinefit/tensor.hpp"

namespace kinefit {

struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;  // row-major
};

/// Binary PGM (P5, maxval 255). Round-trips byte-exactly.
void write_pgm(const std::filesystem::path& path, const Gray8& image);
Gray8 read_pgm(const std::filesystem::path& path);

/// Quantizes intensities in [0, 1] to 8 bits (round half up after clamp).
Gray8 quantize(const Tensor& image);
/// Inverse of quantize up to the 1/255 grid.
Tensor to_intensity(const Gray8& image);

Gray8 mask_to_gray(const BinaryMask& mask);       // 0 / 255
BinaryMask gray_to_mask(const Gray8& image);      // on iff >= 128

}  // namespace kinefit
