#pragma once

#include <string>

#include "igd/tensor.hpp"

namespace igd {

// Decodes an image file, resizes to (height, width) with bilinear
// resampling, scales to [0,1]. channels must be 1 (grayscale) or 3 (RGB,
// returned in RGB channel order). Returns [C,H,W].
Tensor load_image_file(const std::string& path, int height, int width, int channels);

// Binary mask companion: decoded grayscale, nearest-resized, thresholded at
// 0.5 to {0,1}. Returns [H,W].
Tensor load_mask_file(const std::string& path, int height, int width);

// Writes an 8-bit grayscale image; values are min-max normalized per image
// (a constant map becomes all zeros).
void save_grayscale_normalized(const std::string& path, const Tensor& map);

// Writes a [C,H,W] image in [0,1] as an 8-bit file (grayscale or RGB).
void save_image_01(const std::string& path, const Tensor& image);

// Raw float map container: "IGDH" magic, u32 height, u32 width, then
// row-major little-endian float32 values.
void save_float_map(const std::string& path, const Tensor& map);
Tensor load_float_map(const std::string& path);

}  // namespace igd
