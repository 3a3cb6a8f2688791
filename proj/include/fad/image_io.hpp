// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fad/tensor.hpp"

namespace fad {

/// [-1,1] -> [0,255] affine map with round-half-to-even; out-of-range input
/// is clamped first.
uint8_t diffusion_to_byte(float x);

/// [0,255] -> [-1,1]: b * 2/255 - 1 (exact inverse convention of the writer).
float byte_to_diffusion(uint8_t b);

std::vector<uint8_t> image_to_bytes(const TensorF& img);          // (1,H,W)
TensorF bytes_to_image(const std::vector<uint8_t>& b, int h, int w);

/// Deterministic grayscale PNG encoder (stored deflate blocks): identical
/// pixels always produce identical bytes, independent of any zlib version.
std::string encode_gray_png(const uint8_t* pixels, int width, int height);

/// Encode + atomic write.
void write_gray_png(const std::filesystem::path& path, const uint8_t* pixels,
                    int width, int height);

struct LoadedImage {
    int width = 0;
    int height = 0;
    std::vector<double> unit;  // luminance in [0,1], row-major
};

/// Reads any libpng-supported PNG; color input is reduced by the 0.299 /
/// 0.587 / 0.114 luminance weights. Grayscale bytes round-trip exactly.
LoadedImage load_png_unit(const std::filesystem::path& path);

}  // namespace fad
