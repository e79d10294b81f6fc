/* Copyright 2026 The MonoPix Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "monopix/tensor.hpp"

namespace monopix {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;

/// Raw decoded PNG: row-major interleaved samples, 8 or 16 bits.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (RGB); alpha is dropped
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

RasterImage decode_png(const Bytes& png);
Bytes encode_png(const RasterImage& image);

/// [-1, 1] floats to 8-bit levels: round((v + 1) / 2 * 255), clamped.
std::uint8_t to_level(float v);
/// 8-bit level back to [-1, 1]: v / 255 * 2 - 1.
float from_level(std::uint8_t level);

/// 1xCxHxW image in [-1, 1] to an 8-bit PNG (C = 1 or 3).
Bytes image_to_png(const ImageBatch<float>& image);
/// PNG to a 1x3xHxW image in [-1, 1]; gray inputs are replicated to 3 channels.
ImageBatch<float> png_to_image(const Bytes& png);

/// Grayscale PNG mapped linearly onto [lo, hi]: 0 to lo, full scale to hi.
Tensor<float> png_to_control_values(const Bytes& png, double lo, double hi);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

std::string base64_encode(const Bytes& bytes);
/// Throws IoError on malformed input.
Bytes base64_decode(std::string_view text);

std::string sha256_hex(const std::uint8_t* data, std::size_t size);
inline std::string sha256_hex(const Bytes& bytes) { return sha256_hex(bytes.data(), bytes.size()); }

/// Bilinear resize (half-pixel centers) of every sample and channel.
ImageBatch<float> resize_bilinear(const ImageBatch<float>& image, int height, int width);

}  // namespace monopix
