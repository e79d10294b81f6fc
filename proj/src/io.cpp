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

#include "monopix/io.hpp"

#include <png.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace monopix {

namespace {

struct ReadCursor {
  const Bytes* data;
  std::size_t pos;
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t count) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + count > cur->data->size()) png_error(png, "truncated PNG data");
  std::memcpy(out, cur->data->data() + cur->pos, count);
  cur->pos += count;
}

void png_write_bytes(png_structp png, png_bytep in, png_size_t count) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + count);
}

void png_flush_noop(png_structp) {}

void png_error_throw(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

RasterImage decode_png(const Bytes& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (png == nullptr) throw IoError("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  RasterImage out;
  try {
    if (info == nullptr) throw IoError("png: cannot allocate info");
    ReadCursor cur{&bytes, 0};
    png_set_read_fn(png, &cur, png_read_bytes);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // host order on little-endian machines
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    if (out.channels != 1 && out.channels != 3) throw IoError("png: unsupported channel layout");
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> buf(row_bytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + row_bytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(count);
    if (out.bit_depth == 16) {
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t v;
        std::memcpy(&v, buf.data() + 2 * i, 2);
        out.samples[i] = v;
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) out.samples[i] = buf[i];
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

Bytes encode_png(const RasterImage& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("encode_png: channels must be 1 or 3");
  if (image.bit_depth != 8 && image.bit_depth != 16) throw IoError("encode_png: bit depth must be 8 or 16");
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (image.samples.size() != count) throw IoError("encode_png: sample count mismatch");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (png == nullptr) throw IoError("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  Bytes out;
  try {
    if (info == nullptr) throw IoError("png: cannot allocate info");
    png_set_write_fn(png, &out, png_write_bytes, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height),
                 image.bit_depth, image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int bytes_per = image.bit_depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(image.width) * image.channels * bytes_per;
    std::vector<std::uint8_t> row(row_bytes);
    for (int y = 0; y < image.height; ++y) {
      const std::size_t base = static_cast<std::size_t>(y) * image.width * image.channels;
      for (std::size_t i = 0; i < static_cast<std::size_t>(image.width) * image.channels; ++i) {
        const std::uint16_t v = image.samples[base + i];
        if (bytes_per == 1) {
          row[i] = static_cast<std::uint8_t>(v);
        } else {
          row[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
          row[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

std::uint8_t to_level(float v) {
  const double x = std::round((static_cast<double>(v) + 1.0) * 0.5 * 255.0);
  return static_cast<std::uint8_t>(std::clamp(x, 0.0, 255.0));
}

float from_level(std::uint8_t level) { return static_cast<float>(level / 255.0 * 2.0 - 1.0); }

Bytes image_to_png(const ImageBatch<float>& image) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3)) {
    throw ShapeError("image_to_png expects 1x1xHxW or 1x3xHxW, got " + image.shape().str());
  }
  RasterImage r{image.w(), image.h(), image.c(), 8, {}};
  r.samples.resize(static_cast<std::size_t>(image.size()));
  for (int y = 0; y < image.h(); ++y) {
    for (int x = 0; x < image.w(); ++x) {
      for (int c = 0; c < image.c(); ++c) {
        r.samples[(static_cast<std::size_t>(y) * image.w() + x) * image.c() + c] = to_level(image(0, c, y, x));
      }
    }
  }
  return encode_png(r);
}

ImageBatch<float> png_to_image(const Bytes& png) {
  const RasterImage r = decode_png(png);
  ImageBatch<float> out(1, 3, r.height, r.width);
  const double full = r.bit_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = r.channels == 1 ? 0 : c;
        const std::uint16_t v = r.samples[(static_cast<std::size_t>(y) * r.width + x) * r.channels + src];
        out(0, c, y, x) = r.bit_depth == 8 ? from_level(static_cast<std::uint8_t>(v))
                                           : static_cast<float>(v / full * 2.0 - 1.0);
      }
    }
  }
  return out;
}

Tensor<float> png_to_control_values(const Bytes& png, double lo, double hi) {
  const RasterImage r = decode_png(png);
  if (r.channels != 1) throw IoError("control map PNG must be grayscale");
  const double full = r.bit_depth == 16 ? 65535.0 : 255.0;
  Tensor<float> out(1, 1, r.height, r.width);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    out.array()[static_cast<Eigen::Index>(i)] = static_cast<float>(lo + (hi - lo) * (r.samples[i] / full));
  }
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string base64_encode(const Bytes& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char ch : text) {
    if (ch != '\n' && ch != '\r' && ch != ' ' && ch != '\t') clean.push_back(ch);
  }
  if (clean.size() % 4 != 0) throw IoError("base64: length is not a multiple of 4");
  Bytes out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw IoError("base64: malformed input");
  // EVP_DecodeBlock keeps the bytes that padding stands in for
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string sha256_hex(const std::uint8_t* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) throw IoError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

ImageBatch<float> resize_bilinear(const ImageBatch<float>& image, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("resize_bilinear: bad target size");
  if (image.h() == height && image.w() == width) return image;
  ImageBatch<float> out(image.n(), image.c(), height, width);
  const double sy = static_cast<double>(image.h()) / height;
  const double sx = static_cast<double>(image.w()) / width;
  for (int n = 0; n < image.n(); ++n) {
    for (int c = 0; c < image.c(); ++c) {
      for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.h() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.h() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.w() - 1.0);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, image.w() - 1);
          const double wx = fx - x0;
          const double top = (1 - wx) * image(n, c, y0, x0) + wx * image(n, c, y0, x1);
          const double bot = (1 - wx) * image(n, c, y1, x0) + wx * image(n, c, y1, x1);
          out(n, c, y, x) = static_cast<float>((1 - wy) * top + wy * bot);
        }
      }
    }
  }
  return out;
}

}  // namespace monopix
