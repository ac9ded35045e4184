// Copyright 2026 The mdsvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdsvit/image_io.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mdsvit/error.hpp"

namespace mdsvit {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

[[noreturn]] void fail(const std::string& name, const std::string& what, std::size_t offset) {
  throw DataError(name + ": " + what + " at byte offset " + std::to_string(offset));
}

class PnmReader {
 public:
  PnmReader(const std::vector<std::uint8_t>& bytes, const std::string& name) : b_(bytes), name_(name) {}

  Tensor read() {
    if (b_.size() < 2 || b_[0] != 'P' || (b_[1] != '5' && b_[1] != '6')) {
      fail(name_, "not a binary PGM/PPM (expected P5 or P6)", 0);
    }
    const std::int64_t channels = b_[1] == '6' ? 3 : 1;
    pos_ = 2;
    const std::int64_t w = number("width"), h = number("height"), maxval = number("maxval");
    if (w < 1 || h < 1) fail(name_, "image extents must be positive", pos_);
    if (maxval < 1 || maxval > 65535) fail(name_, "maxval must be in [1, 65535]", pos_);
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail(name_, "expected whitespace after header", pos_);
    ++pos_;
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(w * h * channels) * sample_bytes;
    if (b_.size() - pos_ < need) {
      fail(name_, "truncated pixel data (" + std::to_string(need) + " bytes expected, " +
                      std::to_string(b_.size() - pos_) + " present)", b_.size());
    }
    std::vector<double> v(static_cast<std::size_t>(channels * h * w));
    const std::size_t plane = static_cast<std::size_t>(h * w);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const std::size_t at = pos_ + (p * channels + c) * sample_bytes;
        const unsigned raw = sample_bytes == 2 ? (b_[at] << 8 | b_[at + 1]) : b_[at];
        if (raw > static_cast<unsigned>(maxval)) fail(name_, "sample exceeds maxval", at);
        v[c * plane + p] = static_cast<double>(raw) / static_cast<double>(maxval);
      }
    }
    return from_values({channels, h, w}, std::move(v));
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::int64_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::int64_t n = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_]) && n < (1 << 24)) n = n * 10 + (b_[pos_++] - '0');
    if (pos_ == start) fail(name_, std::string("expected ") + what, start);
    return n;
  }

  const std::vector<std::uint8_t>& b_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

std::uint32_t read_be32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
         static_cast<std::uint32_t>(p[2]) << 8 | p[3];
}

// Walks the chunk list so structural damage is reported with an offset
// before libpng sees the data.
void check_png_chunks(const std::vector<std::uint8_t>& b, const std::string& name) {
  std::size_t pos = 8;
  bool seen_end = false;
  while (!seen_end) {
    if (b.size() - pos < 12) fail(name, "truncated PNG chunk header", pos);
    const std::uint32_t len = read_be32(&b[pos]);
    if (len > b.size() - pos - 12) fail(name, "truncated PNG chunk", pos);
    const std::uint8_t* type = &b[pos + 4];
    const auto crc = crc32(crc32(0L, Z_NULL, 0), type, len + 4);
    if (crc != read_be32(&b[pos + 8 + len])) fail(name, "PNG chunk CRC mismatch", pos);
    seen_end = std::memcmp(type, "IEND", 4) == 0;
    pos += 12 + len;
  }
}

Tensor read_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  check_png_chunks(bytes, name);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    const std::string msg = img.message;
    png_image_free(&img);
    fail(name, "PNG header: " + msg, 8);
  }
  const bool color = img.format & PNG_FORMAT_FLAG_COLOR;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    fail(name, "PNG data: " + msg, 8);
  }
  const std::int64_t channels = color ? 3 : 1, h = img.height, w = img.width;
  const std::size_t plane = static_cast<std::size_t>(h * w);
  std::vector<double> v(static_cast<std::size_t>(channels) * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::int64_t c = 0; c < channels; ++c) v[c * plane + p] = pixels[p * channels + c] / 255.0;
  return from_values({channels, h, w}, std::move(v));
}

// Interleaved 8-bit samples of a [C, H, W] tensor.
std::vector<std::uint8_t> to_bytes(const Tensor& image) {
  if (image.rank() != 3 || (image.size(0) != 1 && image.size(0) != 3)) {
    throw ShapeError("image must be [1, H, W] or [3, H, W], got " + to_string(image.shape()));
  }
  const std::int64_t c = image.size(0);
  const std::size_t plane = static_cast<std::size_t>(image.size(1) * image.size(2));
  const auto v = image.to_vector();
  std::vector<std::uint8_t> out(v.size());
  for (std::size_t p = 0; p < plane; ++p)
    for (std::int64_t k = 0; k < c; ++k) {
      const double x = std::clamp(v[k * plane + p], 0.0, 1.0);
      out[p * c + k] = static_cast<std::uint8_t>(std::lround(255.0 * x));
    }
  return out;
}

}  // namespace

Tensor decode_image_bytes(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin())) {
    return read_png(bytes, name);
  }
  return PnmReader(bytes, name).read();
}

Tensor decode_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_image_bytes(bytes, path);
}

std::vector<std::uint8_t> encode_pnm_bytes(const Tensor& image) {
  const auto pixels = to_bytes(image);
  const std::string header = std::string(image.size(0) == 3 ? "P6" : "P5") + "\n" + std::to_string(image.size(2)) +
                             " " + std::to_string(image.size(1)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

void encode_image(const std::string& path, const Tensor& image) {
  const std::string ext = lower_extension(path);
  std::vector<std::uint8_t> bytes;
  if (ext == ".pgm" || ext == ".ppm") {
    const std::int64_t want = ext == ".ppm" ? 3 : 1;
    if (image.rank() != 3 || image.size(0) != want) {
      throw ShapeError(path + ": " + ext + " needs " + std::to_string(want) + " channel(s), got " +
                       to_string(image.shape()));
    }
    bytes = encode_pnm_bytes(image);
  } else if (ext == ".png") {
    const auto pixels = to_bytes(image);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.size(2));
    img.height = static_cast<png_uint_32>(image.size(1));
    img.format = image.size(0) == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
      throw DataError(path + ": PNG encode failed: " + img.message);
    }
    bytes.resize(size);
    if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, pixels.data(), 0, nullptr)) {
      throw DataError(path + ": PNG encode failed: " + img.message);
    }
    bytes.resize(size);
  } else {
    throw DataError(path + ": unsupported image extension '" + ext + "' (use .pgm, .ppm or .png)");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace mdsvit
