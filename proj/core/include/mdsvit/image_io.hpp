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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdsvit/tensor.hpp"

namespace mdsvit {

/// Decodes a binary PPM (P6), PGM (P5) or 8/16-bit PNG, chosen by the file's
/// magic bytes. Returns [3, H, W] for color and [1, H, W] for grayscale, with
/// values scaled to [0, 1]. Failures throw DataError naming the path and, for
/// malformed content, the byte offset.
Tensor decode_image(const std::string& path);
Tensor decode_image_bytes(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");

/// Writes a [1|3, H, W] tensor as 8-bit data (round(255 * clamp(v, 0, 1))).
/// The format follows the extension: .pgm/.ppm (binary PNM) or .png.
void encode_image(const std::string& path, const Tensor& image);
std::vector<std::uint8_t> encode_pnm_bytes(const Tensor& image);

}  // namespace mdsvit
