// Copyright Contributors to the DiscSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "discsplat/types.hpp"

#include <filesystem>
#include <stdexcept>

namespace discsplat {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads any PNG as 8-bit RGB scaled to [0, 1]. Gray, palette and alpha
/// inputs are expanded or stripped; 16-bit samples are reduced to 8 bits.
Image read_png(const std::filesystem::path &path);

/// 8-bit RGB, each sample round(clamp(v, 0, 1) * 255).
void write_png(const Image &image, const std::filesystem::path &path);

/// Quantizes exactly as write_png does, without touching the disk.
Image quantize8(const Image &image);

/// Float dump: "DSPF", then width, height, channels (uint32 little endian),
/// then one float32 plane per channel, rows top to bottom.
void write_float_dump(const Image &image, const std::filesystem::path &path);
Image read_float_dump(const std::filesystem::path &path);

} // namespace discsplat
