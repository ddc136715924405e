// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semcc {

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

/// Throws DataError on I/O or format failures.
void write_png(const std::string& path, const Image8& img);
/// Reads as 8-bit gray when `channels` == 1, RGB when 3.
Image8 read_png(const std::string& path, int channels);

}  // namespace semcc
