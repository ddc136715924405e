// SPDX-License-Identifier: Apache-2.0
#include "data/png_io.hpp"

#include <png.h>

#include <cstring>

#include "tensor/errors.hpp"

namespace semcc {

void write_png(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("PNG writer supports 1 or 3 channels");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw DataError("pixel buffer does not match image extent for " + path);
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot write " + path + ": " + msg);
  }
}

Image8 read_png(const std::string& path, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("cannot read " + path + ": " + image.message);
  }
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode " + path + ": " + msg);
  }
  return out;
}

}  // namespace semcc
