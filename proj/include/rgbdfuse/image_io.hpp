// PNG read/write on top of libpng: 8-bit gray/RGB/RGBA and 16-bit gray.
#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <vector>

#include "rgbdfuse/core.hpp"

namespace rgbdfuse::io {

namespace detail {

struct FileHandle {
  std::FILE* fp = nullptr;
  explicit FileHandle(const std::filesystem::path& path, const char* mode)
      : fp(std::fopen(path.string().c_str(), mode)) {}
  ~FileHandle() {
    if (fp) std::fclose(fp);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

inline int channels_for_color_type(int color_type) {
  switch (color_type) {
    case PNG_COLOR_TYPE_GRAY: return 1;
    case PNG_COLOR_TYPE_RGB: return 3;
    case PNG_COLOR_TYPE_RGB_ALPHA: return 4;
    default: return 0;
  }
}

inline int color_type_for_channels(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGB_ALPHA;
    default: return -1;
  }
}

// Reads the whole file; bit_depth must be 8 or 16 and match the caller's T.
template <typename T>
ImageGrid<T> read_png_impl(const std::filesystem::path& path, int expect_bit_depth) {
  FileHandle file(path, "rb");
  require(file.fp != nullptr, Errc::io_failure, "cannot open PNG: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Errc::io_failure, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Errc::io_failure, "png_create_info_struct failed");
  }

  ImageGrid<T> img;
  bool bad_depth = false;
  bool bad_color = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::io_failure, "PNG decode error: " + path.string());
  }
  png_init_io(png, file.fp);
  // SWAP_ENDIAN converts 16-bit samples to host little-endian; no-op for 8-bit
  png_read_png(png, info, PNG_TRANSFORM_SWAP_ENDIAN, nullptr);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  const int channels = channels_for_color_type(color_type);
  bad_depth = bit_depth != expect_bit_depth;
  bad_color = channels == 0;
  if (!bad_depth && !bad_color) {
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = channels;
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * channels);
    png_bytepp rows = png_get_rows(png, info);
    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * channels * sizeof(T);
    for (int y = 0; y < img.height; ++y)
      std::memcpy(img.data.data() + static_cast<std::size_t>(y) * img.width * channels, rows[y],
                  row_bytes);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  require(!bad_depth, Errc::io_failure, "unexpected PNG bit depth in " + path.string());
  require(!bad_color, Errc::io_failure, "unsupported PNG color type in " + path.string());
  return img;
}

template <typename T>
void write_png_impl(const ImageGrid<T>& img, const std::filesystem::path& path, int bit_depth) {
  const int color_type = color_type_for_channels(img.channels);
  require(color_type >= 0, Errc::io_failure, "unsupported channel count for PNG");
  require(img.width > 0 && img.height > 0, Errc::io_failure, "empty image");

  FileHandle file(path, "wb");
  require(file.fp != nullptr, Errc::io_failure, "cannot write PNG: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, Errc::io_failure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(Errc::io_failure, "png_create_info_struct failed");
  }

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = reinterpret_cast<png_bytep>(const_cast<T*>(
        img.data.data() + static_cast<std::size_t>(y) * img.width * img.channels));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::io_failure, "PNG encode error: " + path.string());
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_SWAP_ENDIAN, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline ImageGrid<std::uint8_t> read_png8(const std::filesystem::path& path) {
  return detail::read_png_impl<std::uint8_t>(path, 8);
}

inline void write_png8(const ImageGrid<std::uint8_t>& img, const std::filesystem::path& path) {
  detail::write_png_impl(img, path, 8);
}

inline ImageGrid<std::uint16_t> read_png16_gray(const std::filesystem::path& path) {
  auto img = detail::read_png_impl<std::uint16_t>(path, 16);
  require(img.channels == 1, Errc::io_failure, "expected single-channel 16-bit PNG");
  return img;
}

inline void write_png16_gray(const ImageGrid<std::uint16_t>& img,
                             const std::filesystem::path& path) {
  require(img.channels == 1, Errc::io_failure, "expected single-channel grid");
  detail::write_png_impl(img, path, 16);
}

}  // namespace rgbdfuse::io
