#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "sagegan/tensor.hpp"

namespace sagegan {

// Thin libpng wrapper for the dataset format: 8-bit grayscale in, 8-bit
// grayscale or RGB out. Values map linearly between byte 0..255 and
// float 0..1.

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Read an 8-bit grayscale PNG into a {H,W} tensor scaled to [0,1].
/// Non-grayscale or non-8-bit files are rejected by name.
template <typename T>
inline Tensor<T> read_png_gray(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG for reading: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw IoError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed for " + path);
  }
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed to decode " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("expected 8-bit grayscale PNG, got color type " + std::to_string(color) +
                    " / bit depth " + std::to_string(depth) + " in file " + path);
  }
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));

  std::vector<png_byte> bytes(static_cast<size_t>(h) * w);
  row_ptrs.resize(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) row_ptrs[static_cast<size_t>(y)] = bytes.data() + static_cast<size_t>(y) * w;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<T> out({h, w});
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>(bytes[static_cast<size_t>(i)]) / T(255);
  return out;
}

namespace detail {

inline void write_png(const std::string& path, int h, int w, int color_type,
                      const std::vector<png_byte>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed to encode " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  for (int y = 0; y < h; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<size_t>(y) * w * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

template <typename T>
inline png_byte to_byte(T v) {
  const T scaled = v * T(255);
  const T clamped = scaled < T(0) ? T(0) : (scaled > T(255) ? T(255) : scaled);
  return static_cast<png_byte>(clamped + T(0.5));
}

}  // namespace detail

/// Write a {H,W} tensor in [0,1] as an 8-bit grayscale PNG.
template <typename T>
inline void write_png_gray(const std::string& path, const Tensor<T>& img) {
  if (img.ndim() != 2) throw ShapeError("write_png_gray: expected {H,W}, got " + shape_str(img.shape()));
  const int h = img.dim(0), w = img.dim(1);
  std::vector<png_byte> bytes(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < img.numel(); ++i) bytes[static_cast<size_t>(i)] = detail::to_byte(img[i]);
  detail::write_png(path, h, w, PNG_COLOR_TYPE_GRAY, bytes);
}

/// Write a {3,H,W} tensor in [0,1] as an 8-bit RGB PNG.
template <typename T>
inline void write_png_rgb(const std::string& path, const Tensor<T>& img) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw ShapeError("write_png_rgb: expected {3,H,W}, got " + shape_str(img.shape()));
  const int h = img.dim(1), w = img.dim(2);
  std::vector<png_byte> bytes(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        bytes[(static_cast<size_t>(y) * w + x) * 3 + c] = detail::to_byte(img.at(c, y, x));
  detail::write_png(path, h, w, PNG_COLOR_TYPE_RGB, bytes);
}

}  // namespace sagegan
