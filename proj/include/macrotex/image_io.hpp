#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "macrotex/endian.hpp"
#include "macrotex/errors.hpp"
#include "macrotex/image.hpp"

namespace macrotex {

namespace detail {

// Clamp to [0,1], scale to [0,255], round half-to-even.
inline std::uint8_t quantize8(double v) {
  double s = std::clamp(v, 0.0, 1.0) * 255.0;
  double r = std::nearbyint(s);  // default FP mode rounds half to even
  return static_cast<std::uint8_t>(r);
}

}  // namespace detail

// ---------------------------------------------------------------- PGM (P5)

inline void write_pgm(const Image& img, const std::string& path) {
  if (img.channels != 1)
    throw std::invalid_argument("write_pgm: single-channel images only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("write_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> row(img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) row[x] = detail::quantize8(img.at(y, x));
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

inline Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("read_pgm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw format_error("read_pgm: unsupported PGM header in " + path);
  in.get();  // single whitespace after maxval
  Image img(h, w, 1);
  std::vector<std::uint8_t> row(w);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!in) throw format_error("read_pgm: truncated pixel data in " + path);
    for (int x = 0; x < w; ++x) img.at(y, x) = row[x] / 255.0;
  }
  return img;
}

// -------------------------------------------------- PFM (32-bit float, LE)

// Grayscale "Pf" or color "PF"; scale line -1.0 marks little-endian data.
// Rows are stored bottom-up per the PFM convention.
inline void write_pfm(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pfm: 1 or 3 channels only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("write_pfm: cannot open " + path);
  out << (img.channels == 1 ? "Pf" : "PF") << "\n"
      << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<std::size_t>(x) * img.channels + c] =
            static_cast<float>(img.at(y, x, c));
    if (!detail::host_is_little_endian())
      for (float& f : row) {
        auto* b = reinterpret_cast<std::uint8_t*>(&f);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
    out.write(reinterpret_cast<const char*>(row.data()),
              row.size() * sizeof(float));
  }
}

inline Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("read_pfm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if ((magic != "Pf" && magic != "PF") || w <= 0 || h <= 0 || scale >= 0.0)
    throw format_error("read_pfm: unsupported PFM header in " + path);
  in.get();
  const int channels = (magic == "Pf") ? 1 : 3;
  Image img(h, w, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!in) throw format_error("read_pfm: truncated pixel data in " + path);
    if (!detail::host_is_little_endian())
      for (float& f : row) {
        auto* b = reinterpret_cast<std::uint8_t*>(&f);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) = row[static_cast<std::size_t>(x) * channels + c];
  }
  return img;
}

// ----------------------------------------------------------- PNG (libpng)

inline void write_png(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: 1 or 3 channels only");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw format_error("write_png: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw format_error("write_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw format_error("write_png: encode failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) *
                                img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<std::size_t>(x) * img.channels + c] =
            detail::quantize8(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image read_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw format_error("read_png: cannot open " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw format_error("read_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw format_error("read_png: decode failed for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize everything to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw format_error("read_png: unsupported channel count in " + path);
  }
  Image img(h, w, channels);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) = row[static_cast<std::size_t>(x) * channels + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// Dispatch on file extension (.png, .pgm, .pfm).
inline Image read_image(const std::string& path) {
  auto ends_with = [&](const char* suf) {
    std::string s(suf);
    return path.size() >= s.size() &&
           path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".png")) return read_png(path);
  if (ends_with(".pgm")) return read_pgm(path);
  if (ends_with(".pfm")) return read_pfm(path);
  throw format_error("read_image: unknown extension on " + path);
}

inline void write_image(const Image& img, const std::string& path) {
  auto ends_with = [&](const char* suf) {
    std::string s(suf);
    return path.size() >= s.size() &&
           path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".png")) return write_png(img, path);
  if (ends_with(".pgm")) return write_pgm(img, path);
  if (ends_with(".pfm")) return write_pfm(img, path);
  throw format_error("write_image: unknown extension on " + path);
}

}  // namespace macrotex
