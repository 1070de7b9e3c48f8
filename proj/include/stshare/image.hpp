#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stshare/tensor.hpp"

#if defined(STSHARE_HAS_PNG)
#include <png.h>
#endif

namespace stshare {

// Frames are Tensor<uint8_t> [H, W, C] with C = 3 (RGB) or 1 (grayscale).
using Frame = Tensor<std::uint8_t>;

inline int frame_h(const Frame& f) { return f.dim(0); }
inline int frame_w(const Frame& f) { return f.dim(1); }
inline int frame_c(const Frame& f) { return f.dim(2); }

// Bilinear resize with pixel-center alignment; a constant image stays
// constant.
inline Frame bilinear_resize(const Frame& src, int oh, int ow) {
  const int h = src.dim(0), w = src.dim(1), c = src.dim(2);
  if (oh < 1 || ow < 1) throw std::invalid_argument("resize target must be positive");
  Frame out({oh, ow, c});
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int y = 0; y < oh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        auto px = [&](int yy, int xx) {
          return static_cast<double>(src[static_cast<std::size_t>((yy * w + xx) * c + ch)]);
        };
        const double v = (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) +
                         wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
        out[static_cast<std::size_t>((y * ow + x) * c + ch)] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

inline Frame crop_rows(const Frame& src, int top, int bottom) {
  const int h = src.dim(0), w = src.dim(1), c = src.dim(2);
  const int nh = h - top - bottom;
  if (nh < 1) throw std::invalid_argument("crop removes every row");
  Frame out({nh, w, c});
  std::copy(src.data() + static_cast<std::size_t>(top) * w * c,
            src.data() + static_cast<std::size_t>(top + nh) * w * c, out.data());
  return out;
}

// Luma 0.299 R + 0.587 G + 0.114 B.
inline Frame to_grayscale(const Frame& src) {
  if (src.dim(2) == 1) return src;
  if (src.dim(2) != 3) throw std::invalid_argument("to_grayscale expects RGB input");
  const int h = src.dim(0), w = src.dim(1);
  Frame out({h, w, 1});
  for (int i = 0; i < h * w; ++i) {
    const double r = src[static_cast<std::size_t>(i * 3 + 0)];
    const double g = src[static_cast<std::size_t>(i * 3 + 1)];
    const double b = src[static_cast<std::size_t>(i * 3 + 2)];
    out[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::lround(0.299 * r + 0.587 * g + 0.114 * b));
  }
  return out;
}

// Grayscale double plane in [0,1]; the flow frontend.
inline Tensor<double> luma_plane(const Frame& src) {
  const int h = src.dim(0), w = src.dim(1), c = src.dim(2);
  Tensor<double> out({h, w});
  for (int i = 0; i < h * w; ++i) {
    double v;
    if (c == 1) {
      v = src[static_cast<std::size_t>(i)];
    } else {
      v = 0.299 * src[static_cast<std::size_t>(i * 3 + 0)] +
          0.587 * src[static_cast<std::size_t>(i * 3 + 1)] +
          0.114 * src[static_cast<std::size_t>(i * 3 + 2)];
    }
    out[static_cast<std::size_t>(i)] = v / 255.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raw planar frame file: magic "FRM1", u32 LE width, u32 LE height, then the
// full R plane, G plane, B plane (w*h bytes each).
// ---------------------------------------------------------------------------

inline void save_frame_frm(const std::string& path, const Frame& f) {
  if (f.dim(2) != 3) throw std::invalid_argument("FRM1 stores RGB frames");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os.write("FRM1", 4);
  const std::uint32_t w = static_cast<std::uint32_t>(f.dim(1));
  const std::uint32_t h = static_cast<std::uint32_t>(f.dim(0));
  unsigned char hdr[8] = {
      static_cast<unsigned char>(w & 0xff),         static_cast<unsigned char>((w >> 8) & 0xff),
      static_cast<unsigned char>((w >> 16) & 0xff), static_cast<unsigned char>((w >> 24) & 0xff),
      static_cast<unsigned char>(h & 0xff),         static_cast<unsigned char>((h >> 8) & 0xff),
      static_cast<unsigned char>((h >> 16) & 0xff), static_cast<unsigned char>((h >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(hdr), 8);
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(w) * h);
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = f[i * 3 + static_cast<std::size_t>(ch)];
    os.write(reinterpret_cast<const char*>(plane.data()), static_cast<std::streamsize>(plane.size()));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Frame load_frame_frm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FRM1", 4) != 0)
    throw std::runtime_error("not a FRM1 frame file: " + path);
  unsigned char hdr[8];
  is.read(reinterpret_cast<char*>(hdr), 8);
  const std::uint32_t w = static_cast<std::uint32_t>(hdr[0]) | (hdr[1] << 8) | (hdr[2] << 16) |
                          (static_cast<std::uint32_t>(hdr[3]) << 24);
  const std::uint32_t h = static_cast<std::uint32_t>(hdr[4]) | (hdr[5] << 8) | (hdr[6] << 16) |
                          (static_cast<std::uint32_t>(hdr[7]) << 24);
  Frame f({static_cast<int>(h), static_cast<int>(w), 3});
  std::vector<std::uint8_t> plane(static_cast<std::size_t>(w) * h);
  for (int ch = 0; ch < 3; ++ch) {
    is.read(reinterpret_cast<char*>(plane.data()), static_cast<std::streamsize>(plane.size()));
    if (!is) throw std::runtime_error("truncated FRM1 payload: " + path);
    for (std::size_t i = 0; i < plane.size(); ++i) f[i * 3 + static_cast<std::size_t>(ch)] = plane[i];
  }
  return f;
}

#if defined(STSHARE_HAS_PNG)

inline Frame load_frame_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  // Normalize everything to 8-bit RGB.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  Frame f({static_cast<int>(h), static_cast<int>(w), 3});
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = reinterpret_cast<png_bytep>(f.data() + static_cast<std::size_t>(y) * w * 3);
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return f;
}

#endif  // STSHARE_HAS_PNG

// Loads a frame by extension (.frm or .png).
inline Frame load_frame(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
#if defined(STSHARE_HAS_PNG)
    return load_frame_png(path);
#else
    throw std::runtime_error("png support not built in; use FRM1 frames");
#endif
  }
  return load_frame_frm(path);
}

}  // namespace stshare
