#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrf/renderer.hpp"

namespace hrf {

// 8-bit RGB image, row-major. Files are binary NetPBM (P6), maxval 255.
struct Image {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // 3 bytes per pixel

  static Image filled(int w, int h, const Color& c) {
    Image img;
    img.width = w;
    img.height = h;
    img.rgb.assign((size_t)w * h * 3, 0);
    for (int i = 0; i < w * h; ++i)
      for (int ch = 0; ch < 3; ++ch) img.rgb[3 * i + ch] = to_byte(c[ch]);
    return img;
  }

  static uint8_t to_byte(float v) {
    float c = std::clamp(v, 0.f, 1.f);
    return (uint8_t)(c * 255.f + 0.5f);
  }

  Color at(int row, int col) const {
    const uint8_t* p = &rgb[3 * ((size_t)row * width + col)];
    return Color(p[0] / 255.f, p[1] / 255.f, p[2] / 255.f);
  }

  void set(int row, int col, const Color& c) {
    uint8_t* p = &rgb[3 * ((size_t)row * width + col)];
    for (int ch = 0; ch < 3; ++ch) p[ch] = to_byte(c[ch]);
  }
};

// Binary mask, stored as P5 with values restricted to {0, 255}.
struct MaskImage {
  int width = 0, height = 0;
  std::vector<uint8_t> m;

  static MaskImage filled(int w, int h, bool v) {
    MaskImage img;
    img.width = w;
    img.height = h;
    img.m.assign((size_t)w * h, v ? 255 : 0);
    return img;
  }

  bool at(int row, int col) const { return m[(size_t)row * width + col] != 0; }
  void set(int row, int col, bool v) { m[(size_t)row * width + col] = v ? 255 : 0; }
};

namespace detail {

inline int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments, per the NetPBM header grammar.
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      in.unget();
      int v;
      if (!(in >> v)) throw std::runtime_error("pnm: malformed header");
      return v;
    }
  }
  throw std::runtime_error("pnm: malformed header");
}

}  // namespace detail

inline void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write((const char*)img.rgb.data(), (std::streamsize)img.rgb.size());
  if (!out) throw std::runtime_error("write_ppm: short write " + path);
}

inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  char m0 = (char)in.get(), m1 = (char)in.get();
  if (m0 != 'P' || m1 != '6') throw std::runtime_error("read_ppm: not a P6 file: " + path);
  Image img;
  img.width = detail::read_pnm_token(in);
  img.height = detail::read_pnm_token(in);
  int maxval = detail::read_pnm_token(in);
  if (img.width <= 0 || img.height <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  in.get();  // single whitespace after maxval
  img.rgb.resize((size_t)img.width * img.height * 3);
  in.read((char*)img.rgb.data(), (std::streamsize)img.rgb.size());
  if (in.gcount() != (std::streamsize)img.rgb.size())
    throw std::runtime_error("read_ppm: truncated payload in " + path);
  return img;
}

inline void write_pgm(const std::string& path, const MaskImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write((const char*)img.m.data(), (std::streamsize)img.m.size());
  if (!out) throw std::runtime_error("write_pgm: short write " + path);
}

inline MaskImage read_pgm_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  char m0 = (char)in.get(), m1 = (char)in.get();
  if (m0 != 'P' || m1 != '5') throw std::runtime_error("read_pgm: not a P5 file: " + path);
  MaskImage img;
  img.width = detail::read_pnm_token(in);
  img.height = detail::read_pnm_token(in);
  int maxval = detail::read_pnm_token(in);
  if (img.width <= 0 || img.height <= 0 || maxval != 255)
    throw std::runtime_error("read_pgm: unsupported header in " + path);
  in.get();
  img.m.resize((size_t)img.width * img.height);
  in.read((char*)img.m.data(), (std::streamsize)img.m.size());
  if (in.gcount() != (std::streamsize)img.m.size())
    throw std::runtime_error("read_pgm: truncated payload in " + path);
  for (uint8_t v : img.m)
    if (v != 0 && v != 255)
      throw std::runtime_error("read_pgm: mask must be binary {0,255}: " + path);
  return img;
}

}  // namespace hrf
