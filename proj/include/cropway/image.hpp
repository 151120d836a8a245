#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cropway/common.hpp"

namespace cropway {

struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> px;  // h*w, row-major

  std::uint8_t& at(int y, int x) { return px[std::size_t(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return px[std::size_t(y) * w + x]; }
};

struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> px;  // h*w*3

  RgbImage() = default;
  RgbImage(int height, int width, std::array<std::uint8_t, 3> fill = {0, 0, 0})
      : h(height), w(width), px(std::size_t(height) * width * 3) {
    for (std::size_t i = 0; i < px.size(); i += 3) {
      px[i] = fill[0];
      px[i + 1] = fill[1];
      px[i + 2] = fill[2];
    }
  }

  void set(int y, int x, std::array<std::uint8_t, 3> c) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    std::uint8_t* p = px.data() + (std::size_t(y) * w + x) * 3;
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
};

void write_png(const std::string& path, const GrayImage& img);
void write_png(const std::string& path, const RgbImage& img,
               const std::vector<std::pair<std::string, std::string>>&
                   text_chunks = {});

/// Reads any PNG as 8-bit grayscale (palette/alpha/rgb are converted).
GrayImage read_png_gray(const std::string& path);

void draw_disc(RgbImage& img, double cx, double cy, double r,
               std::array<std::uint8_t, 3> color);
void draw_line(RgbImage& img, double x0, double y0, double x1, double y1,
               std::array<std::uint8_t, 3> color);

}  // namespace cropway
