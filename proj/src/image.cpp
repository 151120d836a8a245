#include "cropway/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace cropway {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const std::string& path, int h, int w, int color_type,
                    int channels, const std::uint8_t* data,
                    const std::vector<std::pair<std::string, std::string>>&
                        text_chunks) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("png: cannot open '" + path + "' for write");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                              nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: write to '" + path + "' failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_text> texts(text_chunks.size());
  for (std::size_t i = 0; i < text_chunks.size(); ++i) {
    texts[i] = {};
    texts[i].compression = PNG_TEXT_COMPRESSION_NONE;
    texts[i].key = const_cast<char*>(text_chunks[i].first.c_str());
    texts[i].text = const_cast<char*>(text_chunks[i].second.c_str());
    texts[i].text_length = text_chunks[i].second.size();
  }
  if (!texts.empty()) png_set_text(png, info, texts.data(), int(texts.size()));
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] =
        const_cast<png_bytep>(data + std::size_t(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png(const std::string& path, const GrayImage& img) {
  write_png_impl(path, img.h, img.w, PNG_COLOR_TYPE_GRAY, 1, img.px.data(),
                 {});
}

void write_png(const std::string& path, const RgbImage& img,
               const std::vector<std::pair<std::string, std::string>>&
                   text_chunks) {
  write_png_impl(path, img.h, img.w, PNG_COLOR_TYPE_RGB, 3, img.px.data(),
                 text_chunks);
}

GrayImage read_png_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("png: cannot open '" + path + "'");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                             nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: '" + path + "' is not a readable PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  GrayImage img;
  img.h = int(png_get_image_height(png, info));
  img.w = int(png_get_image_width(png, info));
  img.px.resize(std::size_t(img.h) * img.w);
  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y)
    rows[y] = img.px.data() + std::size_t(y) * img.w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void draw_disc(RgbImage& img, double cx, double cy, double r,
               std::array<std::uint8_t, 3> color) {
  const int x0 = int(std::floor(cx - r)), x1 = int(std::ceil(cx + r));
  const int y0 = int(std::floor(cy - r)), y1 = int(std::ceil(cy + r));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r * r) img.set(y, x, color);
    }
}

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1,
               std::array<std::uint8_t, 3> color) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, int(std::ceil(len * 2)));
  for (int i = 0; i <= steps; ++i) {
    const double t = double(i) / steps;
    img.set(int(std::lround(y0 + t * (y1 - y0))),
            int(std::lround(x0 + t * (x1 - x0))), color);
  }
}

}  // namespace cropway
