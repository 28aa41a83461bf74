#include "idm/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace idm {

Eigen::VectorXf luminance(const ImageTensor& img) {
  Eigen::VectorXf y(img.pixel_count());
  if (img.channels == 1) {
    y = img.data.matrix();
  } else {
    auto p = img.planar();
    y = 0.299f * p.row(0) + 0.587f * p.row(1) + 0.114f * p.row(2);
  }
  return y;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageTensor load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw io_error("cannot open PNG file: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw decode_error("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw decode_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw decode_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw decode_error("malformed PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (bit_depth != 8 && bit_depth != 16) {
    // Palette/low-depth images expand to 8-bit below; anything else is out.
    if (!(bit_depth < 8 && (color_type == PNG_COLOR_TYPE_PALETTE || color_type == PNG_COLOR_TYPE_GRAY))) {
      png_destroy_read_struct(&png, &info, nullptr);
      throw format_error("unsupported PNG bit depth: " + std::to_string(bit_depth));
    }
  }

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // wire format is big-endian
  png_read_update_info(png, info);

  const int out_channels = static_cast<int>(png_get_channels(png, info));
  if (out_channels != 1 && out_channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("unsupported PNG channel count after alpha strip");
  }

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> raw(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  const int depth_now = png_get_bit_depth(png, info);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageTensor img(static_cast<int>(h), static_cast<int>(w), out_channels);
  const Eigen::Index n = img.data.size();
  if (depth_now == 16) {
    const auto* src = reinterpret_cast<const std::uint16_t*>(raw.data());
    for (Eigen::Index i = 0; i < n; ++i) img.data[i] = static_cast<float>(src[i]) / 65535.0f;
  } else {
    const png_byte* src = raw.data();
    for (Eigen::Index i = 0; i < n; ++i) img.data[i] = static_cast<float>(src[i]) / 255.0f;
  }
  return img;
}

void save_png(const ImageTensor& img, const std::string& path) {
  if (img.height < 8 || img.width < 8 || (img.channels != 1 && img.channels != 3))
    throw std::invalid_argument("save_png: invalid image");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw io_error("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw io_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("PNG write failed: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) row[static_cast<std::size_t>(x) * img.channels + c] = quantize8(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace idm
