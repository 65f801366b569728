#include "enscope/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace enscope {

namespace {

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct ReadCursor {
  const std::string* bytes;
  std::size_t offset = 0;
};

void read_bytes(png_structp png, png_bytep out, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, cur->bytes->data() + cur->offset, len);
  cur->offset += len;
}

void write_bytes(png_structp png, png_bytep data, png_size_t len) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), len);
}

void flush_nothing(png_structp) {}

}  // namespace

std::uint8_t density_gray(double x) {
  const double v = std::clamp(x, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - v)));
}

std::string encode_png(const Image& image) {
  require(image.width > 0 && image.height > 0, "png: empty image");
  require(image.channels == 1 || image.channels == 3, "png: channels must be 1 or 3");
  require(image.pixels.size() == static_cast<std::size_t>(image.width) * image.height * image.channels,
          "png: pixel buffer size mismatch");

  std::string out, error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  require(png != nullptr, "png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encode failed: " + error);
  }
  png_set_write_fn(png, &out, write_bytes, flush_nothing);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto stride = static_cast<std::size_t>(image.width * image.channels);
  for (int r = 0; r < image.height; ++r)
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw FormatError("not a PNG stream");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  require(png != nullptr, "png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  Image img;
  ReadCursor cursor{&bytes};
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png decode failed: " + error);
  }
  png_set_read_fn(png, &cursor, read_bytes);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  const auto stride = static_cast<std::size_t>(img.width * img.channels);
  for (int r = 0; r < img.height; ++r) png_read_row(png, img.pixels.data() + r * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::string density_png(const Matrix& field) {
  Image img;
  img.height = static_cast<int>(field.rows());
  img.width = static_cast<int>(field.cols());
  img.pixels.reserve(static_cast<std::size_t>(field.size()));
  for (Index r = 0; r < field.rows(); ++r)
    for (Index c = 0; c < field.cols(); ++c) img.pixels.push_back(density_gray(field(r, c)));
  return encode_png(img);
}

std::string signed_png(const Matrix& field) {
  Image img;
  img.height = static_cast<int>(field.rows());
  img.width = static_cast<int>(field.cols());
  img.channels = 3;
  const double scale = field.size() ? field.cwiseAbs().maxCoeff() : 0.0;
  for (Index r = 0; r < field.rows(); ++r)
    for (Index c = 0; c < field.cols(); ++c) {
      const double t = scale > 0.0 ? std::clamp(field(r, c) / scale, -1.0, 1.0) : 0.0;
      const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::abs(t))));
      // positive -> red, negative -> blue
      if (t >= 0.0)
        img.pixels.insert(img.pixels.end(), {255, fade, fade});
      else
        img.pixels.insert(img.pixels.end(), {fade, fade, 255});
    }
  return encode_png(img);
}

}  // namespace enscope
