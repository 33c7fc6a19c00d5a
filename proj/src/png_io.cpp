#include "defsurf/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace defsurf {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct RawPng {
  Index width = 0, height = 0;
  int channels = 0, bit_depth = 0;
  std::vector<std::uint16_t> data;  // row-major, interleaved, native order

  std::uint16_t at(Index r, Index c, int ch) const {
    return data[static_cast<std::size_t>((r * width + c) * channels + ch)];
  }
};

RawPng read_raw(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt PNG: " + path.string());
  }

  png_init_io(png, file.get());
  png_read_info(png, info);

  // Normalize to 8- or 16-bit gray/RGB without alpha.
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // to native LE
  png_read_update_info(png, info);

  RawPng out;
  out.width = static_cast<Index>(png_get_image_width(png, info));
  out.height = static_cast<Index>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> bytes(row_bytes * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (Index r = 0; r < out.height; ++r)
    rows[static_cast<std::size_t>(r)] = bytes.data() + row_bytes * static_cast<std::size_t>(r);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n =
      static_cast<std::size_t>(out.width * out.height) * static_cast<std::size_t>(out.channels);
  out.data.resize(n);
  if (out.bit_depth == 16) {
    const auto* p = reinterpret_cast<const std::uint16_t*>(bytes.data());
    out.data.assign(p, p + n);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.data[i] = bytes[i];
  }
  return out;
}

void write_raw(const std::filesystem::path& path, Index width, Index height,
               int channels, int bit_depth, const std::uint16_t* data) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot write " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + path.string());
  }

  png_init_io(png, file.get());
  const int color =
      channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const std::size_t pixels_per_row =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  if (bit_depth == 16) {
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (Index r = 0; r < height; ++r)
      rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(
          reinterpret_cast<const png_byte*>(data + pixels_per_row * static_cast<std::size_t>(r)));
    png_write_image(png, rows.data());
  } else {
    std::vector<std::uint8_t> bytes(pixels_per_row * static_cast<std::size_t>(height));
    for (std::size_t i = 0; i < bytes.size(); ++i)
      bytes[i] = static_cast<std::uint8_t>(data[i]);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (Index r = 0; r < height; ++r)
      rows[static_cast<std::size_t>(r)] = bytes.data() + pixels_per_row * static_cast<std::size_t>(r);
    png_write_image(png, rows.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint16_t quantize_unit(float v, double scale) {
  const double x = std::clamp(static_cast<double>(v), 0.0, 1.0) * scale;
  return static_cast<std::uint16_t>(std::lround(x));
}

}  // namespace

void write_image_png(const std::filesystem::path& path, const Rgbf& image) {
  const Index h = image.rows(), w = image.cols();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(h * w) * 3);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>((r * w + c) * 3);
      data[i + 0] = quantize_unit(image.r(r, c), 255.0);
      data[i + 1] = quantize_unit(image.g(r, c), 255.0);
      data[i + 2] = quantize_unit(image.b(r, c), 255.0);
    }
  write_raw(path, w, h, 3, 8, data.data());
}

Rgbf read_image_png(const std::filesystem::path& path) {
  const RawPng raw = read_raw(path);
  if (raw.channels != 3 || raw.bit_depth != 8)
    throw std::runtime_error("expected 8-bit RGB PNG: " + path.string());
  Rgbf out(raw.height, raw.width);
  for (Index r = 0; r < raw.height; ++r)
    for (Index c = 0; c < raw.width; ++c) {
      out.r(r, c) = raw.at(r, c, 0) / 255.0f;
      out.g(r, c) = raw.at(r, c, 1) / 255.0f;
      out.b(r, c) = raw.at(r, c, 2) / 255.0f;
    }
  return out;
}

void write_mask_png(const std::filesystem::path& path, const MaskGrid& mask) {
  const Index h = mask.rows(), w = mask.cols();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(h * w));
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c)
      data[static_cast<std::size_t>(r * w + c)] = mask(r, c) ? 255 : 0;
  write_raw(path, w, h, 1, 8, data.data());
}

MaskGrid read_mask_png(const std::filesystem::path& path) {
  const RawPng raw = read_raw(path);
  if (raw.channels != 1 || raw.bit_depth != 8)
    throw std::runtime_error("expected 8-bit gray PNG: " + path.string());
  MaskGrid out(raw.height, raw.width);
  for (Index r = 0; r < raw.height; ++r)
    for (Index c = 0; c < raw.width; ++c)
      out(r, c) = raw.at(r, c, 0) >= 128 ? 1 : 0;
  return out;
}

void write_depth_png(const std::filesystem::path& path, const Gridf& depth_mm) {
  const Index h = depth_mm.rows(), w = depth_mm.cols();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(h * w));
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const double mm = depth_mm(r, c);
      if (!(mm >= 0.0) || mm > 6553.5)
        throw std::runtime_error("depth out of the 0..6553.5 mm format range");
      data[static_cast<std::size_t>(r * w + c)] =
          static_cast<std::uint16_t>(std::lround(mm * 10.0));
    }
  write_raw(path, w, h, 1, 16, data.data());
}

Gridf read_depth_png(const std::filesystem::path& path) {
  const RawPng raw = read_raw(path);
  if (raw.channels != 1 || raw.bit_depth != 16)
    throw std::runtime_error("expected 16-bit gray PNG: " + path.string());
  Gridf out(raw.height, raw.width);
  for (Index r = 0; r < raw.height; ++r)
    for (Index c = 0; c < raw.width; ++c)
      out(r, c) = raw.at(r, c, 0) / 10.0f;
  return out;
}

void write_normals_png(const std::filesystem::path& path,
                       const NormalGridf& normals) {
  const Index h = normals.rows(), w = normals.cols();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(h * w) * 3);
  auto encode = [](float v) {
    const double x = (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) / 2.0;
    return static_cast<std::uint16_t>(std::lround(x * 65535.0));
  };
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>((r * w + c) * 3);
      data[i + 0] = encode(normals.x(r, c));
      data[i + 1] = encode(normals.y(r, c));
      data[i + 2] = encode(normals.z(r, c));
    }
  write_raw(path, w, h, 3, 16, data.data());
}

NormalGridf read_normals_png(const std::filesystem::path& path) {
  const RawPng raw = read_raw(path);
  if (raw.channels != 3 || raw.bit_depth != 16)
    throw std::runtime_error("expected 16-bit RGB PNG: " + path.string());
  NormalGridf out(raw.height, raw.width);
  auto decode = [](std::uint16_t v) {
    return static_cast<float>(v / 65535.0 * 2.0 - 1.0);
  };
  for (Index r = 0; r < raw.height; ++r)
    for (Index c = 0; c < raw.width; ++c) {
      out.x(r, c) = decode(raw.at(r, c, 0));
      out.y(r, c) = decode(raw.at(r, c, 1));
      out.z(r, c) = decode(raw.at(r, c, 2));
    }
  return out;
}

}  // namespace defsurf
