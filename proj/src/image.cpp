#include "tbnet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "tbnet/errors.hpp"

namespace tbnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RawImage decode_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") {
    throw DataError("not a PGM file: " + path);
  }
  auto next_token = [&in, &path]() -> long {
    // skip whitespace and '#' comments
    while (true) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    long v = 0;
    if (!(in >> v)) throw DataError("malformed PGM header: " + path);
    return v;
  };
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw DataError("malformed PGM header: " + path);
  }
  RawImage raw;
  raw.bit_depth = maxval > 255 ? 16 : 8;
  raw.pixels.resize(h, w);
  if (magic == "P2") {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        long v;
        if (!(in >> v)) throw DataError("truncated PGM data: " + path);
        raw.pixels(i, j) = static_cast<std::uint16_t>(v);
      }
    }
    return raw;
  }
  in.get();  // single whitespace after maxval
  const std::size_t bytes_per = raw.bit_depth == 16 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * bytes_per);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw DataError("truncated PGM data: " + path);
  }
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      const std::size_t k = (static_cast<std::size_t>(i) * w + j) * bytes_per;
      raw.pixels(i, j) =
          bytes_per == 2
              ? static_cast<std::uint16_t>((buf[k] << 8) | buf[k + 1])
              : buf[k];
    }
  }
  return raw;
}

RawImage decode_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path);
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failure for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color = png_get_color_type(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  color = png_get_color_type(png, info);
  const int channels = png_get_channels(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> data(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 i = 0; i < h; ++i) rows[i] = data.data() + i * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  RawImage raw;
  raw.bit_depth = bit_depth;
  raw.pixels.resize(h, w);
  for (png_uint_32 i = 0; i < h; ++i) {
    for (png_uint_32 j = 0; j < w; ++j) {
      long acc = 0;
      for (int c = 0; c < channels; ++c) {
        const std::size_t k =
            (static_cast<std::size_t>(j) * channels + c) * (bit_depth / 8);
        const png_byte* p = rows[i] + k;
        acc += bit_depth == 16 ? ((p[0] << 8) | p[1]) : p[0];
      }
      // luminance average for color sources
      raw.pixels(i, j) = static_cast<std::uint16_t>(acc / channels);
    }
  }
  return raw;
}

}  // namespace

RawImage decode_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("cannot open " + path);
  char m[2] = {0, 0};
  probe.read(m, 2);
  probe.close();
  if (m[0] == 'P' && (m[1] == '5' || m[1] == '2')) return decode_pgm(path);
  if (static_cast<unsigned char>(m[0]) == 0x89 && m[1] == 'P') {
    return decode_png(path);
  }
  throw DataError("unsupported image format: " + path);
}

ImageF normalize(const RawImage& raw) {
  if (raw.bit_depth != 8 && raw.bit_depth != 16) {
    throw DataError("unknown bit depth " + std::to_string(raw.bit_depth));
  }
  const float denom = raw.bit_depth == 16 ? 65535.0f : 255.0f;
  return raw.pixels.cast<float>() / denom;
}

void write_pgm(const std::string& path, const ImageF& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < img.rows(); ++i) {
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      const float v = std::clamp(img(i, j), 0.0f, 1.0f);
      out.put(static_cast<char>(
          static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
  if (!out) throw DataError("write failure: " + path);
}

void write_png(const std::string& path, const ImageF& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failure for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failure: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()),
               static_cast<png_uint_32>(img.rows()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(img.cols());
  for (Eigen::Index i = 0; i < img.rows(); ++i) {
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      const float v = std::clamp(img(i, j), 0.0f, 1.0f);
      row[static_cast<std::size_t>(j)] =
          static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace tbnet
