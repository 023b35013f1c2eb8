#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace tbnet {

/// Grayscale image, unit range after normalization. Row-major, rows = H.
using ImageF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ImageU16 =
    Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic,
                  Eigen::RowMajor>;

/// Decoded but not yet normalized pixel grid. bit_depth is 8 or 16;
/// color sources are reduced to grayscale by luminance average before
/// this stage.
struct RawImage {
  ImageU16 pixels;
  int bit_depth = 8;
};

/// Decodes an 8-bit PGM (P5/P2) or an 8/16-bit PNG. Throws DataError on
/// undecodable input or unsupported format.
RawImage decode_image(const std::string& path);

/// value / max-representable for the stated bit depth; output in [0, 1].
ImageF normalize(const RawImage& raw);

/// 8-bit binary PGM writer (values clamped to [0, 1] then scaled).
void write_pgm(const std::string& path, const ImageF& img);

/// 8-bit grayscale PNG writer.
void write_png(const std::string& path, const ImageF& img);

}  // namespace tbnet
