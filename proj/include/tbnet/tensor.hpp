#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tbnet {

enum class DType { f32, f16 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f16"; }

/// Rank-4 NCHW tensor. Lower-rank values use size-1 dimensions, e.g. a
/// length-C vector is (1, C, 1, 1) and an N x F matrix is (N, F, 1, 1).
/// Storage is row-major over (n, c, h, w). The dtype tag records the
/// nominal storage precision; f16 tensors hold half-representable values
/// in the same Scalar buffer.
template <typename Scalar>
struct Tensor4 {
  using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  std::array<Eigen::Index, 4> shape{1, 1, 1, 1};
  DType dtype = DType::f32;
  Buffer data;

  Tensor4() : data(1) { data.setZero(); }

  Tensor4(Eigen::Index n, Eigen::Index c, Eigen::Index h, Eigen::Index w)
      : shape{n, c, h, w}, data(n * c * h * w) {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
      throw std::invalid_argument("Tensor4: all dimensions must be >= 1, got " +
                                  shape_str());
    }
    data.setZero();
  }

  static Tensor4 zeros(Eigen::Index n, Eigen::Index c, Eigen::Index h,
                       Eigen::Index w) {
    return Tensor4(n, c, h, w);
  }

  static Tensor4 full(Eigen::Index n, Eigen::Index c, Eigen::Index h,
                      Eigen::Index w, Scalar value) {
    Tensor4 t(n, c, h, w);
    t.data.setConstant(value);
    return t;
  }

  Eigen::Index n() const { return shape[0]; }
  Eigen::Index c() const { return shape[1]; }
  Eigen::Index h() const { return shape[2]; }
  Eigen::Index w() const { return shape[3]; }
  Eigen::Index numel() const { return shape[0] * shape[1] * shape[2] * shape[3]; }

  Eigen::Index index(Eigen::Index in, Eigen::Index ic, Eigen::Index ih,
                     Eigen::Index iw) const {
    return ((in * shape[1] + ic) * shape[2] + ih) * shape[3] + iw;
  }

  Scalar& at(Eigen::Index in, Eigen::Index ic, Eigen::Index ih,
             Eigen::Index iw) {
    return data[index(in, ic, ih, iw)];
  }
  Scalar at(Eigen::Index in, Eigen::Index ic, Eigen::Index ih,
            Eigen::Index iw) const {
    return data[index(in, ic, ih, iw)];
  }

  /// Contiguous view of one channel plane as an H x W matrix.
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>
  plane(Eigen::Index in, Eigen::Index ic) {
    return {data.data() + index(in, ic, 0, 0), shape[2], shape[3]};
  }
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
  plane(Eigen::Index in, Eigen::Index ic) const {
    return {data.data() + index(in, ic, 0, 0), shape[2], shape[3]};
  }

  bool same_shape(const Tensor4& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << shape[0] << "," << shape[1] << "," << shape[2] << ","
       << shape[3] << ")";
    return os.str();
  }

  template <typename Other>
  Tensor4<Other> cast() const {
    Tensor4<Other> out(shape[0], shape[1], shape[2], shape[3]);
    out.dtype = dtype;
    out.data = data.template cast<Other>();
    return out;
  }
};

using Tensor = Tensor4<float>;

enum class PadMode { zero, reflect };

/// Convolution geometry. groups == in-channels expresses depthwise
/// convolution. Output spatial size follows
/// floor((in + 2*pad - kernel)/stride) + 1 and must stay >= 1.
struct ConvParams {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int groups = 1;
  PadMode pad_mode = PadMode::zero;

  void validate() const {
    if (stride_h < 1 || stride_w < 1) {
      throw std::invalid_argument("ConvParams: stride must be positive");
    }
    if (pad_h < 0 || pad_w < 0) {
      throw std::invalid_argument("ConvParams: padding must be non-negative");
    }
    if (groups < 1) {
      throw std::invalid_argument("ConvParams: groups must be positive");
    }
  }
};

inline Eigen::Index conv_out_dim(Eigen::Index in, Eigen::Index kernel,
                                 int pad, int stride) {
  return (in + 2 * static_cast<Eigen::Index>(pad) - kernel) / stride + 1;
}

}  // namespace tbnet
