#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "tbnet/tensor.hpp"

namespace tbnet {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Per-side spatial padding amounts.
struct PadSpec {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

/// Reflect-101: the edge element is not repeated, e.g. row (1,2,3) padded
/// by one on each side becomes (2,1,2,3,2). Reflect amounts must be
/// strictly smaller than the corresponding spatial dimension.
template <typename Scalar>
Tensor4<Scalar> pad(const Tensor4<Scalar>& x, const PadSpec& p, PadMode mode) {
  if (p.top < 0 || p.bottom < 0 || p.left < 0 || p.right < 0) {
    throw std::invalid_argument("pad: amounts must be non-negative");
  }
  if (mode == PadMode::reflect) {
    const int max_h = static_cast<int>(x.h()) - 1;
    const int max_w = static_cast<int>(x.w()) - 1;
    if (p.top > max_h || p.bottom > max_h || p.left > max_w ||
        p.right > max_w) {
      throw std::invalid_argument(
          "pad: reflect amount must be < spatial dim, input " + x.shape_str());
    }
  }
  Tensor4<Scalar> out(x.n(), x.c(), x.h() + p.top + p.bottom,
                      x.w() + p.left + p.right);
  out.dtype = x.dtype;
  for (Eigen::Index n = 0; n < x.n(); ++n) {
    for (Eigen::Index c = 0; c < x.c(); ++c) {
      for (Eigen::Index oh = 0; oh < out.h(); ++oh) {
        Eigen::Index ih = oh - p.top;
        if (ih < 0 || ih >= x.h()) {
          if (mode == PadMode::zero) continue;  // out already zero
          ih = ih < 0 ? -ih : 2 * (x.h() - 1) - ih;
        }
        for (Eigen::Index ow = 0; ow < out.w(); ++ow) {
          Eigen::Index iw = ow - p.left;
          if (iw < 0 || iw >= x.w()) {
            if (mode == PadMode::zero) continue;
            iw = iw < 0 ? -iw : 2 * (x.w() - 1) - iw;
          }
          out.at(n, c, oh, ow) = x.at(n, c, ih, iw);
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> crop(const Tensor4<Scalar>& x, Eigen::Index top,
                     Eigen::Index left, Eigen::Index height,
                     Eigen::Index width) {
  if (top < 0 || left < 0 || top + height > x.h() || left + width > x.w()) {
    throw std::invalid_argument("crop: window out of bounds for input " +
                                x.shape_str());
  }
  Tensor4<Scalar> out(x.n(), x.c(), height, width);
  out.dtype = x.dtype;
  for (Eigen::Index n = 0; n < x.n(); ++n) {
    for (Eigen::Index c = 0; c < x.c(); ++c) {
      out.plane(n, c) = x.plane(n, c).block(top, left, height, width);
    }
  }
  return out;
}

namespace detail {

/// Lowers the receptive fields of one sample/group into a
/// (Cg*kh*kw) x (outH*outW) column matrix. Out-of-range taps read as the
/// convolution's own padding (zero or reflect-101).
template <typename Scalar>
void im2col(const Tensor4<Scalar>& x, Eigen::Index n, Eigen::Index c0,
            Eigen::Index cg, Eigen::Index kh, Eigen::Index kw,
            const ConvParams& p, Eigen::Index out_h, Eigen::Index out_w,
            MatX<Scalar>& cols) {
  cols.setZero(cg * kh * kw, out_h * out_w);
  const Eigen::Index H = x.h(), W = x.w();
  for (Eigen::Index c = 0; c < cg; ++c) {
    auto src = x.plane(n, c0 + c);
    for (Eigen::Index ki = 0; ki < kh; ++ki) {
      for (Eigen::Index kj = 0; kj < kw; ++kj) {
        const Eigen::Index row = (c * kh + ki) * kw + kj;
        for (Eigen::Index oi = 0; oi < out_h; ++oi) {
          Eigen::Index ih = oi * p.stride_h - p.pad_h + ki;
          if (ih < 0 || ih >= H) {
            if (p.pad_mode == PadMode::zero) continue;
            ih = ih < 0 ? -ih : 2 * (H - 1) - ih;
          }
          for (Eigen::Index oj = 0; oj < out_w; ++oj) {
            Eigen::Index iw = oj * p.stride_w - p.pad_w + kj;
            if (iw < 0 || iw >= W) {
              if (p.pad_mode == PadMode::zero) continue;
              iw = iw < 0 ? -iw : 2 * (W - 1) - iw;
            }
            cols(row, oi * out_w + oj) = src(ih, iw);
          }
        }
      }
    }
  }
}

/// Scatter-add of a column matrix back onto the input gradient.
template <typename Scalar>
void col2im_add(Tensor4<Scalar>& gx, Eigen::Index n, Eigen::Index c0,
                Eigen::Index cg, Eigen::Index kh, Eigen::Index kw,
                const ConvParams& p, Eigen::Index out_h, Eigen::Index out_w,
                const MatX<Scalar>& cols) {
  const Eigen::Index H = gx.h(), W = gx.w();
  for (Eigen::Index c = 0; c < cg; ++c) {
    auto dst = gx.plane(n, c0 + c);
    for (Eigen::Index ki = 0; ki < kh; ++ki) {
      for (Eigen::Index kj = 0; kj < kw; ++kj) {
        const Eigen::Index row = (c * kh + ki) * kw + kj;
        for (Eigen::Index oi = 0; oi < out_h; ++oi) {
          Eigen::Index ih = oi * p.stride_h - p.pad_h + ki;
          if (ih < 0 || ih >= H) {
            if (p.pad_mode == PadMode::zero) continue;
            ih = ih < 0 ? -ih : 2 * (H - 1) - ih;
          }
          for (Eigen::Index oj = 0; oj < out_w; ++oj) {
            Eigen::Index iw = oj * p.stride_w - p.pad_w + kj;
            if (iw < 0 || iw >= W) {
              if (p.pad_mode == PadMode::zero) continue;
              iw = iw < 0 ? -iw : 2 * (W - 1) - iw;
            }
            dst(ih, iw) += cols(row, oi * out_w + oj);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void check_conv_shapes(const Tensor4<Scalar>& x, const Tensor4<Scalar>& k,
                       const ConvParams& p, Eigen::Index& out_h,
                       Eigen::Index& out_w) {
  p.validate();
  if (x.c() % p.groups != 0 || k.n() % p.groups != 0) {
    throw std::invalid_argument(
        "conv2d: groups=" + std::to_string(p.groups) +
        " must divide input channels and output channels, input " +
        x.shape_str() + " kernel " + k.shape_str());
  }
  if (k.c() != x.c() / p.groups) {
    throw std::invalid_argument("conv2d: kernel shape " + k.shape_str() +
                                " incompatible with input " + x.shape_str() +
                                " at groups=" + std::to_string(p.groups));
  }
  out_h = conv_out_dim(x.h(), k.h(), p.pad_h, p.stride_h);
  out_w = conv_out_dim(x.w(), k.w(), p.pad_w, p.stride_w);
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("conv2d: zero-size output for input " +
                                x.shape_str() + " kernel " + k.shape_str());
  }
}

}  // namespace detail

/// Cross-correlation with kernel layout (outC, inC/groups, kH, kW).
/// Accumulation happens in the Scalar type, which is at least single
/// precision for every instantiation used by the engine.
template <typename Scalar>
Tensor4<Scalar> conv2d(const Tensor4<Scalar>& x, const Tensor4<Scalar>& k,
                       const std::optional<VecX<Scalar>>& bias,
                       const ConvParams& p) {
  Eigen::Index out_h = 0, out_w = 0;
  detail::check_conv_shapes(x, k, p, out_h, out_w);
  if (bias && bias->size() != k.n()) {
    throw std::invalid_argument("conv2d: bias length " +
                                std::to_string(bias->size()) +
                                " != out channels " + std::to_string(k.n()));
  }
  const Eigen::Index g = p.groups;
  const Eigen::Index cg = x.c() / g;       // in channels per group
  const Eigen::Index og = k.n() / g;       // out channels per group
  const Eigen::Index patch = cg * k.h() * k.w();

  Tensor4<Scalar> out(x.n(), k.n(), out_h, out_w);
  out.dtype = x.dtype;
  MatX<Scalar> cols;
  for (Eigen::Index n = 0; n < x.n(); ++n) {
    for (Eigen::Index gi = 0; gi < g; ++gi) {
      Eigen::Map<const MatX<Scalar>> wmat(k.data.data() + gi * og * patch,
                                          patch, og);
      Eigen::Map<MatX<Scalar>> omat(
          out.data.data() + out.index(n, gi * og, 0, 0), out_h * out_w, og);
      if (k.h() == 1 && k.w() == 1 && p.stride_h == 1 && p.stride_w == 1 &&
          p.pad_h == 0 && p.pad_w == 0) {
        // 1x1 pointwise: the patch matrix is the input itself.
        Eigen::Map<const MatX<Scalar>> xmat(
            x.data.data() + x.index(n, gi * cg, 0, 0), out_h * out_w, cg);
        omat.noalias() = xmat * wmat;
      } else {
        detail::im2col(x, n, gi * cg, cg, k.h(), k.w(), p, out_h, out_w, cols);
        omat.noalias() = cols.transpose() * wmat;
      }
      if (bias) {
        omat.rowwise() += bias->segment(gi * og, og).transpose();
      }
    }
  }
  return out;
}

/// Gradients of conv2d with respect to input, kernel, and bias.
/// Any of the output pointers may be null to skip that gradient.
template <typename Scalar>
void conv2d_backward(const Tensor4<Scalar>& x, const Tensor4<Scalar>& k,
                     const ConvParams& p, const Tensor4<Scalar>& grad_out,
                     Tensor4<Scalar>* grad_x, Tensor4<Scalar>* grad_k,
                     VecX<Scalar>* grad_bias) {
  Eigen::Index out_h = 0, out_w = 0;
  detail::check_conv_shapes(x, k, p, out_h, out_w);
  if (grad_out.n() != x.n() || grad_out.c() != k.n() ||
      grad_out.h() != out_h || grad_out.w() != out_w) {
    throw std::invalid_argument("conv2d_backward: grad shape " +
                                grad_out.shape_str() + " mismatch");
  }
  const Eigen::Index g = p.groups;
  const Eigen::Index cg = x.c() / g;
  const Eigen::Index og = k.n() / g;
  const Eigen::Index patch = cg * k.h() * k.w();

  if (grad_x) {
    *grad_x = Tensor4<Scalar>(x.n(), x.c(), x.h(), x.w());
  }
  if (grad_k) {
    *grad_k = Tensor4<Scalar>(k.n(), k.c(), k.h(), k.w());
  }
  if (grad_bias) {
    grad_bias->setZero(k.n());
  }

  const bool pointwise = k.h() == 1 && k.w() == 1 && p.stride_h == 1 &&
                         p.stride_w == 1 && p.pad_h == 0 && p.pad_w == 0;
  MatX<Scalar> cols, gcols;
  for (Eigen::Index n = 0; n < x.n(); ++n) {
    for (Eigen::Index gi = 0; gi < g; ++gi) {
      Eigen::Map<const MatX<Scalar>> gmat(
          grad_out.data.data() + grad_out.index(n, gi * og, 0, 0),
          out_h * out_w, og);
      Eigen::Map<const MatX<Scalar>> wmat(k.data.data() + gi * og * patch,
                                          patch, og);
      if (grad_k) {
        Eigen::Map<MatX<Scalar>> gw(grad_k->data.data() + gi * og * patch,
                                    patch, og);
        if (pointwise) {
          Eigen::Map<const MatX<Scalar>> xmat(
              x.data.data() + x.index(n, gi * cg, 0, 0), out_h * out_w, cg);
          gw.noalias() += xmat.transpose() * gmat;
        } else {
          detail::im2col(x, n, gi * cg, cg, k.h(), k.w(), p, out_h, out_w,
                         cols);
          gw.noalias() += cols * gmat;
        }
      }
      if (grad_x) {
        if (pointwise) {
          Eigen::Map<MatX<Scalar>> gxmat(
              grad_x->data.data() + grad_x->index(n, gi * cg, 0, 0),
              out_h * out_w, cg);
          gxmat.noalias() += gmat * wmat.transpose();
        } else {
          gcols.noalias() = wmat * gmat.transpose();
          detail::col2im_add(*grad_x, n, gi * cg, cg, k.h(), k.w(), p, out_h,
                             out_w, gcols);
        }
      }
      if (grad_bias) {
        grad_bias->segment(gi * og, og) += gmat.colwise().sum().transpose();
      }
    }
  }
}

/// Affine map over the flattened input: out = x_flat * weight + bias,
/// where x is flattened to N x F with F = C*H*W.
template <typename Scalar>
Tensor4<Scalar> dense(const Tensor4<Scalar>& x, const MatX<Scalar>& weight,
                      const VecX<Scalar>& bias) {
  const Eigen::Index features = x.c() * x.h() * x.w();
  if (weight.rows() != features || weight.cols() != bias.size()) {
    throw std::invalid_argument(
        "dense: weight " + std::to_string(weight.rows()) + "x" +
        std::to_string(weight.cols()) + " incompatible with input " +
        x.shape_str() + " and bias length " + std::to_string(bias.size()));
  }
  Tensor4<Scalar> out(x.n(), weight.cols(), 1, 1);
  out.dtype = x.dtype;
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      xmat(x.data.data(), x.n(), features);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>
      omat(out.data.data(), x.n(), weight.cols());
  omat.noalias() = xmat * weight;
  omat.rowwise() += bias.transpose();
  return out;
}

template <typename Scalar>
void dense_backward(const Tensor4<Scalar>& x, const MatX<Scalar>& weight,
                    const Tensor4<Scalar>& grad_out, Tensor4<Scalar>* grad_x,
                    MatX<Scalar>* grad_w, VecX<Scalar>* grad_b) {
  const Eigen::Index features = x.c() * x.h() * x.w();
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      xmat(x.data.data(), x.n(), features);
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      gmat(grad_out.data.data(), x.n(), weight.cols());
  if (grad_w) {
    grad_w->noalias() = xmat.transpose() * gmat;
  }
  if (grad_b) {
    *grad_b = gmat.colwise().sum().transpose();
  }
  if (grad_x) {
    *grad_x = Tensor4<Scalar>(x.n(), x.c(), x.h(), x.w());
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>
        gxmat(grad_x->data.data(), x.n(), features);
    gxmat.noalias() = gmat * weight.transpose();
  }
}

/// Squeeze step of channel attention: mean over each channel plane.
template <typename Scalar>
Tensor4<Scalar> global_avg_pool(const Tensor4<Scalar>& x) {
  Tensor4<Scalar> out(x.n(), x.c(), 1, 1);
  out.dtype = x.dtype;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.h() * x.w());
  for (Eigen::Index n = 0; n < x.n(); ++n) {
    for (Eigen::Index c = 0; c < x.c(); ++c) {
      out.at(n, c, 0, 0) = x.plane(n, c).sum() * inv;
    }
  }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> global_avg_pool_backward(const Tensor4<Scalar>& x,
                                         const Tensor4<Scalar>& grad_out) {
  Tensor4<Scalar> gx(x.n(), x.c(), x.h(), x.w());
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.h() * x.w());
  for (Eigen::Index n = 0; n < x.n(); ++n) {
    for (Eigen::Index c = 0; c < x.c(); ++c) {
      gx.plane(n, c).setConstant(grad_out.at(n, c, 0, 0) * inv);
    }
  }
  return gx;
}

namespace detail {

template <typename Scalar, typename Op>
Tensor4<Scalar> elementwise(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b,
                            Op op, const char* name) {
  if (a.same_shape(b)) {
    Tensor4<Scalar> out = a;
    for (Eigen::Index i = 0; i < out.numel(); ++i) {
      out.data[i] = op(a.data[i], b.data[i]);
    }
    return out;
  }
  // Per-channel broadcast: b is (N, C, 1, 1).
  if (b.n() == a.n() && b.c() == a.c() && b.h() == 1 && b.w() == 1) {
    Tensor4<Scalar> out = a;
    for (Eigen::Index n = 0; n < a.n(); ++n) {
      for (Eigen::Index c = 0; c < a.c(); ++c) {
        const Scalar bv = b.at(n, c, 0, 0);
        auto pl = out.plane(n, c);
        for (Eigen::Index i = 0; i < pl.rows(); ++i) {
          for (Eigen::Index j = 0; j < pl.cols(); ++j) {
            pl(i, j) = op(pl(i, j), bv);
          }
        }
      }
    }
    return out;
  }
  throw std::invalid_argument(std::string(name) + ": incompatible shapes " +
                              a.shape_str() + " and " + b.shape_str());
}

}  // namespace detail

template <typename Scalar>
Tensor4<Scalar> add(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  return detail::elementwise(
      a, b, [](Scalar x, Scalar y) { return x + y; }, "add");
}

template <typename Scalar>
Tensor4<Scalar> mul(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  return detail::elementwise(
      a, b, [](Scalar x, Scalar y) { return x * y; }, "mul");
}

}  // namespace tbnet
