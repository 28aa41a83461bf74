#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "idm/errors.hpp"
#include "idm/rng.hpp"

namespace idm::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Feature maps are (C, B*H*W) with sample b occupying the column block
// [b*H*W, (b+1)*H*W). Column-major storage keeps one pixel's channel vector
// contiguous, matching ImageTensor's interleaved layout.
struct Shape {
  int b = 1, h = 0, w = 0;
  Eigen::Index hw() const { return static_cast<Eigen::Index>(h) * w; }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(b) * h * w; }
};

template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  void init_shape(std::string n, Eigen::Index rows, Eigen::Index cols) {
    name = std::move(n);
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
};

template <typename S>
using ParamRefs = std::vector<Param<S>*>;

inline double silu_s(double x) {
  const double sig = 1.0 / (1.0 + std::exp(-x));
  return x * sig;
}

// ---------------------------------------------------------------------------
// SiLU

template <typename S>
struct SiLU {
  Mat<S> x_cache;

  void forward(const Mat<S>& x, Mat<S>& y) {
    x_cache = x;
    y = x.array() * (S(1) / (S(1) + (-x.array()).exp()));
  }
  void backward(const Mat<S>& gy, Mat<S>& gx) const {
    auto sig = (S(1) / (S(1) + (-x_cache.array()).exp()));
    gx = gy.array() * sig * (S(1) + x_cache.array() * (S(1) - sig));
  }
};

// ---------------------------------------------------------------------------
// Conv2d: 3x3 (stride 1 or 2) or 1x1, zero padding (k-1)/2, im2col + GEMM.

template <typename S>
struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3, stride = 1;
  Param<S> weight;  // (out_ch, in_ch * k * k), column index = (ky*k+kx)*in_ch + c
  Param<S> bias;    // (out_ch, 1)

  Mat<S> col_cache;  // (in_ch*k*k, out_cols), only for k==3
  Mat<S> x_cache;    // for k==1
  Shape in_shape;

  void configure(const std::string& name, int in_c, int out_c, int k, int s) {
    in_ch = in_c;
    out_ch = out_c;
    ksize = k;
    stride = s;
    weight.init_shape(name + ".weight", out_ch, static_cast<Eigen::Index>(in_ch) * k * k);
    bias.init_shape(name + ".bias", out_ch, 1);
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Shape out_shape(const Shape& in) const { return {in.b, in.h / stride, in.w / stride}; }

  void im2col(const Mat<S>& x, const Shape& in, Mat<S>& col) const {
    const int pad = (ksize - 1) / 2;
    const Shape out = out_shape(in);
    col.setZero(static_cast<Eigen::Index>(in_ch) * ksize * ksize, out.cols());
    for (int b = 0; b < in.b; ++b) {
      const Eigen::Index src_base = static_cast<Eigen::Index>(b) * in.hw();
      const Eigen::Index dst_base = static_cast<Eigen::Index>(b) * out.hw();
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          const Eigen::Index dst = dst_base + static_cast<Eigen::Index>(oy) * out.w + ox;
          for (int ky = 0; ky < ksize; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in.h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in.w) continue;
              col.col(dst).segment(static_cast<Eigen::Index>(ky * ksize + kx) * in_ch, in_ch) =
                  x.col(src_base + static_cast<Eigen::Index>(iy) * in.w + ix);
            }
          }
        }
    }
  }

  void col2im(const Mat<S>& gcol, const Shape& in, Mat<S>& gx) const {
    const int pad = (ksize - 1) / 2;
    const Shape out = out_shape(in);
    gx.setZero(in_ch, in.cols());
    for (int b = 0; b < in.b; ++b) {
      const Eigen::Index src_base = static_cast<Eigen::Index>(b) * in.hw();
      const Eigen::Index dst_base = static_cast<Eigen::Index>(b) * out.hw();
      for (int oy = 0; oy < out.h; ++oy)
        for (int ox = 0; ox < out.w; ++ox) {
          const Eigen::Index dst = dst_base + static_cast<Eigen::Index>(oy) * out.w + ox;
          for (int ky = 0; ky < ksize; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= in.h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= in.w) continue;
              gx.col(src_base + static_cast<Eigen::Index>(iy) * in.w + ix) +=
                  gcol.col(dst).segment(static_cast<Eigen::Index>(ky * ksize + kx) * in_ch, in_ch);
            }
          }
        }
    }
  }

  void forward(const Mat<S>& x, const Shape& in, Mat<S>& y) {
    in_shape = in;
    if (ksize == 1 && stride == 1) {
      x_cache = x;
      y.noalias() = weight.value * x;
    } else {
      im2col(x, in, col_cache);
      y.noalias() = weight.value * col_cache;
    }
    y.colwise() += bias.value.col(0);
  }

  void backward(const Mat<S>& gy, Mat<S>& gx) {
    bias.grad.col(0) += gy.rowwise().sum();
    if (ksize == 1 && stride == 1) {
      weight.grad.noalias() += gy * x_cache.transpose();
      gx.noalias() = weight.value.transpose() * gy;
    } else {
      weight.grad.noalias() += gy * col_cache.transpose();
      Mat<S> gcol;
      gcol.noalias() = weight.value.transpose() * gy;
      col2im(gcol, in_shape, gx);
    }
  }
};

// ---------------------------------------------------------------------------
// Linear on (in, B) column batches.

template <typename S>
struct Linear {
  Param<S> weight;  // (out, in)
  Param<S> bias;    // (out, 1)
  Mat<S> x_cache;

  void configure(const std::string& name, int in, int out) {
    weight.init_shape(name + ".weight", out, in);
    bias.init_shape(name + ".bias", out, 1);
  }
  void collect(ParamRefs<S>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  void forward(const Mat<S>& x, Mat<S>& y) {
    x_cache = x;
    y.noalias() = weight.value * x;
    y.colwise() += bias.value.col(0);
  }
  void backward(const Mat<S>& gy, Mat<S>& gx) {
    weight.grad.noalias() += gy * x_cache.transpose();
    bias.grad.col(0) += gy.rowwise().sum();
    gx.noalias() = weight.value.transpose() * gy;
  }
};

// ---------------------------------------------------------------------------
// GroupNorm over (channels/groups, H*W) blocks per sample.

template <typename S>
struct GroupNorm {
  int channels = 0, groups = 1;
  static constexpr S kEps = S(1e-5);
  Param<S> gamma;  // (C,1)
  Param<S> beta;   // (C,1)

  Mat<S> xhat_cache;     // (C, cols)
  Mat<S> inv_std_cache;  // (groups, B)
  Shape shape_cache;

  static int pick_groups(int ch) {
    for (int g : {8, 4, 2})
      if (ch % g == 0 && ch >= 2 * g) return g;
    return 1;
  }

  void configure(const std::string& name, int ch) {
    channels = ch;
    groups = pick_groups(ch);
    gamma.init_shape(name + ".gamma", ch, 1);
    beta.init_shape(name + ".beta", ch, 1);
  }
  void collect(ParamRefs<S>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  void forward(const Mat<S>& x, const Shape& shape, Mat<S>& y) {
    shape_cache = shape;
    const int cg = channels / groups;
    const Eigen::Index hw = shape.hw();
    xhat_cache.resize(channels, x.cols());
    inv_std_cache.resize(groups, shape.b);
    y.resize(channels, x.cols());
    for (int b = 0; b < shape.b; ++b) {
      for (int g = 0; g < groups; ++g) {
        auto block = x.block(g * cg, b * hw, cg, hw);
        const S mu = block.mean();
        const S var = (block.array() - mu).square().mean();
        const S inv_std = S(1) / std::sqrt(var + kEps);
        inv_std_cache(g, b) = inv_std;
        xhat_cache.block(g * cg, b * hw, cg, hw) = (block.array() - mu) * inv_std;
      }
    }
    y = (xhat_cache.array().colwise() * gamma.value.col(0).array()).colwise() +
        beta.value.col(0).array();
  }

  void backward(const Mat<S>& gy, Mat<S>& gx) {
    const int cg = channels / groups;
    const Eigen::Index hw = shape_cache.hw();
    gamma.grad.col(0) += (gy.array() * xhat_cache.array()).rowwise().sum().matrix();
    beta.grad.col(0) += gy.rowwise().sum();
    gx.resize(channels, gy.cols());
    for (int b = 0; b < shape_cache.b; ++b) {
      for (int g = 0; g < groups; ++g) {
        auto gyb = gy.block(g * cg, b * hw, cg, hw);
        auto xhat = xhat_cache.block(g * cg, b * hw, cg, hw);
        Mat<S> gxhat = gyb.array().colwise() * gamma.value.col(0).segment(g * cg, cg).array();
        const S mean_g = gxhat.mean();
        const S mean_gx = (gxhat.array() * xhat.array()).mean();
        gx.block(g * cg, b * hw, cg, hw) =
            inv_std_cache(g, b) * (gxhat.array() - mean_g - xhat.array() * mean_gx);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Single-head self-attention over spatial positions, residual, zero-init
// output projection.

template <typename S>
struct Attention {
  int channels = 0;
  GroupNorm<S> norm;
  Conv2d<S> qkv;   // 1x1, C -> 3C
  Conv2d<S> proj;  // 1x1, C -> C, zero-init

  Mat<S> qkv_cache;              // (3C, cols)
  std::vector<Mat<S>> p_cache;   // per-sample (N, N) softmax rows
  Shape shape_cache;

  void configure(const std::string& name, int ch) {
    channels = ch;
    norm.configure(name + ".norm", ch);
    qkv.configure(name + ".qkv", ch, 3 * ch, 1, 1);
    proj.configure(name + ".proj", ch, ch, 1, 1);
  }
  void collect(ParamRefs<S>& out) {
    norm.collect(out);
    qkv.collect(out);
    proj.collect(out);
  }

  void forward(const Mat<S>& x, const Shape& shape, Mat<S>& y) {
    shape_cache = shape;
    const Eigen::Index n = shape.hw();
    const S scale = S(1) / std::sqrt(static_cast<S>(channels));

    Mat<S> xn, attn_out(channels, x.cols());
    norm.forward(x, shape, xn);
    qkv.forward(xn, shape, qkv_cache);
    p_cache.assign(shape.b, {});
    for (int b = 0; b < shape.b; ++b) {
      auto q = qkv_cache.block(0, b * n, channels, n);
      auto k = qkv_cache.block(channels, b * n, channels, n);
      auto v = qkv_cache.block(2 * channels, b * n, channels, n);
      Mat<S> scores = (q.transpose() * k) * scale;  // (N, N), row = query position
      // row-wise softmax
      Mat<S>& p = p_cache[b];
      p = (scores.colwise() - scores.rowwise().maxCoeff()).array().exp();
      p.array().colwise() /= p.rowwise().sum().array();
      attn_out.middleCols(b * n, n).noalias() = v * p.transpose();
    }
    Mat<S> projected;
    proj.forward(attn_out, shape, projected);
    y = x + projected;
  }

  void backward(const Mat<S>& gy, Mat<S>& gx) {
    const Eigen::Index n = shape_cache.hw();
    const S scale = S(1) / std::sqrt(static_cast<S>(channels));

    Mat<S> g_attn;
    proj.backward(gy, g_attn);
    Mat<S> g_qkv(3 * channels, gy.cols());
    for (int b = 0; b < shape_cache.b; ++b) {
      auto q = qkv_cache.block(0, b * n, channels, n);
      auto k = qkv_cache.block(channels, b * n, channels, n);
      auto v = qkv_cache.block(2 * channels, b * n, channels, n);
      const Mat<S>& p = p_cache[b];
      auto go = g_attn.middleCols(b * n, n);

      Mat<S> gp = go.transpose() * v;          // (N, N); out = v * p^T
      Mat<S> gv = v;                           // shape only
      gv.noalias() = go * p;                   // (C, N)
      // softmax backward per row
      Mat<S> gscores(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        const S dot = gp.row(r).dot(p.row(r));
        gscores.row(r) = (gp.row(r).array() - dot) * p.row(r).array();
      }
      gscores *= scale;
      g_qkv.block(0, b * n, channels, n).noalias() = k * gscores.transpose();
      g_qkv.block(channels, b * n, channels, n).noalias() = q * gscores;
      g_qkv.block(2 * channels, b * n, channels, n) = gv;
    }
    Mat<S> g_xn, g_norm_in;
    qkv.backward(g_qkv, g_xn);
    norm.backward(g_xn, g_norm_in);
    gx = gy + g_norm_in;
  }
};

// ---------------------------------------------------------------------------
// Nearest-neighbor x2 upsample followed by a 3x3 conv.

template <typename S>
struct Upsample {
  Conv2d<S> conv;
  Shape in_cache;

  void configure(const std::string& name, int ch) { conv.configure(name + ".conv", ch, ch, 3, 1); }
  void collect(ParamRefs<S>& out) { conv.collect(out); }

  static void nearest2x(const Mat<S>& x, const Shape& in, Mat<S>& y) {
    const Shape out{in.b, in.h * 2, in.w * 2};
    y.resize(x.rows(), out.cols());
    for (int b = 0; b < in.b; ++b)
      for (int iy = 0; iy < in.h; ++iy)
        for (int ix = 0; ix < in.w; ++ix) {
          const auto src = x.col(static_cast<Eigen::Index>(b) * in.hw() + static_cast<Eigen::Index>(iy) * in.w + ix);
          const Eigen::Index base =
              static_cast<Eigen::Index>(b) * out.hw() + static_cast<Eigen::Index>(2 * iy) * out.w + 2 * ix;
          y.col(base) = src;
          y.col(base + 1) = src;
          y.col(base + out.w) = src;
          y.col(base + out.w + 1) = src;
        }
  }

  void forward(const Mat<S>& x, const Shape& in, Mat<S>& y) {
    in_cache = in;
    Mat<S> up;
    nearest2x(x, in, up);
    conv.forward(up, {in.b, in.h * 2, in.w * 2}, y);
  }

  void backward(const Mat<S>& gy, Mat<S>& gx) {
    Mat<S> gup;
    conv.backward(gy, gup);
    const Shape& in = in_cache;
    const Shape out{in.b, in.h * 2, in.w * 2};
    gx.resize(gup.rows(), in.cols());
    for (int b = 0; b < in.b; ++b)
      for (int iy = 0; iy < in.h; ++iy)
        for (int ix = 0; ix < in.w; ++ix) {
          const Eigen::Index base =
              static_cast<Eigen::Index>(b) * out.hw() + static_cast<Eigen::Index>(2 * iy) * out.w + 2 * ix;
          gx.col(static_cast<Eigen::Index>(b) * in.hw() + static_cast<Eigen::Index>(iy) * in.w + ix) =
              gup.col(base) + gup.col(base + 1) + gup.col(base + out.w) + gup.col(base + out.w + 1);
        }
  }
};

// ---------------------------------------------------------------------------
// Residual block with additive embedding injection.

template <typename S>
struct ResBlock {
  int in_ch = 0, out_ch = 0;
  GroupNorm<S> norm1;
  SiLU<S> act1;
  Conv2d<S> conv1;
  Linear<S> emb_proj;  // (emb_dim -> out_ch), input already activated
  GroupNorm<S> norm2;
  SiLU<S> act2;
  Conv2d<S> conv2;
  std::unique_ptr<Conv2d<S>> skip;  // 1x1 when in_ch != out_ch

  void configure(const std::string& name, int in_c, int out_c, int emb_dim) {
    in_ch = in_c;
    out_ch = out_c;
    norm1.configure(name + ".norm1", in_c);
    conv1.configure(name + ".conv1", in_c, out_c, 3, 1);
    emb_proj.configure(name + ".emb_proj", emb_dim, out_c);
    norm2.configure(name + ".norm2", out_c);
    conv2.configure(name + ".conv2", out_c, out_c, 3, 1);
    if (in_c != out_c) {
      skip = std::make_unique<Conv2d<S>>();
      skip->configure(name + ".skip", in_c, out_c, 1, 1);
    }
  }
  void collect(ParamRefs<S>& out) {
    norm1.collect(out);
    conv1.collect(out);
    emb_proj.collect(out);
    norm2.collect(out);
    conv2.collect(out);
    if (skip) skip->collect(out);
  }

  // emb: (emb_dim, B); g_emb accumulates the embedding gradient.
  void forward(const Mat<S>& x, const Mat<S>& emb, const Shape& shape, Mat<S>& y) {
    Mat<S> h, a;
    norm1.forward(x, shape, h);
    act1.forward(h, a);
    conv1.forward(a, shape, h);

    Mat<S> eproj;
    emb_proj.forward(emb, eproj);
    const Eigen::Index hw = shape.hw();
    for (int b = 0; b < shape.b; ++b) h.middleCols(b * hw, hw).colwise() += eproj.col(b);

    Mat<S> h2, a2;
    norm2.forward(h, shape, h2);
    act2.forward(h2, a2);
    conv2.forward(a2, shape, h2);

    if (skip) {
      Mat<S> xs;
      skip->forward(x, shape, xs);
      y = h2 + xs;
    } else {
      y = h2 + x;
    }
  }

  void backward(const Mat<S>& gy, const Shape& shape, Mat<S>& gx, Mat<S>& g_emb) {
    Mat<S> g = gy, tmp;
    conv2.backward(g, tmp);
    act2.backward(tmp, g);
    Mat<S> gh;
    norm2.backward(g, gh);

    // embedding bias add: per-sample column sums
    const Eigen::Index hw = shape.hw();
    Mat<S> geproj(out_ch, shape.b);
    for (int b = 0; b < shape.b; ++b) geproj.col(b) = gh.middleCols(b * hw, hw).rowwise().sum();
    Mat<S> gemb_local;
    emb_proj.backward(geproj, gemb_local);
    g_emb += gemb_local;

    conv1.backward(gh, tmp);
    act1.backward(tmp, g);
    norm1.backward(g, gx);

    if (skip) {
      Mat<S> gskip;
      skip->backward(gy, gskip);
      gx += gskip;
    } else {
      gx += gy;
    }
  }
};

}  // namespace idm::nn
