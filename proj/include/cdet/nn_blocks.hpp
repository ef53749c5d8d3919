#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/conv_ops.hpp"
#include "cdet/norm_ops.hpp"
#include "cdet/ops.hpp"
#include "cdet/rng.hpp"

namespace cdet {

template <typename T>
struct ParamRegistry {
  std::vector<std::pair<std::string, Var<T>>> items;

  void add(const std::string& name, const Var<T>& v) { items.emplace_back(name, v); }

  Var<T> find(const std::string& name) const {
    for (const auto& [n, v] : items)
      if (n == name) return v;
    return nullptr;
  }

  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : items) n += v->value.numel();
    return n;
  }
};

namespace init {

// He-normal initialization keyed by parameter name, so layouts that share a
// seed produce the same weights regardless of construction order.
template <typename T>
Tensor<T> he_conv(const RngState& rng, const std::string& name, std::int64_t cout,
                  std::int64_t cin, std::int64_t kh, std::int64_t kw) {
  Rng stream = rng.stream("init." + name);
  const T stddev = std::sqrt(T(2) / static_cast<T>(cin * kh * kw));
  return Tensor<T>::randn({cout, cin, kh, kw}, stream, stddev);
}

}  // namespace init

// ---------------------------------------------------------------------------
// ACON-C: f(x) = (p1-p2)x * sigmoid(beta (p1-p2) x) + p2 x, per-channel
// learnable p1, p2, beta. With p1=1, p2=0, beta=1 this is Swish; large beta
// approaches ReLU; p1=p2 collapses to a linear map.
// ---------------------------------------------------------------------------

template <typename T>
struct AconParams {
  Var<T> p1, p2, beta;

  AconParams() = default;
  AconParams(std::int64_t channels, const RngState&, const std::string&) {
    p1 = make_leaf(Tensor<T>::full({channels}, T(1)), true);
    p2 = make_leaf(Tensor<T>::zeros({channels}), true);
    beta = make_leaf(Tensor<T>::full({channels}, T(1)), true);
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) const {
    reg.add(prefix + ".p1", p1);
    reg.add(prefix + ".p2", p2);
    reg.add(prefix + ".beta", beta);
  }
};

template <typename T>
Var<T> acon_c(const Var<T>& x, const AconParams<T>& params) {
  const auto& xs = x->value.shape();
  if (xs.size() != 4) throw std::invalid_argument("acon_c: expects (N,C,H,W) input");
  const std::int64_t N = xs[0], C = xs[1], plane = xs[2] * xs[3];
  if (params.p1->value.numel() != C || params.p2->value.numel() != C ||
      params.beta->value.numel() != C)
    throw std::invalid_argument("acon_c: parameter shapes do not match channel count");

  Tensor<T> out(xs);
  Tensor<T> sig(xs);  // saved sigmoid values for the backward pass
  const T* px = x->value.data();
  const T* p1 = params.p1->value.data();
  const T* p2 = params.p2->value.data();
  const T* pb = params.beta->value.data();
  T* po = out.data();
  T* ps = sig.data();
#pragma omp parallel for collapse(2)
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const T d = p1[c] - p2[c];
      const std::int64_t off = (n * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const T xv = px[off + i];
        const T s = T(1) / (T(1) + std::exp(-pb[c] * d * xv));
        ps[off + i] = s;
        po[off + i] = d * xv * s + p2[c] * xv;
      }
    }

  Var<T> vp1 = params.p1, vp2 = params.p2, vbeta = params.beta;
  return make_node<T>(
      std::move(out), {x, vp1, vp2, vbeta}, [x, vp1, vp2, vbeta, sig, N, C, plane](VarNode<T>& node) {
        const T* px = x->value.data();
        const T* p1 = vp1->value.data();
        const T* p2 = vp2->value.data();
        const T* pb = vbeta->value.data();
        const T* ps = sig.data();
        const T* g = node.grad.data();
        Tensor<T>* gx = x->needs_grad ? &ensure_grad(*x) : nullptr;
        Tensor<T>* g1 = vp1->needs_grad ? &ensure_grad(*vp1) : nullptr;
        Tensor<T>* g2 = vp2->needs_grad ? &ensure_grad(*vp2) : nullptr;
        Tensor<T>* gb = vbeta->needs_grad ? &ensure_grad(*vbeta) : nullptr;
#pragma omp parallel for
        for (std::int64_t c = 0; c < C; ++c) {
          const T d = p1[c] - p2[c];
          const T bc = pb[c];
          T acc1 = T(0), acc2 = T(0), accb = T(0);
          for (std::int64_t n = 0; n < N; ++n) {
            const std::int64_t off = (n * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              const T xv = px[off + i];
              const T s = ps[off + i];
              const T sp = s * (T(1) - s);
              const T gv = g[off + i];
              if (gx)
                gx->data()[off + i] += gv * (d * s + d * xv * sp * bc * d + p2[c]);
              const T common = xv * s + bc * d * xv * xv * sp;
              acc1 += gv * common;
              acc2 += gv * (xv - common);
              accb += gv * d * d * xv * xv * sp;
            }
          }
          if (g1) g1->data()[c] += acc1;
          if (g2) g2->data()[c] += acc2;
          if (gb) gb->data()[c] += accb;
        }
      });
}

// ---------------------------------------------------------------------------
// CBAM: channel attention (avg+max pooled, shared two-layer MLP, h-sigmoid
// gate) followed by spatial attention (channelwise avg&max stacked, kxk conv,
// h-sigmoid gate).
// ---------------------------------------------------------------------------

template <typename T>
struct CbamParams {
  std::int64_t channels = 0;
  std::int64_t hidden = 0;
  std::int64_t spatial_kernel = 7;
  Var<T> w1, b1, w2, b2;  // shared MLP as 1x1 convs
  Var<T> w_sp, b_sp;      // spatial conv over the stacked avg/max maps

  CbamParams() = default;

  CbamParams(std::int64_t channels_, const RngState& rng, const std::string& name,
             std::int64_t reduction = 16, std::int64_t spatial_kernel_ = 7)
      : channels(channels_), spatial_kernel(spatial_kernel_) {
    if (channels < 1) throw ConfigError("cbam: channel count must be >= 1");
    if (spatial_kernel % 2 == 0) throw ConfigError("cbam: spatial kernel must be odd");
    // Reduction is clamped so thin layers still get a one-unit bottleneck.
    hidden = std::max<std::int64_t>(channels / reduction, 1);
    w1 = make_leaf(init::he_conv<T>(rng, name + ".mlp1.w", hidden, channels, 1, 1), true);
    b1 = make_leaf(Tensor<T>::zeros({hidden}), true);
    w2 = make_leaf(init::he_conv<T>(rng, name + ".mlp2.w", channels, hidden, 1, 1), true);
    b2 = make_leaf(Tensor<T>::zeros({channels}), true);
    w_sp = make_leaf(init::he_conv<T>(rng, name + ".spatial.w", 1, 2, spatial_kernel,
                                      spatial_kernel),
                     true);
    b_sp = make_leaf(Tensor<T>::zeros({1}), true);
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) const {
    reg.add(prefix + ".mlp1.w", w1);
    reg.add(prefix + ".mlp1.b", b1);
    reg.add(prefix + ".mlp2.w", w2);
    reg.add(prefix + ".mlp2.b", b2);
    reg.add(prefix + ".spatial.w", w_sp);
    reg.add(prefix + ".spatial.b", b_sp);
  }
};

template <typename T>
Var<T> cbam(const Var<T>& x, const CbamParams<T>& p) {
  if (x->value.dim(1) != p.channels)
    throw std::invalid_argument("cbam: input channels do not match parameters");
  auto mlp = [&](const Var<T>& v) {
    return conv2d(relu(conv2d(v, p.w1, p.b1, 1, 0)), p.w2, p.b2, 1, 0);
  };
  Var<T> gate_c = h_sigmoid(add(mlp(global_avg_pool(x)), mlp(global_max_pool(x))));
  Var<T> y = mul_bcast(x, gate_c);
  Var<T> stats = concat_channels(channel_mean(y), channel_max(y));
  Var<T> gate_s = h_sigmoid(conv2d(stats, p.w_sp, p.b_sp, 1, p.spatial_kernel / 2));
  return mul_bcast(y, gate_s);
}

// ---------------------------------------------------------------------------
// Deformable convolution (3x3, no modulation). Sampling positions are the
// regular grid plus per-location offsets; fractional positions are read with
// bilinear interpolation and out-of-bounds samples are zero.
// ---------------------------------------------------------------------------

namespace detail {

// Bilinear read with zero extension outside the image.
template <typename T>
T bilinear_sample(const T* im, std::int64_t H, std::int64_t W, T y, T x) {
  if (y <= T(-1) || y >= static_cast<T>(H) || x <= T(-1) || x >= static_cast<T>(W)) return T(0);
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
  const T dy = y - static_cast<T>(y0);
  const T dx = x - static_cast<T>(x0);
  auto v = [&](std::int64_t yy, std::int64_t xx) -> T {
    return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? im[yy * W + xx] : T(0);
  };
  const T top = v(y0, x0) * (T(1) - dx) + v(y0, x0 + 1) * dx;
  const T bot = v(y0 + 1, x0) * (T(1) - dx) + v(y0 + 1, x0 + 1) * dx;
  return top * (T(1) - dy) + bot * dy;
}

}  // namespace detail

// Core deformable op with explicit offsets (N, 2*kh*kw, Ho, Wo); channel 2t
// is the y-offset and 2t+1 the x-offset of tap t in row-major kernel order.
template <typename T>
Var<T> deform_conv2d_with_offsets(const Var<T>& x, const Var<T>& w, const Var<T>& b,
                                  const Var<T>& offsets, std::int64_t stride, std::int64_t pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  const std::int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const std::int64_t Cout = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != Cin) throw std::invalid_argument("deform_conv2d: channel mismatch");
  const std::int64_t Ho = detail::conv_out_dim(H, kh, stride, pad);
  const std::int64_t Wo = detail::conv_out_dim(W, kw, stride, pad);
  const std::int64_t taps = kh * kw, K = Cin * taps, P = Ho * Wo;
  const auto& os = offsets->value.shape();
  if (os[0] != N || os[1] != 2 * taps || os[2] != Ho || os[3] != Wo)
    throw std::invalid_argument("deform_conv2d: offset tensor must be (N," +
                                std::to_string(2 * taps) + ",Ho,Wo), got " +
                                offsets->value.shape_str());

  // Deformed im2col: cols[(ci,t), p] = bilinear sample at grid + offset.
  auto build_cols = [=](const T* xn, const T* on, T* cols) {
    for (std::int64_t ci = 0; ci < Cin; ++ci) {
      const T* im = xn + ci * H * W;
      for (std::int64_t t = 0; t < taps; ++t) {
        const std::int64_t ky = t / kw, kx = t % kw;
        const T* oy_map = on + (2 * t) * P;
        const T* ox_map = on + (2 * t + 1) * P;
        T* row = cols + (ci * taps + t) * P;
        for (std::int64_t oy = 0; oy < Ho; ++oy)
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t pi = oy * Wo + ox;
            const T sy = static_cast<T>(oy * stride - pad + ky) + oy_map[pi];
            const T sx = static_cast<T>(ox * stride - pad + kx) + ox_map[pi];
            row[pi] = detail::bilinear_sample(im, H, W, sy, sx);
          }
      }
    }
  };

  Tensor<T> out({N, Cout, Ho, Wo});
  {
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    for (std::int64_t n = 0; n < N; ++n) {
      build_cols(x->value.data() + n * Cin * H * W, offsets->value.data() + n * 2 * taps * P,
                 cols.data());
      gemm(w->value.data(), cols.data(), out.data() + n * Cout * P, Cout, K, P);
    }
    if (b) {
      T* po = out.data();
      const T* pb = b->value.data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < Cout; ++c)
          for (std::int64_t i = 0; i < P; ++i) po[(n * Cout + c) * P + i] += pb[c];
    }
  }

  std::vector<Var<T>> parents =
      b ? std::vector<Var<T>>{x, w, b, offsets} : std::vector<Var<T>>{x, w, offsets};
  return make_node<T>(std::move(out), parents, [x, w, b, offsets, build_cols, N, Cin, H, W, Cout,
                                                kh, kw, stride, pad, Ho, Wo, taps, K,
                                                P](VarNode<T>& node) {
    const T* g = node.grad.data();
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    std::vector<T> gcols(static_cast<std::size_t>(K * P));
    Tensor<T>* gx = x->needs_grad ? &ensure_grad(*x) : nullptr;
    Tensor<T>* gw = w->needs_grad ? &ensure_grad(*w) : nullptr;
    Tensor<T>* go = offsets->needs_grad ? &ensure_grad(*offsets) : nullptr;
    for (std::int64_t n = 0; n < N; ++n) {
      const T* gn = g + n * Cout * P;
      const T* xn = x->value.data() + n * Cin * H * W;
      const T* on = offsets->value.data() + n * 2 * taps * P;
      if (gw) {
        build_cols(xn, on, cols.data());
        gemm(gn, cols.data(), gw->data(), Cout, P, K, false, true, true);
      }
      if (gx || go) {
        gemm(w->value.data(), gn, gcols.data(), K, Cout, P, true, false, false);
        for (std::int64_t ci = 0; ci < Cin; ++ci) {
          const T* im = xn + ci * H * W;
          for (std::int64_t t = 0; t < taps; ++t) {
            const std::int64_t ky = t / kw, kx = t % kw;
            const T* oy_map = on + (2 * t) * P;
            const T* ox_map = on + (2 * t + 1) * P;
            const T* grow = gcols.data() + (ci * taps + t) * P;
            for (std::int64_t oy = 0; oy < Ho; ++oy)
              for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const std::int64_t pi = oy * Wo + ox;
                const T gv = grow[pi];
                if (gv == T(0)) continue;
                const T sy = static_cast<T>(oy * stride - pad + ky) + oy_map[pi];
                const T sx = static_cast<T>(ox * stride - pad + kx) + ox_map[pi];
                if (sy <= T(-1) || sy >= static_cast<T>(H) || sx <= T(-1) ||
                    sx >= static_cast<T>(W))
                  continue;
                const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
                const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
                const T dy = sy - static_cast<T>(y0);
                const T dx = sx - static_cast<T>(x0);
                auto valid = [&](std::int64_t yy, std::int64_t xx) {
                  return yy >= 0 && yy < H && xx >= 0 && xx < W;
                };
                auto v = [&](std::int64_t yy, std::int64_t xx) -> T {
                  return valid(yy, xx) ? im[yy * W + xx] : T(0);
                };
                if (gx) {
                  T* gim = gx->data() + (n * Cin + ci) * H * W;
                  if (valid(y0, x0)) gim[y0 * W + x0] += gv * (T(1) - dy) * (T(1) - dx);
                  if (valid(y0, x0 + 1)) gim[y0 * W + x0 + 1] += gv * (T(1) - dy) * dx;
                  if (valid(y0 + 1, x0)) gim[(y0 + 1) * W + x0] += gv * dy * (T(1) - dx);
                  if (valid(y0 + 1, x0 + 1)) gim[(y0 + 1) * W + x0 + 1] += gv * dy * dx;
                }
                if (go) {
                  const T dval_dy = (v(y0 + 1, x0) - v(y0, x0)) * (T(1) - dx) +
                                    (v(y0 + 1, x0 + 1) - v(y0, x0 + 1)) * dx;
                  const T dval_dx = (v(y0, x0 + 1) - v(y0, x0)) * (T(1) - dy) +
                                    (v(y0 + 1, x0 + 1) - v(y0 + 1, x0)) * dy;
                  go->data()[(n * 2 * taps + 2 * t) * P + pi] += gv * dval_dy;
                  go->data()[(n * 2 * taps + 2 * t + 1) * P + pi] += gv * dval_dx;
                }
              }
          }
        }
      }
    }
    if (b && b->needs_grad) {
      T* gb = ensure_grad(*b).data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < Cout; ++c) {
          T acc = T(0);
          for (std::int64_t i = 0; i < P; ++i) acc += g[(n * Cout + c) * P + i];
          gb[c] += acc;
        }
    }
  });
}

template <typename T>
struct DeformConvParams {
  Var<T> w;          // main 3x3 kernel
  Var<T> b;          // optional bias (null when a norm layer follows)
  Var<T> w_off, b_off;  // offset predictor, zero-initialized
  std::int64_t stride = 1, pad = 1;

  DeformConvParams() = default;

  DeformConvParams(std::int64_t cin, std::int64_t cout, const RngState& rng,
                   const std::string& name, std::int64_t stride_ = 1, bool bias = false)
      : stride(stride_) {
    w = make_leaf(init::he_conv<T>(rng, name + ".w", cout, cin, 3, 3), true);
    if (bias) b = make_leaf(Tensor<T>::zeros({cout}), true);
    // Zero offsets at start: the layer begins as an ordinary convolution.
    w_off = make_leaf(Tensor<T>::zeros({18, cin, 3, 3}), true);
    b_off = make_leaf(Tensor<T>::zeros({18}), true);
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) const {
    reg.add(prefix + ".w", w);
    if (b) reg.add(prefix + ".b", b);
    reg.add(prefix + ".offset.w", w_off);
    reg.add(prefix + ".offset.b", b_off);
  }
};

// Offsets are predicted by the internal conv when not supplied explicitly.
template <typename T>
Var<T> deform_conv2d(const Var<T>& x, const DeformConvParams<T>& p, Var<T> offsets = nullptr) {
  if (!offsets) offsets = conv2d(x, p.w_off, p.b_off, p.stride, p.pad);
  return deform_conv2d_with_offsets(x, p.w, p.b, offsets, p.stride, p.pad);
}

// ---------------------------------------------------------------------------
// Residual bottleneck blocks (1x1 -> 3x3 -> 1x1, BN after each conv).
//  - ConvBlock: strided, with a projection shortcut.
//  - IdentityBlock: stride 1, identity shortcut.
// Optional per-block CBAM (after the third BN, before the residual add),
// ACON-C after the second conv, and a deformable 3x3 in stage 4.
// ---------------------------------------------------------------------------

enum class BlockKind { ConvBlock, IdentityBlock };

struct ResidualBlockSpec {
  BlockKind kind = BlockKind::IdentityBlock;
  int stage = 1;  // 1..4
  std::int64_t in_ch = 0, mid_ch = 0, out_ch = 0;
  std::int64_t stride = 1;
  bool cbam = false;
  bool acon = false;
  bool dcn = false;
};

template <typename T>
struct BottleneckBlock {
  ResidualBlockSpec spec;
  Var<T> w1, w2, w3, w_sc;
  Var<T> bn1_g, bn1_b, bn2_g, bn2_b, bn3_g, bn3_b, bnsc_g, bnsc_b;
  BnRunningStats<T> bn1_s, bn2_s, bn3_s, bnsc_s;
  AconParams<T> acon_params;
  CbamParams<T> cbam_params;
  DeformConvParams<T> deform;

  BottleneckBlock() = default;

  BottleneckBlock(const ResidualBlockSpec& s, const RngState& rng, const std::string& name)
      : spec(s) {
    if (s.dcn && s.stage != 4)
      throw ConfigError("deformable 3x3 only permitted in stage 4 (got stage " +
                        std::to_string(s.stage) + ")");
    auto bn = [&](std::int64_t c, Var<T>& g, Var<T>& b, BnRunningStats<T>& st) {
      g = make_leaf(Tensor<T>::full({c}, T(1)), true);
      b = make_leaf(Tensor<T>::zeros({c}), true);
      st = BnRunningStats<T>(c);
    };
    w1 = make_leaf(init::he_conv<T>(rng, name + ".conv1.w", s.mid_ch, s.in_ch, 1, 1), true);
    bn(s.mid_ch, bn1_g, bn1_b, bn1_s);
    if (s.dcn)
      deform = DeformConvParams<T>(s.mid_ch, s.mid_ch, rng, name + ".conv2", s.stride);
    else
      w2 = make_leaf(init::he_conv<T>(rng, name + ".conv2.w", s.mid_ch, s.mid_ch, 3, 3), true);
    bn(s.mid_ch, bn2_g, bn2_b, bn2_s);
    w3 = make_leaf(init::he_conv<T>(rng, name + ".conv3.w", s.out_ch, s.mid_ch, 1, 1), true);
    bn(s.out_ch, bn3_g, bn3_b, bn3_s);
    if (s.kind == BlockKind::ConvBlock) {
      w_sc = make_leaf(init::he_conv<T>(rng, name + ".shortcut.w", s.out_ch, s.in_ch, 1, 1), true);
      bn(s.out_ch, bnsc_g, bnsc_b, bnsc_s);
    }
    if (s.acon) acon_params = AconParams<T>(s.mid_ch, rng, name + ".acon");
    if (s.cbam) cbam_params = CbamParams<T>(s.out_ch, rng, name + ".cbam");
  }

  Var<T> forward(const Var<T>& x, bool training, bool update_running) {
    auto bn = [&](const Var<T>& v, const Var<T>& g, const Var<T>& b, BnRunningStats<T>& st) {
      return batchnorm2d(v, g, b, st, training, update_running);
    };
    Var<T> h = relu(bn(conv2d(x, w1, Var<T>(nullptr), 1, 0), bn1_g, bn1_b, bn1_s));
    Var<T> c2 = spec.dcn ? deform_conv2d(h, deform)
                         : conv2d(h, w2, Var<T>(nullptr), spec.stride, 1);
    Var<T> h2 = bn(c2, bn2_g, bn2_b, bn2_s);
    h2 = spec.acon ? acon_c(h2, acon_params) : relu(h2);
    Var<T> h3 = bn(conv2d(h2, w3, Var<T>(nullptr), 1, 0), bn3_g, bn3_b, bn3_s);
    if (spec.cbam) h3 = cbam(h3, cbam_params);
    Var<T> sc = x;
    if (spec.kind == BlockKind::ConvBlock)
      sc = bn(conv2d(x, w_sc, Var<T>(nullptr), spec.stride, 0), bnsc_g, bnsc_b, bnsc_s);
    return relu(add(h3, sc));
  }

  void collect(const std::string& prefix, ParamRegistry<T>& reg) const {
    reg.add(prefix + ".conv1.w", w1);
    reg.add(prefix + ".bn1.g", bn1_g);
    reg.add(prefix + ".bn1.b", bn1_b);
    if (spec.dcn)
      deform.collect(prefix + ".conv2", reg);
    else
      reg.add(prefix + ".conv2.w", w2);
    reg.add(prefix + ".bn2.g", bn2_g);
    reg.add(prefix + ".bn2.b", bn2_b);
    reg.add(prefix + ".conv3.w", w3);
    reg.add(prefix + ".bn3.g", bn3_g);
    reg.add(prefix + ".bn3.b", bn3_b);
    if (spec.kind == BlockKind::ConvBlock) {
      reg.add(prefix + ".shortcut.w", w_sc);
      reg.add(prefix + ".bnsc.g", bnsc_g);
      reg.add(prefix + ".bnsc.b", bnsc_b);
    }
    if (spec.acon) acon_params.collect(prefix + ".acon", reg);
    if (spec.cbam) cbam_params.collect(prefix + ".cbam", reg);
  }

  // Running statistics need checkpointing alongside the parameters.
  void collect_stats(const std::string& prefix,
                     std::vector<std::pair<std::string, Tensor<T>>>& out) {
    out.emplace_back(prefix + ".bn1.rmean", bn1_s.mean);
    out.emplace_back(prefix + ".bn1.rvar", bn1_s.var);
    out.emplace_back(prefix + ".bn2.rmean", bn2_s.mean);
    out.emplace_back(prefix + ".bn2.rvar", bn2_s.var);
    out.emplace_back(prefix + ".bn3.rmean", bn3_s.mean);
    out.emplace_back(prefix + ".bn3.rvar", bn3_s.var);
    if (spec.kind == BlockKind::ConvBlock) {
      out.emplace_back(prefix + ".bnsc.rmean", bnsc_s.mean);
      out.emplace_back(prefix + ".bnsc.rvar", bnsc_s.var);
    }
  }
};

}  // namespace cdet
