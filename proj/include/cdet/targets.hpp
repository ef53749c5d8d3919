#pragma once

#include <cmath>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"
#include "cdet/tensor.hpp"

namespace cdet {

// Largest radius such that a box whose corners shift by up to r (translated,
// shrunk, or grown) still overlaps the original with IoU >= min_iou. Minimum
// of the three quadratic cases, each solved for the binding root.
template <typename T = float>
T gaussian_radius(T h, T w, T min_iou) {
  if (!(h > T(0)) || !(w > T(0)))
    throw DataError("gaussian_radius: box dimensions must be positive");
  if (!(min_iou > T(0) && min_iou < T(1)))
    throw DataError("gaussian_radius: min_iou must be in (0,1)");

  // Translation: (w-r)(h-r) >= 2*iou*wh/(1+iou)
  const T b1 = h + w;
  const T c1 = w * h * (T(1) - min_iou) / (T(1) + min_iou);
  const T r1 = (b1 - std::sqrt(b1 * b1 - T(4) * c1)) / T(2);

  // Shrink: (w-2r)(h-2r) >= iou*wh
  const T a2 = T(4);
  const T b2 = T(2) * (h + w);
  const T c2 = (T(1) - min_iou) * w * h;
  const T r2 = (b2 - std::sqrt(b2 * b2 - T(4) * a2 * c2)) / (T(2) * a2);

  // Grow: wh >= iou*(w+2r)(h+2r)
  const T a3 = T(4) * min_iou;
  const T b3 = T(-2) * min_iou * (h + w);
  const T c3 = (min_iou - T(1)) * w * h;
  const T r3 = (b3 + std::sqrt(b3 * b3 - T(4) * a3 * c3)) / (T(2) * a3);

  return std::max(T(0), std::min({r1, r2, r3}));
}

// Per-image training targets on the stride-R grid.
template <typename T = float>
struct TargetMaps {
  Tensor<T> heatmap;        // (n_classes, Hm, Wm), peaks exactly 1 at centers
  Tensor<T> offset_target;  // (2, Hm, Wm): channel 0 = x, 1 = y
  Tensor<T> size_target;    // (2, Hm, Wm): channel 0 = w/R, 1 = h/R
  Tensor<T> center_mask;    // (Hm, Wm), 1 where an object center lands
  std::int64_t n_objects = 0;
};

// Splats one unnormalized Gaussian (max-merged) onto a heatmap channel.
template <typename T>
void splat_gaussian(Tensor<T>& heatmap, int channel, std::int64_t cx, std::int64_t cy, T radius) {
  const std::int64_t Hm = heatmap.dim(1), Wm = heatmap.dim(2);
  const T sigma = std::max(radius, T(1e-6)) / T(3);
  const T denom = T(2) * sigma * sigma;
  const std::int64_t ri = static_cast<std::int64_t>(radius);
  for (std::int64_t dy = -ri; dy <= ri; ++dy) {
    const std::int64_t y = cy + dy;
    if (y < 0 || y >= Hm) continue;
    for (std::int64_t dx = -ri; dx <= ri; ++dx) {
      const std::int64_t x = cx + dx;
      if (x < 0 || x >= Wm) continue;
      const T v = std::exp(-static_cast<T>(dx * dx + dy * dy) / denom);
      T& cell = heatmap.at(channel, y, x);
      cell = std::max(cell, v);
    }
  }
}

// Renders boxes into heatmap/offset/size targets. On exact grid-cell
// collisions the later box overwrites offset and size; the object count and
// both heatmap peaks survive.
template <typename T = float>
TargetMaps<T> render_targets(const std::vector<BoundingBox>& boxes, const ModelConfig& cfg) {
  const std::int64_t Hm = cfg.map_h(), Wm = cfg.map_w();
  const T R = static_cast<T>(cfg.output_stride);
  TargetMaps<T> t;
  t.heatmap = Tensor<T>::zeros({cfg.n_classes, Hm, Wm});
  t.offset_target = Tensor<T>::zeros({2, Hm, Wm});
  t.size_target = Tensor<T>::zeros({2, Hm, Wm});
  t.center_mask = Tensor<T>::zeros({Hm, Wm});

  for (const auto& box : boxes) {
    if (!box.valid()) throw DataError("render_targets: invalid box");
    if (box.class_id < 0 || box.class_id >= cfg.n_classes)
      throw DataError("render_targets: class id out of range");
    const T cx = static_cast<T>(box.center_x()) / R;
    const T cy = static_cast<T>(box.center_y()) / R;
    const std::int64_t ix = static_cast<std::int64_t>(std::floor(cx));
    const std::int64_t iy = static_cast<std::int64_t>(std::floor(cy));
    if (ix < 0 || ix >= Wm || iy < 0 || iy >= Hm)
      throw DataError("render_targets: box center outside the output map");

    const T bw = static_cast<T>(box.width()) / R;
    const T bh = static_cast<T>(box.height()) / R;
    const T radius = gaussian_radius<T>(bh, bw, static_cast<T>(cfg.gaussian_iou));
    splat_gaussian(t.heatmap, box.class_id, ix, iy, radius);
    t.heatmap.at(box.class_id, iy, ix) = T(1);

    t.offset_target.at(0, iy, ix) = cx - static_cast<T>(ix);
    t.offset_target.at(1, iy, ix) = cy - static_cast<T>(iy);
    t.size_target.at(0, iy, ix) = bw;
    t.size_target.at(1, iy, ix) = bh;
    t.center_mask.at(iy, ix) = T(1);
    ++t.n_objects;
  }
  return t;
}

// Batched targets for a training step: per-image maps stacked along dim 0,
// n_objects summed across the batch.
template <typename T = float>
struct BatchTargets {
  Tensor<T> heatmap;   // (B, n_classes, Hm, Wm)
  Tensor<T> offset;    // (B, 2, Hm, Wm)
  Tensor<T> size;      // (B, 2, Hm, Wm)
  Tensor<T> mask;      // (B, 1, Hm, Wm)
  std::int64_t n_objects = 0;

  static BatchTargets stack(const std::vector<TargetMaps<T>>& maps) {
    if (maps.empty()) throw DataError("BatchTargets::stack: empty batch");
    const std::int64_t B = static_cast<std::int64_t>(maps.size());
    const std::int64_t C = maps[0].heatmap.dim(0);
    const std::int64_t Hm = maps[0].heatmap.dim(1), Wm = maps[0].heatmap.dim(2);
    BatchTargets t;
    t.heatmap = Tensor<T>::zeros({B, C, Hm, Wm});
    t.offset = Tensor<T>::zeros({B, 2, Hm, Wm});
    t.size = Tensor<T>::zeros({B, 2, Hm, Wm});
    t.mask = Tensor<T>::zeros({B, 1, Hm, Wm});
    for (std::int64_t b = 0; b < B; ++b) {
      const auto& m = maps[static_cast<std::size_t>(b)];
      std::copy_n(m.heatmap.data(), C * Hm * Wm, t.heatmap.data() + b * C * Hm * Wm);
      std::copy_n(m.offset_target.data(), 2 * Hm * Wm, t.offset.data() + b * 2 * Hm * Wm);
      std::copy_n(m.size_target.data(), 2 * Hm * Wm, t.size.data() + b * 2 * Hm * Wm);
      std::copy_n(m.center_mask.data(), Hm * Wm, t.mask.data() + b * Hm * Wm);
      t.n_objects += m.n_objects;
    }
    return t;
  }
};

}  // namespace cdet
