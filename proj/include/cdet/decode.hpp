#pragma once

#include <algorithm>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"
#include "cdet/tensor.hpp"

namespace cdet {

// Single-image head outputs in plain tensors, ready for decoding.
template <typename T = float>
struct HeadMaps {
  Tensor<T> heatmap;  // (n_classes, Hm, Wm)
  Tensor<T> offset;   // (2, Hm, Wm): x then y
  Tensor<T> size;     // (2, Hm, Wm): w then h, in output-map units
};

template <typename T = float>
struct Peak {
  int class_id;
  std::int64_t y;
  std::int64_t x;
  T score;
};

// Keeps positions that equal their 3x3 neighbourhood maximum (the decoder's
// stand-in for NMS), then takes the top k across classes. Equal scores break
// ties in row-major scan order (class, then y, then x).
template <typename T>
std::vector<Peak<T>> extract_peaks(const Tensor<T>& heatmap, int k) {
  if (k < 1) throw ConfigError("extract_peaks: k must be >= 1");
  const std::int64_t C = heatmap.dim(0), H = heatmap.dim(1), W = heatmap.dim(2);
  std::vector<Peak<T>> peaks;
  for (int c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        const T v = heatmap.at(c, y, x);
        bool is_max = true;
        for (std::int64_t dy = -1; dy <= 1 && is_max; ++dy)
          for (std::int64_t dx = -1; dx <= 1 && is_max; ++dx) {
            const std::int64_t yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            if (heatmap.at(c, yy, xx) > v) is_max = false;
          }
        if (is_max) peaks.push_back({c, y, x, v});
      }
  // Stable sort keeps the row-major emission order among equal scores.
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak<T>& a, const Peak<T>& b) { return a.score > b.score; });
  if (static_cast<int>(peaks.size()) > k) peaks.resize(static_cast<std::size_t>(k));
  return peaks;
}

// Peaks -> boxes: center = (cell + offset) * R, dims = size * R, clipped to
// the input frame. Detections under the confidence threshold are dropped.
template <typename T>
std::vector<Detection> decode(const HeadMaps<T>& maps, const ModelConfig& cfg) {
  const T R = static_cast<T>(cfg.output_stride);
  const float img_w = static_cast<float>(cfg.input_w);
  const float img_h = static_cast<float>(cfg.input_h);
  std::vector<Detection> dets;
  for (const auto& p : extract_peaks(maps.heatmap, cfg.top_k)) {
    if (p.score < static_cast<T>(cfg.confidence_threshold)) continue;
    const T cx = (static_cast<T>(p.x) + maps.offset.at(0, p.y, p.x)) * R;
    const T cy = (static_cast<T>(p.y) + maps.offset.at(1, p.y, p.x)) * R;
    const T bw = maps.size.at(0, p.y, p.x) * R;
    const T bh = maps.size.at(1, p.y, p.x) * R;
    BoundingBox box;
    box.x_min = static_cast<float>(cx - bw / T(2));
    box.y_min = static_cast<float>(cy - bh / T(2));
    box.x_max = static_cast<float>(cx + bw / T(2));
    box.y_max = static_cast<float>(cy + bh / T(2));
    box.class_id = p.class_id;
    box = box.clipped(img_w, img_h);
    if (!box.valid()) continue;  // degenerate size prediction
    dets.push_back({p.class_id, static_cast<float>(p.score), box});
  }
  return dets;
}

}  // namespace cdet
