#pragma once

#include <set>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"
#include "cdet/rng.hpp"

namespace cdet {

enum class AugKind { HFlip, VFlip, Crop, Brightness, Noise, DefectPaste };

inline const std::set<AugKind>& default_augmentations() {
  static const std::set<AugKind> kinds = {AugKind::HFlip, AugKind::Crop, AugKind::Brightness,
                                          AugKind::Noise};
  return kinds;
}

namespace detail {

inline ImageSample hflip(const ImageSample& s) {
  ImageSample out = s;
  out.pixels = Tensor<float>(s.pixels.shape());
  const std::int64_t H = s.pixels.dim(1), W = s.pixels.dim(2);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) out.pixels.at(c, y, x) = s.pixels.at(c, y, W - 1 - x);
  out.boxes.clear();
  for (const auto& b : s.boxes) {
    BoundingBox m = b;
    m.x_min = static_cast<float>(W) - b.x_max;
    m.x_max = static_cast<float>(W) - b.x_min;
    out.boxes.push_back(m);
  }
  return out;
}

inline ImageSample vflip(const ImageSample& s) {
  ImageSample out = s;
  out.pixels = Tensor<float>(s.pixels.shape());
  const std::int64_t H = s.pixels.dim(1), W = s.pixels.dim(2);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) out.pixels.at(c, y, x) = s.pixels.at(c, H - 1 - y, x);
  out.boxes.clear();
  for (const auto& b : s.boxes) {
    BoundingBox m = b;
    m.y_min = static_cast<float>(H) - b.y_max;
    m.y_max = static_cast<float>(H) - b.y_min;
    out.boxes.push_back(m);
  }
  return out;
}

// Random crop keeping boxes whose centers stay inside; boxes are clipped to
// the crop. Returns false when every box would be lost.
inline bool crop(const ImageSample& s, Rng& rng, float min_scale, ImageSample& out) {
  const std::int64_t H = s.pixels.dim(1), W = s.pixels.dim(2);
  const float scale = static_cast<float>(rng.uniform(min_scale, 1.0));
  const auto cw = std::max<std::int64_t>(32, std::llround(static_cast<float>(W) * scale));
  const auto ch = std::max<std::int64_t>(32, std::llround(static_cast<float>(H) * scale));
  const auto ox = rng.uniform_int(0, W - cw);
  const auto oy = rng.uniform_int(0, H - ch);

  std::vector<BoundingBox> kept;
  for (const auto& b : s.boxes) {
    const float cx = b.center_x(), cy = b.center_y();
    if (cx < static_cast<float>(ox) || cx >= static_cast<float>(ox + cw) ||
        cy < static_cast<float>(oy) || cy >= static_cast<float>(oy + ch))
      continue;
    BoundingBox m = b;
    m.x_min -= static_cast<float>(ox);
    m.x_max -= static_cast<float>(ox);
    m.y_min -= static_cast<float>(oy);
    m.y_max -= static_cast<float>(oy);
    m = m.clipped(static_cast<float>(cw), static_cast<float>(ch));
    if (m.valid()) kept.push_back(m);
  }
  if (kept.empty() && !s.boxes.empty()) return false;

  out = s;
  out.width = static_cast<int>(cw);
  out.height = static_cast<int>(ch);
  out.boxes = std::move(kept);
  out.pixels = Tensor<float>({3, ch, cw});
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < ch; ++y)
      for (std::int64_t x = 0; x < cw; ++x) out.pixels.at(c, y, x) = s.pixels.at(c, y + oy, x + ox);
  return true;
}

}  // namespace detail

// Applies the requested augmentation kinds with per-sample randomness drawn
// from `rng`. Geometric transforms move the boxes with the pixels. The
// defect-paste kind composites a defect patch (plus its box) from `donor`.
inline ImageSample augment(const ImageSample& s, const std::set<AugKind>& kinds, Rng& rng,
                           const ImageSample* donor = nullptr) {
  ImageSample out = s;
  if (kinds.count(AugKind::HFlip) && rng.bernoulli(0.5)) out = detail::hflip(out);
  if (kinds.count(AugKind::VFlip) && rng.bernoulli(0.5)) out = detail::vflip(out);

  if (kinds.count(AugKind::Crop) && rng.bernoulli(0.5)) {
    ImageSample cropped;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt)
      ok = detail::crop(out, rng, 0.7f, cropped);
    if (ok) out = std::move(cropped);  // otherwise keep the sample unchanged
  }

  if (kinds.count(AugKind::DefectPaste) && donor != nullptr && rng.bernoulli(0.5)) {
    // Pick a defect (non-normal) box from the donor and composite it.
    std::vector<const BoundingBox*> candidates;
    for (const auto& b : donor->boxes)
      if (b.class_id != class_id_of("normal")) candidates.push_back(&b);
    if (!candidates.empty()) {
      const BoundingBox& src = *candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
      const auto bw = static_cast<std::int64_t>(src.width());
      const auto bh = static_cast<std::int64_t>(src.height());
      const std::int64_t H = out.pixels.dim(1), W = out.pixels.dim(2);
      if (bw > 0 && bh > 0 && bw < W && bh < H) {
        const auto dx = rng.uniform_int(0, W - bw - 1);
        const auto dy = rng.uniform_int(0, H - bh - 1);
        out.pixels = out.pixels.clone();  // may still alias the input
        for (std::int64_t y = 0; y < bh; ++y)
          for (std::int64_t x = 0; x < bw; ++x)
            for (int c = 0; c < 3; ++c)
              out.pixels.at(c, dy + y, dx + x) =
                  donor->pixels.at(c, static_cast<std::int64_t>(src.y_min) + y,
                                   static_cast<std::int64_t>(src.x_min) + x);
        BoundingBox pasted;
        pasted.x_min = static_cast<float>(dx);
        pasted.y_min = static_cast<float>(dy);
        pasted.x_max = static_cast<float>(dx + bw);
        pasted.y_max = static_cast<float>(dy + bh);
        pasted.class_id = src.class_id;
        out.boxes.push_back(pasted);
      }
    }
  }

  if (kinds.count(AugKind::Brightness)) {
    const float gain = static_cast<float>(rng.uniform(0.6, 1.4));
    // Clone before mutating: out may still share storage with the input.
    Tensor<float> adjusted = out.pixels.clone();
    for (std::int64_t i = 0; i < adjusted.numel(); ++i)
      adjusted[i] = std::clamp(adjusted[i] * gain, 0.f, 1.f);
    out.pixels = adjusted;
  }

  if (kinds.count(AugKind::Noise)) {
    const float sigma = static_cast<float>(rng.uniform(0.0, 0.05));
    if (sigma > 0.f) {
      Tensor<float> noisy = out.pixels.clone();
      for (std::int64_t i = 0; i < noisy.numel(); ++i)
        noisy[i] = std::clamp(noisy[i] + static_cast<float>(rng.normal()) * sigma, 0.f, 1.f);
      out.pixels = noisy;
    }
  }

  out.width = static_cast<int>(out.pixels.dim(2));
  out.height = static_cast<int>(out.pixels.dim(1));
  return out;
}

}  // namespace cdet
