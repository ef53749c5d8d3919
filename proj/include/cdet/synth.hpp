#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/dataset.hpp"
#include "cdet/image.hpp"
#include "cdet/rng.hpp"
#include "cdet/voc.hpp"

namespace cdet {

// Synthetic cigarette-strip generator: a horizontal stick (light paper) with
// a darker filter tip on a textured background, plus exactly one labeled
// defect per defective image. Stands in for the factory camera data.
struct SynthConfig {
  int n_per_class = 10;
  int image_w = 600;
  int image_h = 128;
  // Strip geometry, as fractions of the canvas.
  float cig_len_frac = 0.82f;    // total cigarette length / image width
  float cig_width_frac = 0.34f;  // cigarette width / image height
  float filter_frac = 0.25f;     // filter length / cigarette length
  // Defect parameter ranges. Lengths are fractions of the cigarette length,
  // radii/amplitudes fractions of the cigarette width.
  int spot_count_min = 1, spot_count_max = 3;
  float spot_radius_frac_min = 0.16f, spot_radius_frac_max = 0.30f;
  int wrinkle_count_min = 3, wrinkle_count_max = 6;
  float wrinkle_amp_frac_min = 0.06f, wrinkle_amp_frac_max = 0.14f;
  float wrinkle_len_frac_min = 0.14f, wrinkle_len_frac_max = 0.28f;
  float seam_shift_frac_min = 0.25f, seam_shift_frac_max = 0.50f;
  float seam_width_frac_min = 0.14f, seam_width_frac_max = 0.26f;
  double multi_defect_rate = 0.0;
  std::uint64_t texture_seed = 0;

  void validate() const {
    if (n_per_class < 1) throw ConfigError("synth: n_per_class must be >= 1");
    if (image_w < 64 || image_h < 32) throw ConfigError("synth: canvas too small");
    if (!(cig_len_frac > 0.2f && cig_len_frac < 1.f) ||
        !(cig_width_frac > 0.05f && cig_width_frac < 0.9f) ||
        !(filter_frac > 0.05f && filter_frac < 0.6f))
      throw ConfigError("synth: strip geometry fractions out of range");
    if (spot_count_min < 1 || spot_count_max < spot_count_min ||
        !(spot_radius_frac_max > spot_radius_frac_min) ||
        !(wrinkle_amp_frac_max > wrinkle_amp_frac_min) ||
        !(wrinkle_len_frac_max > wrinkle_len_frac_min) ||
        !(seam_shift_frac_max > seam_shift_frac_min) ||
        !(seam_width_frac_max > seam_width_frac_min))
      throw ConfigError("synth: degenerate defect parameter range");
    if (multi_defect_rate < 0.0 || multi_defect_rate > 1.0)
      throw ConfigError("synth: multi_defect_rate must be in [0,1]");
  }
};

inline SynthConfig synth_config_from_kv(const KvDoc& kv) {
  SynthConfig c;
  c.n_per_class = kv.get_int("synth.n_per_class", c.n_per_class);
  c.image_w = kv.get_int("synth.image_w", c.image_w);
  c.image_h = kv.get_int("synth.image_h", c.image_h);
  c.cig_len_frac = static_cast<float>(kv.get_num("synth.cig_len_frac", c.cig_len_frac));
  c.cig_width_frac = static_cast<float>(kv.get_num("synth.cig_width_frac", c.cig_width_frac));
  c.filter_frac = static_cast<float>(kv.get_num("synth.filter_frac", c.filter_frac));
  c.multi_defect_rate = kv.get_num("synth.multi_defect_rate", c.multi_defect_rate);
  c.texture_seed =
      static_cast<std::uint64_t>(kv.get_num("synth.texture_seed", static_cast<double>(c.texture_seed)));
  return c;
}

inline void synth_config_to_kv(const SynthConfig& c, KvDoc& kv) {
  kv.set("synth.n_per_class", std::to_string(c.n_per_class));
  kv.set("synth.image_w", std::to_string(c.image_w));
  kv.set("synth.image_h", std::to_string(c.image_h));
  kv.set("synth.multi_defect_rate", std::to_string(c.multi_defect_rate));
}

namespace detail {

struct StripLayout {
  float x0, y0, x1, y1;  // cigarette rectangle
  float seam_x;          // stick/filter boundary; filter occupies [seam_x, x1]
  float len, width;
};

inline StripLayout strip_layout(const SynthConfig& cfg, Rng& rng) {
  StripLayout s;
  s.len = cfg.cig_len_frac * static_cast<float>(cfg.image_w);
  s.width = cfg.cig_width_frac * static_cast<float>(cfg.image_h);
  const float max_jx = std::max((static_cast<float>(cfg.image_w) - s.len) / 2.f - 2.f, 0.f);
  const float max_jy = std::max((static_cast<float>(cfg.image_h) - s.width) / 2.f - 2.f, 0.f);
  const float jx = static_cast<float>(rng.uniform(-0.6, 0.6)) * max_jx;
  const float jy = static_cast<float>(rng.uniform(-0.6, 0.6)) * max_jy;
  s.x0 = (static_cast<float>(cfg.image_w) - s.len) / 2.f + jx;
  s.y0 = (static_cast<float>(cfg.image_h) - s.width) / 2.f + jy;
  s.x1 = s.x0 + s.len;
  s.y1 = s.y0 + s.width;
  s.seam_x = s.x1 - cfg.filter_frac * s.len;
  return s;
}

inline void fill_rect(Tensor<float>& img, float x0, float y0, float x1, float y1, float r, float g,
                      float b) {
  const std::int64_t H = img.dim(1), W = img.dim(2);
  const auto ix0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(x0), 0, W);
  const auto ix1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(x1), 0, W);
  const auto iy0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(y0), 0, H);
  const auto iy1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(y1), 0, H);
  for (std::int64_t y = iy0; y < iy1; ++y)
    for (std::int64_t x = ix0; x < ix1; ++x) {
      img.at(0, y, x) = r;
      img.at(1, y, x) = g;
      img.at(2, y, x) = b;
    }
}

// Uniform draw over [lo, hi] that tolerates a collapsed range.
inline float usafe(Rng& rng, float lo, float hi) {
  return lo < hi ? static_cast<float>(rng.uniform(lo, hi)) : lo;
}

}  // namespace detail

// Renders one sample; the rng stream must be unique per image id.
inline ImageSample synth_render_image(const SynthConfig& cfg, int class_id, const std::string& id,
                                      Rng& rng) {
  const std::int64_t H = cfg.image_h, W = cfg.image_w;
  ImageSample sample;
  sample.id = id;
  sample.width = cfg.image_w;
  sample.height = cfg.image_h;
  sample.pixels = Tensor<float>({3, H, W});

  // Background: soft vertical gradient plus pixel noise.
  const float base = 0.30f + static_cast<float>(rng.uniform(-0.03, 0.03));
  for (std::int64_t y = 0; y < H; ++y) {
    const float grad = 0.05f * (static_cast<float>(y) / static_cast<float>(H) - 0.5f);
    for (std::int64_t x = 0; x < W; ++x) {
      const float n = static_cast<float>(rng.uniform(-0.03, 0.03));
      for (int c = 0; c < 3; ++c) sample.pixels.at(c, y, x) = base + grad + n;
    }
  }

  detail::StripLayout s = detail::strip_layout(cfg, rng);
  const bool unfiltered = (class_id == class_id_of("unfiltered"));
  const float malposed_shift =
      (class_id == class_id_of("malposed"))
          ? detail::usafe(rng, cfg.seam_shift_frac_min * s.width,
                          cfg.seam_shift_frac_max * s.width) *
                (rng.bernoulli(0.5) ? 1.f : -1.f)
          : 0.f;

  detail::fill_rect(sample.pixels, s.x0, s.y0, s.seam_x, s.y1, 0.92f, 0.91f, 0.88f);
  if (!unfiltered)
    detail::fill_rect(sample.pixels, s.seam_x, s.y0 + malposed_shift, s.x1,
                      s.y1 + malposed_shift, 0.76f, 0.54f, 0.30f);

  // Paper grain over the strip area.
  const auto gy0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(s.y0), 0, H);
  const auto gy1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(s.y1), 0, H);
  const auto gx0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(s.x0), 0, W);
  const auto gx1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(s.x1), 0, W);
  for (std::int64_t y = gy0; y < gy1; ++y)
    for (std::int64_t x = gx0; x < gx1; ++x) {
      const float n = static_cast<float>(rng.uniform(-0.02, 0.02));
      for (int c = 0; c < 3; ++c) sample.pixels.at(c, y, x) += n;
    }

  auto clamp_box = [&](BoundingBox b) {
    b = b.clipped(static_cast<float>(W), static_cast<float>(H));
    // Integer-pixel annotation bounds, as a labeling tool would produce.
    b.x_min = std::floor(b.x_min);
    b.y_min = std::floor(b.y_min);
    b.x_max = std::ceil(b.x_max);
    b.y_max = std::ceil(b.y_max);
    return b.clipped(static_cast<float>(W), static_cast<float>(H));
  };

  if (class_id == class_id_of("normal")) {
    sample.boxes.push_back(clamp_box({s.x0, s.y0, s.x1, s.y1, class_id}));
  } else if (class_id == class_id_of("dotted")) {
    // Dark elliptical spots chained along the stick; the box hugs the chain.
    const int n_spots = static_cast<int>(rng.uniform_int(cfg.spot_count_min, cfg.spot_count_max));
    const float r_lo = cfg.spot_radius_frac_min * s.width;
    const float r_hi = cfg.spot_radius_frac_max * s.width;
    const float cy = detail::usafe(rng, s.y0 + 0.3f * s.width, s.y1 - 0.3f * s.width);
    float cx = detail::usafe(rng, s.x0 + 0.05f * s.len, std::max(s.x0 + 0.06f * s.len, s.seam_x - 0.35f * s.len));
    float min_x = 1e9f, max_x = -1e9f, min_y = 1e9f, max_y = -1e9f;
    for (int i = 0; i < n_spots; ++i) {
      const float rx = detail::usafe(rng, r_lo, r_hi);
      const float ry = rx * detail::usafe(rng, 0.45f, 0.75f);
      const float sy = cy + detail::usafe(rng, -0.08f * s.width, 0.08f * s.width);
      for (std::int64_t y = static_cast<std::int64_t>(sy - ry); y <= static_cast<std::int64_t>(sy + ry);
           ++y)
        for (std::int64_t x = static_cast<std::int64_t>(cx - rx);
             x <= static_cast<std::int64_t>(cx + rx); ++x) {
          if (y < 0 || y >= H || x < 0 || x >= W) continue;
          const float dx = (static_cast<float>(x) - cx) / rx;
          const float dy = (static_cast<float>(y) - sy) / ry;
          if (dx * dx + dy * dy <= 1.f) {
            const float dark = 0.16f + static_cast<float>(rng.uniform(0.0, 0.05));
            for (int c = 0; c < 3; ++c) sample.pixels.at(c, y, x) = dark;
          }
        }
      min_x = std::min(min_x, cx - rx);
      max_x = std::max(max_x, cx + rx);
      min_y = std::min(min_y, sy - ry);
      max_y = std::max(max_y, sy + ry);
      cx += rx + detail::usafe(rng, 1.5f * r_lo, 3.f * r_lo);
      if (cx + r_hi >= s.seam_x - 2) break;  // stay on the stick
    }
    sample.boxes.push_back(clamp_box({min_x - 2, min_y - 2, max_x + 2, max_y + 2, class_id}));
  } else if (class_id == class_id_of("folded")) {
    // Sinusoidal shading lines spanning a band of the stick.
    const float len =
        detail::usafe(rng, cfg.wrinkle_len_frac_min * s.len, cfg.wrinkle_len_frac_max * s.len);
    const float bx0 =
        detail::usafe(rng, s.x0 + 0.04f * s.len, std::max(s.x0 + 0.05f * s.len, s.seam_x - len - 0.04f * s.len));
    const int n_lines =
        static_cast<int>(rng.uniform_int(cfg.wrinkle_count_min, cfg.wrinkle_count_max));
    const float amp_hi = cfg.wrinkle_amp_frac_max * s.width;
    const float band_h = detail::usafe(rng, 0.45f * s.width, 0.75f * s.width);
    const float by0 = detail::usafe(rng, s.y0 + amp_hi + 1, std::max(s.y0 + amp_hi + 2, s.y1 - band_h - amp_hi - 1));
    for (int i = 0; i < n_lines; ++i) {
      const float amp =
          detail::usafe(rng, cfg.wrinkle_amp_frac_min * s.width, cfg.wrinkle_amp_frac_max * s.width);
      const float phase = static_cast<float>(rng.uniform(0, 2 * M_PI));
      const float period = detail::usafe(rng, 0.15f * len, 0.4f * len);
      const float yc = by0 + band_h * (static_cast<float>(i) + 0.5f) / static_cast<float>(n_lines);
      for (float x = bx0; x < bx0 + len; x += 1.f) {
        const float y = yc + amp * std::sin(2.f * static_cast<float>(M_PI) * x / period + phase);
        for (int t = -1; t <= 1; ++t) {
          const auto iy = static_cast<std::int64_t>(y) + t;
          const auto ix = static_cast<std::int64_t>(x);
          if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
          const float shade = t == 0 ? 0.18f : 0.09f;
          for (int c = 0; c < 3; ++c)
            sample.pixels.at(c, iy, ix) = std::max(0.f, sample.pixels.at(c, iy, ix) - shade);
        }
      }
    }
    sample.boxes.push_back(clamp_box(
        {bx0 - 2, by0 - amp_hi - 2, bx0 + len + 2, by0 + band_h + amp_hi + 2, class_id}));
  } else if (class_id == class_id_of("malposed")) {
    // The filter was drawn displaced off the stick axis; the box frames the
    // seam region where the misalignment shows.
    const float bw =
        detail::usafe(rng, cfg.seam_width_frac_min * s.len, cfg.seam_width_frac_max * s.len);
    const float y_lo = std::min(s.y0, s.y0 + malposed_shift);
    const float y_hi = std::max(s.y1, s.y1 + malposed_shift);
    sample.boxes.push_back(
        clamp_box({s.seam_x - bw * 0.5f, y_lo - 2, s.seam_x + bw * 0.5f, y_hi + 2, class_id}));
  } else if (unfiltered) {
    // Missing filter: the box covers the bare region where it belongs.
    sample.boxes.push_back(clamp_box({s.seam_x - 2, s.y0 - 2, s.x1 + 2, s.y1 + 2, class_id}));
  }

  return sample;
}

// Generates n_per_class images per class, writes PNGs and VOC XMLs under
// out_dir/{images,annotations}, and returns the manifest (splits unassigned).
inline DatasetManifest synth_generate(const SynthConfig& cfg, std::uint64_t seed,
                                      const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "annotations", ec);
  if (!fs::exists(fs::path(out_dir) / "images") || !fs::exists(fs::path(out_dir) / "annotations"))
    throw DataError("synth_generate: cannot create output directory " + out_dir);

  RngState root = seed_all(seed ^ (cfg.texture_seed * 0x9E3779B97F4A7C15ull));
  DatasetManifest manifest;
  manifest.seed = seed;
  for (int class_id = 0; class_id < static_cast<int>(class_names().size()); ++class_id) {
    for (int i = 0; i < cfg.n_per_class; ++i) {
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s_%04d",
                    class_names()[static_cast<std::size_t>(class_id)].c_str(), i);
      Rng rng = root.stream("synth", static_cast<std::uint64_t>(class_id),
                            static_cast<std::uint64_t>(i));
      ImageSample sample = synth_render_image(cfg, class_id, idbuf, rng);
      // Optional second defect of another class on defective images.
      if (cfg.multi_defect_rate > 0 && class_id != class_id_of("normal") &&
          class_id != class_id_of("dotted") && rng.bernoulli(cfg.multi_defect_rate)) {
        ImageSample extra = synth_render_image(cfg, class_id_of("dotted"), sample.id, rng);
        if (!extra.boxes.empty()) {
          const BoundingBox& src = extra.boxes[0];
          for (std::int64_t y = static_cast<std::int64_t>(src.y_min);
               y < static_cast<std::int64_t>(src.y_max); ++y)
            for (std::int64_t x = static_cast<std::int64_t>(src.x_min);
                 x < static_cast<std::int64_t>(src.x_max); ++x)
              for (int c = 0; c < 3; ++c)
                sample.pixels.at(c, y, x) =
                    std::min(sample.pixels.at(c, y, x), extra.pixels.at(c, y, x));
          sample.boxes.push_back(src);
        }
      }

      const std::string img_path = (fs::path(out_dir) / "images" / (sample.id + ".png")).string();
      const std::string xml_path =
          (fs::path(out_dir) / "annotations" / (sample.id + ".xml")).string();
      write_png(img_path, sample.pixels);
      VocAnnotation ann;
      ann.filename = sample.id + ".png";
      ann.width = sample.width;
      ann.height = sample.height;
      ann.boxes = sample.boxes;
      write_voc_xml(xml_path, ann);
      manifest.records.push_back({sample.id, img_path, xml_path, "unsplit", class_id});
    }
  }
  return manifest;
}

}  // namespace cdet
