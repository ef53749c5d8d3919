#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cdet/tensor.hpp"

namespace cdet {

// Axis-aligned box in input-pixel coordinates, continuous. x_max/y_max are
// exclusive edges, so width = x_max - x_min.
struct BoundingBox {
  float x_min = 0.f;
  float y_min = 0.f;
  float x_max = 0.f;
  float y_max = 0.f;
  int class_id = 0;

  float width() const { return x_max - x_min; }
  float height() const { return y_max - y_min; }
  float area() const { return width() * height(); }
  float center_x() const { return (x_min + x_max) * 0.5f; }
  float center_y() const { return (y_min + y_max) * 0.5f; }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max && x_min >= 0.f && y_min >= 0.f;
  }

  // Clip to [0,w] x [0,h]. May produce an empty (invalid) box.
  BoundingBox clipped(float w, float h) const {
    BoundingBox b = *this;
    b.x_min = std::clamp(b.x_min, 0.f, w);
    b.x_max = std::clamp(b.x_max, 0.f, w);
    b.y_min = std::clamp(b.y_min, 0.f, h);
    b.y_max = std::clamp(b.y_max, 0.f, h);
    return b;
  }
};

struct Detection {
  int class_id = 0;
  float score = 0.f;
  BoundingBox box;
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  double ix = std::max(0.0, double(std::min(a.x_max, b.x_max)) - double(std::max(a.x_min, b.x_min)));
  double iy = std::max(0.0, double(std::min(a.y_max, b.y_max)) - double(std::max(a.y_min, b.y_min)));
  double inter = ix * iy;
  double uni = double(a.area()) + double(b.area()) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

// One image with its annotations. Pixels are (3, H, W) floats in [0,1];
// the tensor may be left undefined when only the geometry is needed.
struct ImageSample {
  Tensor<float> pixels;
  std::vector<BoundingBox> boxes;
  std::string id;
  int width = 0;
  int height = 0;

  bool boxes_within_bounds() const {
    for (const auto& b : boxes) {
      if (!b.valid()) return false;
      if (b.x_max > static_cast<float>(width) || b.y_max > static_cast<float>(height)) return false;
    }
    return true;
  }
};

}  // namespace cdet
