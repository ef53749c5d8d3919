#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"

namespace cdet {

// Matching outcome for one image (or an aggregate of images): per-detection
// TP/FP flags with their scores, plus ground-truth counts per class.
struct MatchResult {
  struct Flag {
    double score;
    int class_id;
    bool tp;
  };
  std::vector<Flag> flags;          // ordered by descending score within each class
  std::vector<std::int64_t> n_gt;   // per class
  std::vector<std::int64_t> tp_per_class;

  explicit MatchResult(int n_classes = 0)
      : n_gt(static_cast<std::size_t>(n_classes), 0),
        tp_per_class(static_cast<std::size_t>(n_classes), 0) {}

  std::int64_t total_tp() const {
    std::int64_t s = 0;
    for (auto v : tp_per_class) s += v;
    return s;
  }
  std::int64_t total_fp() const {
    std::int64_t fp = 0;
    for (const auto& f : flags) fp += f.tp ? 0 : 1;
    return fp;
  }
  std::int64_t total_fn() const {
    std::int64_t gt = 0;
    for (auto v : n_gt) gt += v;
    return gt - total_tp();
  }

  void merge(const MatchResult& other) {
    flags.insert(flags.end(), other.flags.begin(), other.flags.end());
    for (std::size_t c = 0; c < n_gt.size(); ++c) {
      n_gt[c] += other.n_gt[c];
      tp_per_class[c] += other.tp_per_class[c];
    }
  }
};

// Greedy per-class matching within one image: detections in descending score
// order claim the highest-IoU unmatched ground truth with IoU >= thresh.
inline MatchResult match_detections(std::vector<Detection> dets,
                                    const std::vector<BoundingBox>& gts, double iou_thresh,
                                    int n_classes) {
  MatchResult result(n_classes);
  for (const auto& g : gts) {
    if (g.class_id < 0 || g.class_id >= n_classes)
      throw DataError("match_detections: ground-truth class out of range");
    ++result.n_gt[static_cast<std::size_t>(g.class_id)];
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<bool> used(gts.size(), false);
  for (const auto& d : dets) {
    double best_iou = 0.0;
    std::int64_t best = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].class_id != d.class_id) continue;
      const double v = iou(d.box, gts[j]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<std::int64_t>(j);
      }
    }
    const bool tp = best >= 0 && best_iou >= iou_thresh;
    if (tp) {
      used[static_cast<std::size_t>(best)] = true;
      ++result.tp_per_class[static_cast<std::size_t>(d.class_id)];
    }
    result.flags.push_back({static_cast<double>(d.score), d.class_id, tp});
  }
  return result;
}

// P = TP/(TP+FP), R = TP/(TP+FN); zero when the denominator is zero.
inline std::pair<double, double> precision_recall(const MatchResult& m) {
  const double tp = static_cast<double>(m.total_tp());
  const double fp = static_cast<double>(m.total_fp());
  const double fn = static_cast<double>(m.total_fn());
  const double p = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  const double r = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
  return {p, r};
}

struct PrCurve {
  int class_id = 0;
  std::vector<double> recall;     // non-decreasing along the ranked sweep
  std::vector<double> precision;  // in [0,1]
};

// Ranked sweep over one class's detections: point i is the P/R of the top
// (i+1) detections.
inline PrCurve pr_curve(const MatchResult& m, int class_id) {
  PrCurve curve;
  curve.class_id = class_id;
  std::vector<MatchResult::Flag> flags;
  for (const auto& f : m.flags)
    if (f.class_id == class_id) flags.push_back(f);
  std::stable_sort(flags.begin(), flags.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  const double n_gt = static_cast<double>(m.n_gt[static_cast<std::size_t>(class_id)]);
  double tp = 0, fp = 0;
  for (const auto& f : flags) {
    (f.tp ? tp : fp) += 1.0;
    curve.precision.push_back(tp / (tp + fp));
    curve.recall.push_back(n_gt > 0 ? tp / n_gt : 0.0);
  }
  return curve;
}

// All-point (area) interpolation: precision envelope made monotone
// non-increasing right-to-left, summed over recall increments.
inline double average_precision(const PrCurve& curve) {
  if (curve.recall.empty()) return 0.0;
  const std::size_t n = curve.recall.size();
  std::vector<double> env(curve.precision);
  for (std::size_t i = n - 1; i-- > 0;) env[i] = std::max(env[i], env[i + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (curve.recall[i] - prev_recall) * env[i];
    prev_recall = curve.recall[i];
  }
  return ap;
}

// Mean over classes; caller supplies one AP per class that has ground truth.
inline double mean_ap(const std::vector<double>& aps) {
  if (aps.empty()) throw DataError("mean_ap: no classes with ground truth");
  double s = 0;
  for (double v : aps) s += v;
  return s / static_cast<double>(aps.size());
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation report.
// ---------------------------------------------------------------------------

struct EvalReport {
  std::vector<double> per_class_ap;   // indexed by class id; -1 if no GT
  double map50 = 0.0;
  double precision_at_half = 0.0;     // P/R with only detections scoring >= 0.5
  double recall_at_half = 0.0;
  double precision_at_best_f1 = 0.0;
  double recall_at_best_f1 = 0.0;
  double best_f1_threshold = 0.0;
};

namespace detail {

// Micro-averaged P/R over all classes keeping only detections with
// score >= threshold; TP flags stay as matched on the full ranked list.
inline std::pair<double, double> pr_at_threshold(const MatchResult& m, double threshold) {
  double tp = 0, fp = 0, gt = 0;
  for (const auto& f : m.flags) {
    if (f.score < threshold) continue;
    (f.tp ? tp : fp) += 1.0;
  }
  for (auto v : m.n_gt) gt += static_cast<double>(v);
  const double p = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  const double r = gt > 0 ? tp / gt : 0.0;
  return {p, r};
}

}  // namespace detail

inline EvalReport evaluate_matches(const MatchResult& m, int n_classes) {
  EvalReport rep;
  std::vector<double> aps;
  for (int c = 0; c < n_classes; ++c) {
    if (m.n_gt[static_cast<std::size_t>(c)] == 0) {
      rep.per_class_ap.push_back(-1.0);
      continue;
    }
    const double ap = average_precision(pr_curve(m, c));
    rep.per_class_ap.push_back(ap);
    aps.push_back(ap);
  }
  rep.map50 = mean_ap(aps);

  auto [p_half, r_half] = detail::pr_at_threshold(m, 0.5);
  rep.precision_at_half = p_half;
  rep.recall_at_half = r_half;

  // Sweep distinct scores for the max-F1 operating point; ties keep the
  // lowest threshold.
  std::vector<double> scores;
  for (const auto& f : m.flags) scores.push_back(f.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  double best_f1 = -1.0;
  for (double t : scores) {
    auto [p, r] = detail::pr_at_threshold(m, t);
    const double f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    if (f1 > best_f1 + 1e-12) {
      best_f1 = f1;
      rep.precision_at_best_f1 = p;
      rep.recall_at_best_f1 = r;
      rep.best_f1_threshold = t;
    }
  }
  return rep;
}

// Formats the report with the class columns in the comparison-table order
// (normal, dotted, malposed, unfiltered, folded, mAP), not class-id order.
inline std::string format_eval_report(const EvalReport& rep) {
  static const std::vector<std::string> column_order = {"normal", "dotted", "malposed",
                                                        "unfiltered", "folded"};
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (const auto& name : column_order) os << name << "\t";
  os << "mAP\n";
  for (const auto& name : column_order) {
    const int id = class_id_of(name);
    const double ap = rep.per_class_ap[static_cast<std::size_t>(id)];
    if (ap < 0)
      os << "n/a\t";
    else
      os << ap << "\t";
  }
  os << rep.map50 << "\n";
  os << "P@0.5 = " << rep.precision_at_half << "  R@0.5 = " << rep.recall_at_half << "\n";
  os << "P@maxF1 = " << rep.precision_at_best_f1 << "  R@maxF1 = " << rep.recall_at_best_f1
     << "  (threshold " << rep.best_f1_threshold << ")\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Detection dump: one record per line —
//   image_id class_name score x_min y_min x_max y_max
// ---------------------------------------------------------------------------

struct DumpRecord {
  std::string image_id;
  Detection det;
};

inline void write_detection_dump(const std::string& path, const std::vector<DumpRecord>& records) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write detection dump: " + path);
  f << std::setprecision(9);
  for (const auto& r : records) {
    f << r.image_id << ' ' << class_names()[static_cast<std::size_t>(r.det.class_id)] << ' '
      << r.det.score << ' ' << r.det.box.x_min << ' ' << r.det.box.y_min << ' ' << r.det.box.x_max
      << ' ' << r.det.box.y_max << '\n';
  }
}

inline std::vector<DumpRecord> read_detection_dump(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open detection dump: " + path);
  std::vector<DumpRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    DumpRecord r;
    std::string cls;
    if (!(is >> r.image_id >> cls >> r.det.score >> r.det.box.x_min >> r.det.box.y_min >>
          r.det.box.x_max >> r.det.box.y_max))
      throw DataError("detection dump line " + std::to_string(lineno) + ": malformed record");
    r.det.class_id = class_id_of(cls);
    if (r.det.class_id < 0)
      throw DataError("detection dump line " + std::to_string(lineno) + ": unknown class " + cls);
    r.det.box.class_id = r.det.class_id;
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cdet
