#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cdet/augment.hpp"
#include "cdet/checkpoint.hpp"
#include "cdet/data_io.hpp"
#include "cdet/eval.hpp"
#include "cdet/losses.hpp"
#include "cdet/model.hpp"
#include "cdet/optimizer.hpp"
#include "cdet/synth.hpp"

namespace cdet {

struct TrainConfig {
  int total_epochs = 300;
  int freeze_epochs = 50;
  int batch_frozen = 32;
  int batch_thawed = 16;
  float lr_frozen = 1e-3f;
  float lr_thawed = 1.25e-4f;
  float weight_decay = 1e-4f;
  std::string optimizer = "adam";  // "adam" | "sgd"
  float momentum = 0.9f;
  float grad_clip = 35.f;
  std::uint64_t seed = 0;
  // The source protocol's "weight decay rate ... 0.5" is ambiguous; both
  // readings are available behind this switch and neither is the default:
  //   off       — explicit lr_frozen/lr_thawed plus standard L2 above
  //   l2        — use paper_weight_decay as the L2 coefficient
  //   lr_scale  — thawed-phase base lr = lr_frozen * paper_weight_decay
  std::string paper_decay_mode = "off";
  float paper_weight_decay = 0.5f;

  void validate() const {
    if (total_epochs < 1) throw ConfigError("train: total_epochs must be >= 1");
    if (freeze_epochs < 0 || freeze_epochs >= total_epochs)
      throw ConfigError("train: freeze_epochs must be in [0, total_epochs)");
    if (batch_frozen < 1 || batch_thawed < 1) throw ConfigError("train: batch sizes must be >= 1");
    if (!(lr_frozen > 0.f) || !(lr_thawed > 0.f)) throw ConfigError("train: lrs must be > 0");
    if (optimizer != "adam" && optimizer != "sgd")
      throw ConfigError("train: optimizer must be adam or sgd");
    if (paper_decay_mode != "off" && paper_decay_mode != "l2" && paper_decay_mode != "lr_scale")
      throw ConfigError("train: paper_decay_mode must be off, l2, or lr_scale");
  }
};

inline TrainConfig train_config_from_kv(const KvDoc& kv) {
  TrainConfig c;
  c.total_epochs = kv.get_int("train.total_epochs", c.total_epochs);
  c.freeze_epochs = kv.get_int("train.freeze_epochs", c.freeze_epochs);
  c.batch_frozen = kv.get_int("train.batch_frozen", c.batch_frozen);
  c.batch_thawed = kv.get_int("train.batch_thawed", c.batch_thawed);
  c.lr_frozen = static_cast<float>(kv.get_num("train.lr_frozen", c.lr_frozen));
  c.lr_thawed = static_cast<float>(kv.get_num("train.lr_thawed", c.lr_thawed));
  c.weight_decay = static_cast<float>(kv.get_num("train.weight_decay", c.weight_decay));
  c.optimizer = kv.get_str("train.optimizer", c.optimizer);
  c.momentum = static_cast<float>(kv.get_num("train.momentum", c.momentum));
  c.grad_clip = static_cast<float>(kv.get_num("train.grad_clip", c.grad_clip));
  c.seed = static_cast<std::uint64_t>(kv.get_num("train.seed", static_cast<double>(c.seed)));
  c.paper_decay_mode = kv.get_str("train.paper_decay_mode", c.paper_decay_mode);
  c.paper_weight_decay =
      static_cast<float>(kv.get_num("train.paper_weight_decay", c.paper_weight_decay));
  return c;
}

// Cosine annealing restarted per phase (frozen / thawed). Each phase starts
// exactly at its configured lr and decays to lr/100.
inline float lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs) throw ConfigError("lr_at: epoch out of range");
  const bool frozen = epoch < cfg.freeze_epochs;
  float lr0 = frozen ? cfg.lr_frozen : cfg.lr_thawed;
  if (!frozen && cfg.paper_decay_mode == "lr_scale") lr0 = cfg.lr_frozen * cfg.paper_weight_decay;
  const int t = frozen ? epoch : epoch - cfg.freeze_epochs;
  const int len = frozen ? cfg.freeze_epochs : cfg.total_epochs - cfg.freeze_epochs;
  const float lr_min = lr0 / 100.f;
  return lr_min + 0.5f * (lr0 - lr_min) *
                      (1.f + std::cos(static_cast<float>(M_PI) * static_cast<float>(t) /
                                      static_cast<float>(len)));
}

struct LossCurveRow {
  int epoch;
  float lr;
  float l_cls, l_off, l_reg, l_det;
  float val_l_det;
};

inline void write_loss_curve(const std::string& path, const std::vector<LossCurveRow>& rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write loss curve: " + path);
  f << "epoch,lr,l_cls,l_off,l_reg,l_det,val_l_det\n";
  f << std::setprecision(9);
  for (const auto& r : rows)
    f << r.epoch << ',' << r.lr << ',' << r.l_cls << ',' << r.l_off << ',' << r.l_reg << ','
      << r.l_det << ',' << r.val_l_det << '\n';
}

namespace detail {

struct Batch {
  Tensor<float> images;  // (B,3,H,W)
  BatchTargets<float> targets;
};

inline Batch assemble_batch(const std::vector<ImageSample>& samples, const ModelConfig& cfg) {
  const std::int64_t B = static_cast<std::int64_t>(samples.size());
  Batch batch;
  batch.images = Tensor<float>({B, 3, cfg.input_h, cfg.input_w});
  std::vector<TargetMaps<float>> maps;
  for (std::int64_t i = 0; i < B; ++i) {
    LetterboxResult lb = letterbox(samples[static_cast<std::size_t>(i)], cfg.input_h, cfg.input_w);
    std::copy_n(lb.pixels.data(), lb.pixels.numel(),
                batch.images.data() + i * lb.pixels.numel());
    maps.push_back(render_targets<float>(lb.boxes, cfg));
  }
  batch.targets = BatchTargets<float>::stack(maps);
  return batch;
}

}  // namespace detail

struct StepLosses {
  LossBreakdown<float> losses;
  float grad_norm = 0.f;
};

// One optimization step on an assembled batch. Exposed so smoke tests and
// the trainer share the exact code path.
inline StepLosses train_step(Detector<float>& model, Optimizer<float>& opt,
                             const detail::Batch& batch, float lr, float grad_clip) {
  Var<float> images = make_leaf(batch.images);
  HeadOutputs<float> outs = model.forward(images, true);
  Var<float> hm = clamp(outs.heatmap, 1e-4f, 1.f - 1e-4f);
  Var<float> l_cls = focal_loss(hm, batch.targets.heatmap, batch.targets.n_objects);
  Var<float> l_off = offset_loss(outs.offset, batch.targets);
  Var<float> l_reg = size_loss(outs.size, batch.targets);
  Var<float> l_det =
      total_loss(l_cls, l_reg, l_off, model.cfg.lambda_reg, model.cfg.lambda_off);
  StepLosses out;
  out.losses = breakdown(l_cls, l_reg, l_off, model.cfg.lambda_reg, model.cfg.lambda_off);
  if (!std::isfinite(out.losses.l_det))
    throw NumericError("training diverged: non-finite loss");
  backward(l_det);
  out.grad_norm = opt.clip_gradients(grad_clip);
  opt.step(lr);
  opt.zero_grad();
  return out;
}

// Validation loss in eval mode (running BN statistics, no augmentation).
inline float validation_loss(Detector<float>& model, const std::vector<ImageSample>& samples,
                             int batch_size) {
  if (samples.empty()) return std::numeric_limits<float>::quiet_NaN();
  double total = 0.0;
  std::int64_t count = 0;
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<ImageSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                   samples.begin() +
                                       static_cast<std::ptrdiff_t>(std::min(
                                           samples.size(), start + static_cast<std::size_t>(batch_size))));
    detail::Batch batch = detail::assemble_batch(chunk, model.cfg);
    Var<float> images = make_leaf(batch.images);
    HeadOutputs<float> outs = model.forward(images, false);
    Var<float> hm = clamp(outs.heatmap, 1e-4f, 1.f - 1e-4f);
    Var<float> l_cls = focal_loss(hm, batch.targets.heatmap, batch.targets.n_objects);
    Var<float> l_off = offset_loss(outs.offset, batch.targets);
    Var<float> l_reg = size_loss(outs.size, batch.targets);
    auto b = breakdown(l_cls, l_reg, l_off, model.cfg.lambda_reg, model.cfg.lambda_off);
    total += static_cast<double>(b.l_det) * static_cast<double>(chunk.size());
    count += static_cast<std::int64_t>(chunk.size());
  }
  return static_cast<float>(total / static_cast<double>(count));
}

struct TrainResult {
  std::vector<LossCurveRow> curve;
  std::string last_checkpoint;
  std::string best_checkpoint;
  float best_val_loss = std::numeric_limits<float>::infinity();
  int best_epoch = -1;
};

// Full training run: frozen warmup then thawed phase, per-phase batch size
// and cosine lr, per-epoch validation, checkpointing, loss-curve emission.
inline TrainResult train(const TrainConfig& tc, const ModelConfig& mc_in,
                         const DatasetManifest& manifest, const std::string& out_dir,
                         std::ostream* log = nullptr) {
  tc.validate();
  const ModelConfig mc = validate_config(mc_in);
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  auto train_recs = manifest.split_records("train");
  auto val_recs = manifest.split_records("val");
  if (train_recs.empty()) throw DataError("train: no records with split=train");

  std::vector<ImageSample> train_samples;
  train_samples.reserve(train_recs.size());
  for (const auto& r : train_recs) train_samples.push_back(load_sample(r));
  std::vector<ImageSample> val_samples;
  for (const auto& r : val_recs) val_samples.push_back(load_sample(r));

  RngState root = seed_all(tc.seed);
  Detector<float> model(mc, root);
  Optimizer<float> opt(
      tc.optimizer == "adam" ? Optimizer<float>::Kind::Adam : Optimizer<float>::Kind::SgdMomentum,
      model.params(),
      tc.paper_decay_mode == "l2" ? tc.paper_weight_decay : tc.weight_decay, tc.momentum);

  ckpt::Meta meta;
  meta.fingerprint = config_fingerprint(mc);
  {
    KvDoc kv;
    model_config_to_kv(mc, kv);
    meta.config_text = kv.serialize();
  }

  TrainResult result;
  result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
  result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();

  for (int epoch = 0; epoch < tc.total_epochs; ++epoch) {
    const bool frozen = epoch < tc.freeze_epochs;
    model.set_backbone_frozen(frozen);
    const int batch_size = frozen ? tc.batch_frozen : tc.batch_thawed;
    const float lr = lr_at(epoch, tc);

    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = root.stream("shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    LossBreakdown<float> epoch_mean;
    std::int64_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      std::vector<ImageSample> chunk;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
        const ImageSample& original = train_samples[order[i]];
        if (mc.ablation.augmentation) {
          Rng aug_rng = root.stream("aug", static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(order[i]));
          chunk.push_back(augment(original, default_augmentations(), aug_rng));
        } else {
          chunk.push_back(original);
        }
      }
      detail::Batch batch = detail::assemble_batch(chunk, mc);
      StepLosses step = train_step(model, opt, batch, lr, tc.grad_clip);
      epoch_mean.l_cls += step.losses.l_cls;
      epoch_mean.l_off += step.losses.l_off;
      epoch_mean.l_reg += step.losses.l_reg;
      epoch_mean.l_det += step.losses.l_det;
      ++n_batches;
    }
    epoch_mean.l_cls /= static_cast<float>(n_batches);
    epoch_mean.l_off /= static_cast<float>(n_batches);
    epoch_mean.l_reg /= static_cast<float>(n_batches);
    epoch_mean.l_det /= static_cast<float>(n_batches);

    const float val_loss = validation_loss(model, val_samples, tc.batch_thawed);

    LossCurveRow row{epoch, lr, epoch_mean.l_cls, epoch_mean.l_off, epoch_mean.l_reg,
                     epoch_mean.l_det, val_loss};
    result.curve.push_back(row);
    if (log)
      (*log) << "epoch " << epoch << " lr " << lr << " train " << epoch_mean.l_det << " val "
             << val_loss << "\n";

    meta.epoch = epoch;
    meta.val_loss = std::isnan(val_loss) ? epoch_mean.l_det : val_loss;
    meta.is_best = false;
    ckpt::save(result.last_checkpoint, model, &opt, meta);
    if (meta.val_loss < result.best_val_loss) {
      result.best_val_loss = meta.val_loss;
      result.best_epoch = epoch;
      meta.is_best = true;
      ckpt::save(result.best_checkpoint, model, nullptr, meta);
    }
  }
  write_loss_curve((fs::path(out_dir) / "loss_curve.csv").string(), result.curve);
  return result;
}

// ---------------------------------------------------------------------------
// Dataset-level model evaluation (decode + match + AP).
// ---------------------------------------------------------------------------

struct EvalOptions {
  double iou_thresh = 0.5;
  int batch_size = 8;
  float decode_threshold = 0.01f;  // keep the curve; predict uses its own
};

inline EvalReport evaluate_model(Detector<float>& model,
                                 const std::vector<ManifestRecord>& records,
                                 const EvalOptions& opts = {},
                                 std::vector<DumpRecord>* dump = nullptr) {
  if (records.empty()) throw DataError("evaluate_model: empty record set");
  ModelConfig cfg = model.cfg;
  cfg.confidence_threshold = opts.decode_threshold;
  MatchResult agg(cfg.n_classes);
  for (std::size_t start = 0; start < records.size();
       start += static_cast<std::size_t>(opts.batch_size)) {
    std::vector<ImageSample> samples;
    std::vector<LetterboxTransform> transforms;
    for (std::size_t i = start;
         i < std::min(records.size(), start + static_cast<std::size_t>(opts.batch_size)); ++i)
      samples.push_back(load_sample(records[i]));

    const std::int64_t B = static_cast<std::int64_t>(samples.size());
    Tensor<float> images({B, 3, cfg.input_h, cfg.input_w});
    for (std::int64_t i = 0; i < B; ++i) {
      LetterboxResult lb = letterbox(samples[static_cast<std::size_t>(i)], cfg.input_h, cfg.input_w);
      std::copy_n(lb.pixels.data(), lb.pixels.numel(), images.data() + i * lb.pixels.numel());
      transforms.push_back(lb.transform);
    }
    HeadOutputs<float> outs = model.forward(make_leaf(images), false);
    for (std::int64_t i = 0; i < B; ++i) {
      HeadMaps<float> maps = slice_head_maps(outs, i);
      std::vector<Detection> dets = decode(maps, cfg);
      // Back to original image coordinates.
      for (auto& d : dets) {
        d.box = transforms[static_cast<std::size_t>(i)].invert(d.box);
        d.box.class_id = d.class_id;
      }
      std::vector<Detection> valid;
      for (const auto& d : dets)
        if (d.box.valid()) valid.push_back(d);
      const auto& sample = samples[static_cast<std::size_t>(i)];
      if (dump)
        for (const auto& d : valid) dump->push_back({sample.id, d});
      agg.merge(match_detections(valid, sample.boxes, opts.iou_thresh, cfg.n_classes));
    }
  }
  return evaluate_matches(agg, cfg.n_classes);
}

// ---------------------------------------------------------------------------
// Ablation runner: one training + evaluation per flag row, identical seeds
// and data, emitting a comparison-table-shaped report.
// ---------------------------------------------------------------------------

inline std::vector<AblationFlags> default_ablation_rows() {
  std::vector<AblationFlags> rows(6);
  rows[0] = {false, false, false, false, false};
  rows[1] = {false, false, false, false, true};
  rows[2] = {true, false, false, false, true};
  rows[3] = {true, true, false, false, true};
  rows[4] = {true, true, true, false, true};
  rows[5] = {true, true, true, true, true};
  return rows;
}

struct AblationRow {
  AblationFlags flags;
  double precision = 0, recall = 0, map50 = 0;
  std::int64_t param_count = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  std::string format() const {
    std::ostringstream os;
    os << "exp\taug\tcbam\tfpn\tdcn\tacon\tP\tR\tmAP\tparams\n";
    os << std::fixed << std::setprecision(4);
    int i = 1;
    for (const auto& r : rows) {
      auto mark = [](bool b) { return b ? "x" : "-"; };
      os << i++ << '\t' << mark(r.flags.augmentation) << '\t' << mark(r.flags.cbam) << '\t'
         << mark(r.flags.fpn) << '\t' << mark(r.flags.dcn) << '\t' << mark(r.flags.acon) << '\t'
         << r.precision << '\t' << r.recall << '\t' << r.map50 << '\t' << r.param_count << '\n';
    }
    return os.str();
  }
};

inline AblationReport run_ablation(const std::vector<AblationFlags>& rows,
                                   const ModelConfig& base_cfg, const TrainConfig& tc,
                                   const DatasetManifest& manifest, const std::string& out_dir,
                                   const std::string& eval_split = "test",
                                   std::ostream* log = nullptr) {
  AblationReport report;
  int idx = 0;
  for (const auto& flags : rows) {
    ModelConfig mc = base_cfg;
    mc.ablation = flags;
    const std::string row_dir =
        (std::filesystem::path(out_dir) / ("row" + std::to_string(idx))).string();
    if (log) (*log) << "[ablate] row " << idx << "\n";
    TrainResult tr = train(tc, mc, manifest, row_dir, log);

    RngState root = seed_all(tc.seed);
    Detector<float> model(mc, root);
    ckpt::load(tr.last_checkpoint, model);
    AblationRow row;
    row.flags = flags;
    row.param_count = model.param_count();
    EvalReport rep = evaluate_model(model, manifest.split_records(eval_split));
    row.precision = rep.precision_at_best_f1;
    row.recall = rep.recall_at_best_f1;
    row.map50 = rep.map50;
    report.rows.push_back(row);
    ++idx;
  }
  return report;
}

}  // namespace cdet
