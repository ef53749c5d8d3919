// Command-line front end: dataset generation, splitting, training,
// evaluation, prediction with annotated output, ablation runs, and a timing
// probe. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "cdet/checkpoint.hpp"
#include "cdet/data_io.hpp"
#include "cdet/synth.hpp"
#include "cdet/trainer.hpp"

namespace fs = std::filesystem;
using namespace cdet;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

KvDoc resolve_config(const CommonOpts& opts) {
  KvDoc kv = opts.config_path.empty() ? KvDoc() : KvDoc::load(opts.config_path);
  for (const auto& expr : opts.overrides) kv.set_override(expr);
  return kv;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "flat key = value config file");
  cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set model.input_h=64");
}

Detector<float> load_model_from_checkpoint(const std::string& path, const KvDoc& kv_overrides) {
  ckpt::Meta meta = ckpt::peek(path);
  std::istringstream cfg_stream(meta.config_text);
  KvDoc kv = KvDoc::parse(cfg_stream);
  for (const auto& [k, v] : kv_overrides.values())
    if (k.rfind("model.", 0) == 0) kv.set(k, v);
  ModelConfig cfg = validate_config(model_config_from_kv(kv));
  Detector<float> model(cfg, seed_all(0));
  ckpt::load(path, model);
  return model;
}

std::string hardware_descriptor() {
  std::string cpu = "unknown-cpu";
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return cpu + " / " + std::to_string(std::thread::hardware_concurrency()) + " threads";
}

int run(int argc, char** argv) {
  CLI::App app{"center-point cigarette defect detector"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "render the synthetic dataset");
  CommonOpts gen_common;
  add_common(gen, gen_common);
  std::string gen_out = "dataset";
  int per_class = -1;
  std::uint64_t gen_seed = 0;
  double multi_defect_rate = -1.0;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--per-class", per_class, "images per class");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--multi-defect-rate", multi_defect_rate, "probability of a second defect");

  // split
  auto* split = app.add_subcommand("split", "assign train/val/test splits");
  std::string split_manifest, split_out, ratios_str = "0.6,0.2,0.2";
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest, "manifest to split")->required();
  split->add_option("--ratios", ratios_str, "train,val,test ratios");
  split->add_option("--seed", split_seed, "split seed");
  split->add_option("--out", split_out, "output manifest (default: in place)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  CommonOpts train_common;
  add_common(train_cmd, train_common);
  std::string train_manifest, train_out = "run";
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest")->required();
  train_cmd->add_option("--out", train_out, "run directory (checkpoints, loss curve)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a detection dump");
  CommonOpts eval_common;
  add_common(eval_cmd, eval_common);
  std::string eval_ckpt, eval_manifest, eval_split = "test", eval_dets, eval_report_path;
  double eval_iou = 0.5;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint");
  eval_cmd->add_option("--dets", eval_dets, "detection dump to evaluate instead of a checkpoint");
  eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval_cmd->add_option("--split", eval_split, "split tag to evaluate");
  eval_cmd->add_option("--iou", eval_iou, "IoU matching threshold");
  eval_cmd->add_option("--report", eval_report_path, "write the report here as well");

  // predict
  auto* pred = app.add_subcommand("predict", "run detection and write annotated images");
  CommonOpts pred_common;
  add_common(pred, pred_common);
  std::string pred_ckpt, pred_out = "predictions";
  std::vector<std::string> pred_images;
  double pred_threshold = -1.0;
  pred->add_option("--checkpoint", pred_ckpt, "trained checkpoint")->required();
  pred->add_option("--images", pred_images, "input PNG images")->required();
  pred->add_option("--out", pred_out, "output directory");
  pred->add_option("--threshold", pred_threshold, "confidence threshold");

  // ablate
  auto* abl = app.add_subcommand("ablate", "train and evaluate the module-ablation grid");
  CommonOpts abl_common;
  add_common(abl, abl_common);
  std::string abl_manifest, abl_out = "ablation";
  std::string abl_split = "test";
  abl->add_option("--manifest", abl_manifest, "dataset manifest")->required();
  abl->add_option("--out", abl_out, "output directory");
  abl->add_option("--eval-split", abl_split, "split to evaluate rows on");

  // bench
  auto* bench = app.add_subcommand("bench", "per-image wall-clock timing (informational)");
  CommonOpts bench_common;
  add_common(bench, bench_common);
  std::string bench_ckpt;
  std::vector<std::string> bench_images;
  int repeats = 10;
  bench->add_option("--checkpoint", bench_ckpt, "trained checkpoint")->required();
  bench->add_option("--images", bench_images, "input PNG images")->required();
  bench->add_option("--repeats", repeats, "timed repetitions after one warmup");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    KvDoc kv = resolve_config(gen_common);
    SynthConfig sc = synth_config_from_kv(kv);
    if (per_class > 0) sc.n_per_class = per_class;
    if (multi_defect_rate >= 0) sc.multi_defect_rate = multi_defect_rate;
    DatasetManifest manifest = synth_generate(sc, gen_seed, gen_out);
    const std::string mpath = (fs::path(gen_out) / "manifest.txt").string();
    manifest.save(mpath);
    std::cout << "generated " << manifest.records.size() << " images under " << gen_out << "\n";
    std::cout << "manifest: " << mpath << "\n";
    return 0;
  }

  if (split->parsed()) {
    std::array<double, 3> ratios{};
    if (std::sscanf(ratios_str.c_str(), "%lf,%lf,%lf", &ratios[0], &ratios[1], &ratios[2]) != 3)
      throw ConfigError("split: --ratios expects three comma-separated numbers");
    DatasetManifest manifest = DatasetManifest::load(split_manifest);
    manifest = split_dataset(manifest, ratios, split_seed);
    const std::string out = split_out.empty() ? split_manifest : split_out;
    manifest.save(out);
    std::cout << "split written to " << out << " (train " << manifest.split_records("train").size()
              << ", val " << manifest.split_records("val").size() << ", test "
              << manifest.split_records("test").size() << ")\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    KvDoc kv = resolve_config(train_common);
    ModelConfig mc = validate_config(model_config_from_kv(kv));
    TrainConfig tc = train_config_from_kv(kv);
    tc.validate();
    DatasetManifest manifest = DatasetManifest::load(train_manifest);
    TrainResult result = train(tc, mc, manifest, train_out, &std::cout);
    std::cout << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss
              << "\n";
    std::cout << "checkpoints: " << result.last_checkpoint << " , " << result.best_checkpoint
              << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    DatasetManifest manifest = DatasetManifest::load(eval_manifest);
    auto records = manifest.split_records(eval_split);
    if (records.empty()) throw DataError("eval: no records with split=" + eval_split);
    EvalReport report;
    if (!eval_dets.empty()) {
      // Offline evaluation of a dump against the split's ground truth.
      auto dump = read_detection_dump(eval_dets);
      MatchResult agg(static_cast<int>(class_names().size()));
      for (const auto& rec : records) {
        VocAnnotation ann = parse_voc_xml(rec.xml_path);
        std::vector<Detection> dets;
        for (const auto& d : dump)
          if (d.image_id == rec.id) dets.push_back(d.det);
        agg.merge(match_detections(dets, ann.boxes, eval_iou,
                                   static_cast<int>(class_names().size())));
      }
      report = evaluate_matches(agg, static_cast<int>(class_names().size()));
    } else if (!eval_ckpt.empty()) {
      Detector<float> model = load_model_from_checkpoint(eval_ckpt, resolve_config(eval_common));
      EvalOptions opts;
      opts.iou_thresh = eval_iou;
      report = evaluate_model(model, records, opts);
    } else {
      throw ConfigError("eval: need --checkpoint or --dets");
    }
    const std::string text = format_eval_report(report);
    std::cout << text;
    if (!eval_report_path.empty()) {
      std::ofstream f(eval_report_path);
      f << text;
    }
    return 0;
  }

  if (pred->parsed()) {
    Detector<float> model = load_model_from_checkpoint(pred_ckpt, resolve_config(pred_common));
    if (pred_threshold >= 0) model.cfg.confidence_threshold = static_cast<float>(pred_threshold);
    std::error_code ec;
    fs::create_directories(pred_out, ec);
    std::vector<DumpRecord> dump;
    for (const auto& path : pred_images) {
      ImageSample sample;
      sample.pixels = read_png(path);
      sample.width = static_cast<int>(sample.pixels.dim(2));
      sample.height = static_cast<int>(sample.pixels.dim(1));
      sample.id = fs::path(path).stem().string();
      LetterboxResult lb = letterbox(sample, model.cfg.input_h, model.cfg.input_w);
      Tensor<float> batch({1, 3, model.cfg.input_h, model.cfg.input_w});
      std::copy_n(lb.pixels.data(), lb.pixels.numel(), batch.data());
      HeadOutputs<float> outs = model.forward(make_leaf(batch), false);
      HeadMaps<float> maps = slice_head_maps(outs, 0);
      std::vector<Detection> dets = decode(maps, model.cfg);
      Tensor<float> annotated = sample.pixels.clone();
      for (auto& d : dets) {
        d.box = lb.transform.invert(d.box);
        d.box.class_id = d.class_id;
        if (!d.box.valid()) continue;
        draw_detection(annotated, d);
        dump.push_back({sample.id, d});
      }
      const std::string out_path = (fs::path(pred_out) / (sample.id + "_pred.png")).string();
      write_png(out_path, annotated);
      std::cout << sample.id << ": " << dets.size() << " detections -> " << out_path << "\n";
    }
    const std::string dump_path = (fs::path(pred_out) / "detections.txt").string();
    write_detection_dump(dump_path, dump);
    std::cout << "dump: " << dump_path << "\n";
    return 0;
  }

  if (abl->parsed()) {
    KvDoc kv = resolve_config(abl_common);
    ModelConfig mc = validate_config(model_config_from_kv(kv));
    TrainConfig tc = train_config_from_kv(kv);
    tc.validate();
    DatasetManifest manifest = DatasetManifest::load(abl_manifest);
    AblationReport report =
        run_ablation(default_ablation_rows(), mc, tc, manifest, abl_out, abl_split, &std::cout);
    const std::string text = report.format();
    std::cout << text;
    std::ofstream f((fs::path(abl_out) / "ablation_report.txt").string());
    f << text;
    return 0;
  }

  if (bench->parsed()) {
    Detector<float> model = load_model_from_checkpoint(bench_ckpt, resolve_config(bench_common));
    if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
    std::vector<Tensor<float>> batches;
    for (const auto& path : bench_images) {
      ImageSample sample;
      sample.pixels = read_png(path);
      sample.width = static_cast<int>(sample.pixels.dim(2));
      sample.height = static_cast<int>(sample.pixels.dim(1));
      LetterboxResult lb = letterbox(sample, model.cfg.input_h, model.cfg.input_w);
      Tensor<float> batch({1, 3, model.cfg.input_h, model.cfg.input_w});
      std::copy_n(lb.pixels.data(), lb.pixels.numel(), batch.data());
      batches.push_back(batch);
    }
    // One warmup pass, excluded from the timings.
    for (const auto& b : batches) model.forward(make_leaf(b), false);
    std::vector<double> per_image_ms;
    for (int r = 0; r < repeats; ++r) {
      for (const auto& b : batches) {
        const auto t0 = std::chrono::steady_clock::now();
        HeadOutputs<float> outs = model.forward(make_leaf(b), false);
        HeadMaps<float> maps = slice_head_maps(outs, 0);
        volatile auto n = decode(maps, model.cfg).size();
        (void)n;
        const auto t1 = std::chrono::steady_clock::now();
        per_image_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
    }
    std::sort(per_image_ms.begin(), per_image_ms.end());
    double mean = 0;
    for (double v : per_image_ms) mean += v;
    mean /= static_cast<double>(per_image_ms.size());
    const double median = per_image_ms[per_image_ms.size() / 2];
    std::cout << "hardware: " << hardware_descriptor() << "\n";
    std::cout << "images: " << bench_images.size() << "  timed passes: " << repeats << "\n";
    std::cout << "mean " << mean << " ms/image, median " << median << " ms/image\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
