#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"
#include "cdet/rng.hpp"

namespace cdet {

struct ManifestRecord {
  std::string id;
  std::string image_path;
  std::string xml_path;
  std::string split;  // "train" | "val" | "test" | "unsplit"
  int class_id = 0;   // primary class, used for stratification
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;

  std::map<int, std::int64_t> class_histogram() const {
    std::map<int, std::int64_t> h;
    for (const auto& r : records) ++h[r.class_id];
    return h;
  }

  std::vector<ManifestRecord> split_records(const std::string& split) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
      if (r.split == split) out.push_back(r);
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write manifest: " + path);
    f << "seed " << seed << "\n";
    for (const auto& r : records)
      f << r.id << '\t' << r.image_path << '\t' << r.xml_path << '\t' << r.split << '\t'
        << class_names()[static_cast<std::size_t>(r.class_id)] << '\n';
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open manifest: " + path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line.rfind("seed ", 0) == 0) {
        m.seed = std::stoull(line.substr(5));
        continue;
      }
      std::istringstream is(line);
      ManifestRecord r;
      std::string cls;
      if (!std::getline(is, r.id, '\t') || !std::getline(is, r.image_path, '\t') ||
          !std::getline(is, r.xml_path, '\t') || !std::getline(is, r.split, '\t') ||
          !std::getline(is, cls))
        throw DataError("manifest line " + std::to_string(lineno) + ": malformed record");
      r.class_id = class_id_of(cls);
      if (r.class_id < 0)
        throw DataError("manifest line " + std::to_string(lineno) + ": unknown class " + cls);
      m.records.push_back(std::move(r));
    }
    return m;
  }
};

// Stratified 6:2:2 (or custom) split: per class, a seeded shuffle is cut into
// train/val/test so each split's class histogram stays within one sample of
// the exact ratio.
inline DatasetManifest split_dataset(DatasetManifest manifest,
                                     std::array<double, 3> ratios, std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
  if (manifest.records.size() < 3) throw DataError("split: fewer samples than splits");

  RngState root = seed_all(seed);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    by_class[manifest.records[i].class_id].push_back(i);

  for (auto& [class_id, idx] : by_class) {
    Rng rng = root.stream("split", static_cast<std::uint64_t>(class_id));
    rng.shuffle(idx.begin(), idx.end());
    const auto n = static_cast<std::int64_t>(idx.size());
    std::int64_t n_val = std::llround(ratios[1] * static_cast<double>(n));
    std::int64_t n_test = std::llround(ratios[2] * static_cast<double>(n));
    if (n_val + n_test > n) n_val = n - n_test;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::size_t rec = idx[static_cast<std::size_t>(i)];
      if (i < n - n_val - n_test)
        manifest.records[rec].split = "train";
      else if (i < n - n_test)
        manifest.records[rec].split = "val";
      else
        manifest.records[rec].split = "test";
    }
  }
  manifest.seed = seed;
  return manifest;
}

}  // namespace cdet
