#pragma once

// On-disk dataset bundle:
//   <dir>/{train,val,test}_features.npy   N x D, '<f4'
//   <dir>/{train,val,test}_labels.npy     N, '<i8'
//   <dir>/zeroshot_weights.npy            K x D, '<f4'
//   <dir>/class_names.txt                 K lines, UTF-8

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gda/classifier.hpp"
#include "gda/data.hpp"

namespace gda {

struct DatasetBundle {
  std::string name;
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
  ZeroShotHead zeroshot;
  std::vector<std::string> class_names;

  Index k() const { return zeroshot.k(); }
  Index d() const { return zeroshot.d(); }
};

namespace detail {

inline std::string require_file(const std::filesystem::path& dir, const std::string& file) {
  auto path = dir / file;
  if (!std::filesystem::is_regular_file(path)) fail(ErrorKind::IoFailure, "missing file " + path.string());
  return path.string();
}

}  // namespace detail

inline LabeledSet load_split(const std::filesystem::path& dir, const std::string& split, bool normalize = true) {
  FeatureMatrix x = load_matrix(detail::require_file(dir, split + "_features.npy"));
  LabelVector y = load_labels(detail::require_file(dir, split + "_labels.npy"));
  if (static_cast<Index>(y.size()) != x.n()) {
    fail(ErrorKind::LengthMismatch, split + ": " + std::to_string(y.size()) + " labels for " + std::to_string(x.n()) + " feature rows");
  }
  if (normalize) x = l2_normalize(x);
  return {std::move(x), std::move(y)};
}

inline ZeroShotHead load_zeroshot(const std::filesystem::path& dir) {
  return {load_matrix(detail::require_file(dir, "zeroshot_weights.npy")).values()};
}

inline std::vector<std::string> load_class_names(const std::filesystem::path& dir) {
  std::ifstream in(detail::require_file(dir, "class_names.txt"));
  if (!in) fail(ErrorKind::IoFailure, "cannot read class_names.txt in " + dir.string());
  std::vector<std::string> names;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  while (!names.empty() && names.back().empty()) names.pop_back();
  return names;
}

inline void check_split(const LabeledSet& set, const ZeroShotHead& head, const std::string& split) {
  require_dims(set.x.d() == head.d(), split + " features have D=" + std::to_string(set.x.d()) + " but zeroshot_weights has D=" +
                                          std::to_string(head.d()));
  validate_labels(set.y, set.x.n(), head.k());
}

inline DatasetBundle load_bundle(const std::filesystem::path& dir, bool normalize = true) {
  DatasetBundle b;
  b.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
  b.zeroshot = load_zeroshot(dir);
  b.class_names = load_class_names(dir);
  if (static_cast<Index>(b.class_names.size()) != b.zeroshot.k()) {
    fail(ErrorKind::LengthMismatch, "class_names.txt lists " + std::to_string(b.class_names.size()) +
                                        " classes but zeroshot_weights has " + std::to_string(b.zeroshot.k()) + " rows");
  }
  b.train = load_split(dir, "train", normalize);
  b.val = load_split(dir, "val", normalize);
  b.test = load_split(dir, "test", normalize);
  check_split(b.train, b.zeroshot, "train");
  check_split(b.val, b.zeroshot, "val");
  check_split(b.test, b.zeroshot, "test");
  return b;
}

inline void save_split(const std::filesystem::path& dir, const std::string& split, const LabeledSet& set) {
  save_matrix((dir / (split + "_features.npy")).string(), set.x);
  save_labels((dir / (split + "_labels.npy")).string(), set.y);
}

inline void save_bundle(const std::filesystem::path& dir, const DatasetBundle& b) {
  std::filesystem::create_directories(dir);
  save_split(dir, "train", b.train);
  save_split(dir, "val", b.val);
  save_split(dir, "test", b.test);
  save_matrix((dir / "zeroshot_weights.npy").string(), b.zeroshot.weight);
  std::ofstream out(dir / "class_names.txt");
  for (const auto& name : b.class_names) out << name << '\n';
  if (!out) fail(ErrorKind::IoFailure, "cannot write class_names.txt in " + dir.string());
}

}  // namespace gda
