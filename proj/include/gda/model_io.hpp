#pragma once

// Model directory: W.npy (K x D), b.npy (K), Wc.npy (K x D), meta.json.

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "gda/classifier.hpp"
#include "gda/data.hpp"

namespace gda {

struct LoadedModel {
  EnsembleModel model;
  bool normalized;
  nlohmann::json meta;
};

/// `extra` keys are merged into meta.json after the required fields.
inline void save_model(const std::filesystem::path& dir, const EnsembleModel& model, bool normalized,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  save_matrix((dir / "W.npy").string(), model.gda().weight);
  save_vector((dir / "b.npy").string(), model.gda().bias);
  save_matrix((dir / "Wc.npy").string(), model.zeroshot().weight);

  nlohmann::json meta = {
      {"alpha", model.alpha()},
      {"estimator", std::string(to_string(model.estimator()))},
      {"normalized", normalized},
      {"k", model.k()},
      {"d", model.d()},
  };
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + (dir / "meta.json").string());
}

inline LoadedModel load_model(const std::filesystem::path& dir) {
  auto meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) fail(ErrorKind::IoFailure, "missing file " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, meta_path.string() + ": " + e.what());
  }
  for (const char* key : {"alpha", "estimator", "normalized", "k", "d"}) {
    if (!meta.contains(key)) fail(ErrorKind::InvalidArgument, meta_path.string() + " lacks '" + key + "'");
  }

  LinearClassifier clf;
  clf.weight = load_matrix((dir / "W.npy").string()).values();
  clf.bias = load_vector((dir / "b.npy").string());
  ZeroShotHead head{load_matrix((dir / "Wc.npy").string()).values()};
  const auto k = meta["k"].get<Index>();
  const auto d = meta["d"].get<Index>();
  require_dims(clf.weight.rows() == k && clf.weight.cols() == d && clf.bias.size() == k,
               "W.npy/b.npy shapes disagree with meta.json");
  clf.priors = uniform_priors(k);
  return {EnsembleModel(std::move(head), std::move(clf), meta["alpha"].get<double>(),
                        parse_estimator(meta["estimator"].get<std::string>())),
          meta["normalized"].get<bool>(), meta};
}

}  // namespace gda
