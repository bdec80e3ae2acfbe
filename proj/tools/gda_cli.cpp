// gda: command-line front end for the training-free GDA toolkit.
//
//   gda fit      --dataset DIR --output DIR [--alpha A|search] [--shots N|full]
//   gda eval     --model DIR --dataset DIR [--split test] [--groups counts.txt]
//   gda protocol --dataset DIR [--shots 1,2,4,8,16] [--seeds 1,2,3]
//   gda em       --dataset DIR --output DIR [--mode ensemble|pure-gmm]
//   gda b2n      --dataset DIR --new-text FILE --output DIR [--k 64]
//
// Exit codes: 0 success, 2 input/validation error, 3 numerical degeneracy.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gda/gda.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDegenerate = 3;

struct CommonConfig {
  std::string dataset_dir;
  std::string estimator = "ks";
  bool no_normalize = false;
  std::string grid;

  bool normalize() const { return !no_normalize; }
  gda::Estimator estimator_tag() const { return gda::parse_estimator(estimator); }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, const std::string& what, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(parse(item, used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      gda::fail(gda::ErrorKind::InvalidArgument, "cannot parse '" + item + "' in " + what);
    }
  }
  if (out.empty()) gda::fail(gda::ErrorKind::InvalidArgument, what + " list is empty");
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  if (text.empty()) return gda::default_alpha_grid();
  return parse_list<double>(text, "--grid", [](const std::string& s, std::size_t& used) { return std::stod(s, &used); });
}

std::vector<int> parse_ints(const std::string& text, const std::string& what) {
  return parse_list<int>(text, what, [](const std::string& s, std::size_t& used) { return std::stoi(s, &used); });
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  return parse_list<std::uint64_t>(text, "--seeds", [](const std::string& s, std::size_t& used) {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(std::stoull(s, &used));
  });
}

double parse_alpha(const std::string& text) {
  try {
    std::size_t used = 0;
    double a = std::stod(text, &used);
    if (used == text.size()) return a;
  } catch (const std::logic_error&) {
  }
  gda::fail(gda::ErrorKind::InvalidArgument, "--alpha must be a number or 'search', got '" + text + "'");
}

void add_common(CLI::App* cmd, CommonConfig& cfg) {
  cmd->add_option("--dataset", cfg.dataset_dir, "Dataset directory")->envname("GDA_DATASET_DIR")->required();
  cmd->add_option("--estimator", cfg.estimator, "Precision estimator: ks, ledoit_wolf, oas, pinv")
      ->envname("GDA_ESTIMATOR")
      ->capture_default_str();
  cmd->add_flag("--no-normalize", cfg.no_normalize, "Keep raw features instead of L2-normalizing rows");
}

gda::LabeledSet maybe_fewshot(const gda::LabeledSet& train, const std::string& shots, std::uint64_t seed) {
  if (shots == "full") return train;
  int n = parse_ints(shots, "--shots").front();
  return gda::select_rows(train, gda::sample_fewshot(train.y, n, seed).indices);
}

// Alpha for fit/b2n: a literal value, or the validation-set maximizer.
double resolve_alpha(const std::string& alpha, const std::string& grid, const gda::LabeledSet& train, const fs::path& dir,
                     const gda::ZeroShotHead& head, gda::Estimator est, bool normalize, nlohmann::json& extra) {
  if (alpha != "search") return parse_alpha(alpha);
  gda::LabeledSet val = gda::load_split(dir, "val", normalize);
  gda::check_split(val, head, "val");
  gda::AlphaSearchResult r = gda::search_alpha(train, val, head, parse_grid(grid), est);
  extra["alpha_grid"] = r.grid;
  extra["val_accuracy_per_alpha"] = r.val_accuracy_per_alpha;
  return r.best_alpha;
}

void warn_if_not_unit(const gda::ZeroShotHead& head) {
  if (!head.has_unit_rows()) std::cerr << "warning: zeroshot_weights rows are not unit norm\n";
}

int cmd_fit(const CommonConfig& cfg, const std::string& alpha_arg, const std::string& shots, std::uint64_t seed,
            const std::string& output) {
  const fs::path dir = cfg.dataset_dir;
  const gda::Estimator est = cfg.estimator_tag();
  gda::ZeroShotHead head = gda::load_zeroshot(dir);
  warn_if_not_unit(head);
  gda::LabeledSet full = gda::load_split(dir, "train", cfg.normalize());
  gda::check_split(full, head, "train");
  gda::LabeledSet train = maybe_fewshot(full, shots, seed);

  nlohmann::json extra = nlohmann::json::object();
  const double alpha = resolve_alpha(alpha_arg, cfg.grid, train, dir, head, est, cfg.normalize(), extra);
  gda::EnsembleModel model = gda::fit_pipeline(train, head, alpha, est);
  if (shots != "full") {
    extra["shots"] = shots;
    extra["seed"] = seed;
  }
  gda::save_model(output, model, cfg.normalize(), extra);
  std::cerr << "wrote model to " << output << " (alpha=" << alpha << ")\n";
  return 0;
}

int cmd_eval(const CommonConfig& cfg, const std::string& model_dir, const std::string& split, const std::string& groups_file) {
  gda::LoadedModel loaded = gda::load_model(model_dir);
  gda::LabeledSet data = gda::load_split(cfg.dataset_dir, split, loaded.normalized);
  gda::require_dims(data.x.d() == loaded.model.d(), split + " features have D=" + std::to_string(data.x.d()) +
                                                        " but the model expects D=" + std::to_string(loaded.model.d()));
  gda::validate_labels(data.y, data.x.n(), loaded.model.k());

  std::optional<gda::LongTailGroups> groups;
  if (!groups_file.empty()) {
    std::ifstream in(groups_file);
    if (!in) gda::fail(gda::ErrorKind::IoFailure, "cannot open groups file " + groups_file);
    std::vector<std::int64_t> counts;
    for (std::int64_t c; in >> c;) counts.push_back(c);
    if (!in.eof()) gda::fail(gda::ErrorKind::InvalidArgument, groups_file + ": expected one integer count per line");
    if (static_cast<gda::Index>(counts.size()) != loaded.model.k()) {
      gda::fail(gda::ErrorKind::LengthMismatch, groups_file + " lists " + std::to_string(counts.size()) + " counts for " +
                                                    std::to_string(loaded.model.k()) + " classes");
    }
    groups = gda::partition_longtail_counts(counts);
  }
  gda::LabelVector pred = gda::predict(gda::ensemble_logits(data.x.values(), loaded.model));
  std::cout << gda::to_json(gda::evaluate(pred, data.y, groups, loaded.model.k())).dump(2) << '\n';
  return 0;
}

int cmd_protocol(const CommonConfig& cfg, const std::string& shots, const std::string& seeds, bool longtail, const std::string& output) {
  gda::ProtocolOptions opt;
  opt.shots = parse_ints(shots, "--shots");
  opt.seeds = parse_seeds(seeds);
  opt.grid = parse_grid(cfg.grid);
  opt.estimator = cfg.estimator_tag();
  opt.longtail_groups = longtail;
  gda::DatasetBundle bundle = gda::load_bundle(cfg.dataset_dir, cfg.normalize());
  warn_if_not_unit(bundle.zeroshot);
  const std::string json = gda::to_json(gda::run_fewshot_protocol(bundle, opt)).dump(2);
  if (output.empty() || output == "-") {
    std::cout << json << '\n';
  } else {
    std::ofstream out(output);
    out << json << '\n';
    if (!out) gda::fail(gda::ErrorKind::IoFailure, "cannot write " + output);
  }
  return 0;
}

int cmd_em(const CommonConfig& cfg, const std::string& mode, const std::string& alpha_arg, int max_iter, double tol,
           const std::string& inversion, const std::string& cov_update, const std::string& output) {
  const fs::path dir = cfg.dataset_dir;
  gda::FeatureMatrix x = gda::load_matrix(gda::detail::require_file(dir, "train_features.npy"));
  if (cfg.normalize()) x = gda::l2_normalize(x);
  gda::ZeroShotHead head = gda::load_zeroshot(dir);
  warn_if_not_unit(head);
  gda::require_dims(head.d() == x.d(), "train features and zeroshot_weights disagree on D");

  gda::EmOptions opt;
  if (mode == "ensemble") {
    opt.mode = gda::EmMode::ensemble;
  } else if (mode == "pure-gmm") {
    opt.mode = gda::EmMode::pure_gmm;
  } else {
    gda::fail(gda::ErrorKind::InvalidArgument, "--mode must be ensemble or pure-gmm");
  }
  opt.inversion = inversion == "exact" ? gda::EmInversion::exact : gda::EmInversion::ks_regularized;
  opt.covariance_update = cov_update == "pooled" ? gda::CovarianceUpdate::pooled : gda::CovarianceUpdate::class_average;
  opt.alpha = parse_alpha(alpha_arg);
  opt.max_iter = max_iter;
  opt.tol = tol;

  gda::EmResult r = gda::em_fit(x.values(), head, opt);
  for (gda::Index c : r.degenerate) std::cerr << "warning: EM component " << c << " lost all responsibility mass; kept its previous mean\n";
  std::cerr << "em: " << r.iterations << " iterations, " << (r.converged ? "converged" : "hit --max-iter") << '\n';
  nlohmann::json extra = {{"mode", mode},
                          {"iterations", r.iterations},
                          {"converged", r.converged},
                          {"inversion", inversion},
                          {"cov_update", cov_update},
                          {"log_likelihood", r.log_likelihood}};
  gda::save_model(output, r.model, cfg.normalize(), extra);
  return 0;
}

int cmd_b2n(const CommonConfig& cfg, const std::string& new_text, int k, const std::string& alpha_arg, const std::string& shots,
            std::uint64_t seed, const std::string& output) {
  const fs::path dir = cfg.dataset_dir;
  const gda::Estimator est = cfg.estimator_tag();
  gda::ZeroShotHead base_head = gda::load_zeroshot(dir);
  warn_if_not_unit(base_head);
  gda::LabeledSet full = gda::load_split(dir, "train", cfg.normalize());
  gda::check_split(full, base_head, "train");
  gda::LabeledSet train = maybe_fewshot(full, shots, seed);

  gda::Matrix extra_rows = gda::load_dense(new_text);
  gda::require_dims(extra_rows.cols() == base_head.d(), new_text + " has D=" + std::to_string(extra_rows.cols()) +
                                                            " but the dataset has D=" + std::to_string(base_head.d()));
  gda::Matrix all_text(base_head.k() + extra_rows.rows(), base_head.d());
  all_text << base_head.weight, extra_rows;

  nlohmann::json extra = nlohmann::json::object();
  const double alpha = resolve_alpha(alpha_arg, cfg.grid, train, dir, base_head, est, cfg.normalize(), extra);
  gda::EnsembleModel model = gda::b2n_fit(train.x.values(), train.y, base_head.k(), all_text, k, alpha, est);
  extra["neighbors"] = k;
  extra["base_classes"] = base_head.k();
  gda::save_model(output, model, cfg.normalize(), extra);
  std::cerr << "wrote " << model.k() << "-class model to " << output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free GDA classifiers over precomputed embeddings"};
  app.require_subcommand(1);

  CommonConfig fit_cfg, eval_cfg, proto_cfg, em_cfg, b2n_cfg;

  std::string fit_alpha = "search", fit_shots = "full", fit_output;
  std::uint64_t fit_seed = 1;
  auto* fit = app.add_subcommand("fit", "Fit an ensemble model and write it to a directory");
  add_common(fit, fit_cfg);
  fit->add_option("--alpha", fit_alpha, "Mixing weight, or 'search' to pick it on the val split")->capture_default_str();
  fit->add_option("--shots", fit_shots, "Per-class sample budget, or 'full'")->capture_default_str();
  fit->add_option("--seed", fit_seed, "Few-shot sampling seed")->capture_default_str();
  fit->add_option("--grid", fit_cfg.grid, "Comma-separated alpha grid (default 0.001,0.01,0.1,1,10,100)");
  fit->add_option("--output,-o", fit_output, "Model directory")->required();

  std::string eval_model, eval_split = "test", eval_groups;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved model; prints a JSON report");
  eval->add_option("--dataset", eval_cfg.dataset_dir, "Dataset directory")->envname("GDA_DATASET_DIR")->required();
  eval->add_option("--model", eval_model, "Model directory")->required();
  eval->add_option("--split", eval_split, "Split to score")->capture_default_str();
  eval->add_option("--groups", eval_groups, "Per-class training counts (one per line) for long-tail groups");

  std::string proto_shots = "1,2,4,8,16", proto_seeds = "1,2,3", proto_output;
  bool proto_longtail = false;
  auto* proto = app.add_subcommand("protocol", "Run the seeded few-shot protocol; prints a JSON table");
  add_common(proto, proto_cfg);
  proto->add_option("--shots", proto_shots, "Comma-separated shot counts")->capture_default_str();
  proto->add_option("--seeds", proto_seeds, "Comma-separated seeds")->capture_default_str();
  proto->add_option("--grid", proto_cfg.grid, "Comma-separated alpha grid");
  proto->add_flag("--longtail", proto_longtail, "Report many/medium/few group accuracies");
  proto->add_option("--output,-o", proto_output, "Write the report here instead of stdout");

  std::string em_mode = "ensemble", em_alpha = "1", em_inversion = "ks", em_cov = "class-average", em_output;
  int em_max_iter = 100;
  double em_tol = 1e-4;
  auto* em = app.add_subcommand("em", "Unsupervised EM adaptation on the train features (labels ignored)");
  add_common(em, em_cfg);
  em->add_option("--mode", em_mode, "ensemble or pure-gmm")->check(CLI::IsMember({"ensemble", "pure-gmm"}))->capture_default_str();
  em->add_option("--alpha", em_alpha, "Mixing weight")->capture_default_str();
  em->add_option("--max-iter", em_max_iter, "Iteration cap")->check(CLI::NonNegativeNumber)->capture_default_str();
  em->add_option("--tol", em_tol, "Stop when the largest mean change is below this")->capture_default_str();
  em->add_option("--inversion", em_inversion, "ks or exact")->check(CLI::IsMember({"ks", "exact"}))->capture_default_str();
  em->add_option("--cov-update", em_cov, "class-average or pooled")
      ->check(CLI::IsMember({"class-average", "pooled"}))
      ->capture_default_str();
  em->add_option("--output,-o", em_output, "Model directory")->required();

  std::string b2n_text, b2n_alpha = "1", b2n_shots = "full", b2n_output;
  int b2n_k = gda::kDefaultNeighbors;
  std::uint64_t b2n_seed = 1;
  auto* b2n = app.add_subcommand("b2n", "Extend a base-class model to new classes from their text embeddings");
  add_common(b2n, b2n_cfg);
  b2n->add_option("--new-text", b2n_text, "(M-K) x D NPY of new-class text embeddings")->required();
  b2n->add_option("--k", b2n_k, "Neighbours synthesized per new class")->check(CLI::PositiveNumber)->capture_default_str();
  b2n->add_option("--alpha", b2n_alpha, "Mixing weight, or 'search' on the base val split")->capture_default_str();
  b2n->add_option("--shots", b2n_shots, "Per-class base budget, or 'full'")->capture_default_str();
  b2n->add_option("--seed", b2n_seed, "Few-shot sampling seed")->capture_default_str();
  b2n->add_option("--grid", b2n_cfg.grid, "Comma-separated alpha grid");
  b2n->add_option("--output,-o", b2n_output, "Model directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*fit) return cmd_fit(fit_cfg, fit_alpha, fit_shots, fit_seed, fit_output);
    if (*eval) return cmd_eval(eval_cfg, eval_model, eval_split, eval_groups);
    if (*proto) return cmd_protocol(proto_cfg, proto_shots, proto_seeds, proto_longtail, proto_output);
    if (*em) return cmd_em(em_cfg, em_mode, em_alpha, em_max_iter, em_tol, em_inversion, em_cov, em_output);
    if (*b2n) return cmd_b2n(b2n_cfg, b2n_text, b2n_k, b2n_alpha, b2n_shots, b2n_seed, b2n_output);
  } catch (const gda::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == gda::ErrorKind::DegenerateCovariance ? kExitDegenerate : kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
