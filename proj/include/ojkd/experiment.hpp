#pragma once

// Declarative experiment configuration and the on-disk run layout.
//
//   <out>/<variant>__<strategy>/config.json          effective config echo
//   <out>/<variant>__<strategy>/seed_<s>/cycles.csv  per-cycle accuracies + hashes
//   <out>/<variant>__<strategy>/seed_<s>/meta.json   variant, strategy, hash, counts
//   <out>/<variant>__<strategy>/seed_<s>/pool_cycle_<k>.txt  labeled indices used in cycle k
//   <out>/<variant>__<strategy>/seed_<s>/pool_final.txt
//   <out>/report.csv                                 aggregated mean/std rows

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ojkd/active_learning.hpp"
#include "ojkd/report.hpp"

namespace ojkd {

inline constexpr const char* kCodeVersion = "ojkd 1.0.0";

struct DatasetSource {
  bool synthetic = true;
  SyntheticSpec spec;
  std::string train_path, test_path;  // file datasets
  DatasetFormat format = DatasetFormat::idx;
  std::uint64_t split_seed = 0;  // 70/30 stratified split when test_path is empty
};

struct AugmentConfig {
  bool enabled = false;
  bool hflip = true;
  std::size_t crop_h = 0, crop_w = 0, padding = 0;
  bool normalize = true;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSource dataset;
  BackboneConfig backbone;
  std::string variant = "fr_ojkd";
  std::size_t d_frf = 64;
  bool second_relu = false;
  OptimizerConfig optimizer;
  AugmentConfig augment;
  ALConfig al;
  std::vector<std::string> ablate_variants;
  std::string out;

  void validate() const {
    if (al.seeds.empty()) throw ConfigError("config: seeds must be nonempty");
    std::vector<std::uint64_t> s = al.seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw ConfigError("config: seeds must be distinct");
    optimizer.validate();
    if (!dataset.synthetic && dataset.train_path.empty()) throw ConfigError("config: dataset path missing");
    if (dataset.synthetic) dataset.spec.validate();
  }
};

inline const std::vector<std::string>& default_ablation_variants() {
  static const std::vector<std::string> v{"baseline",        "fr_square_linear_only", "fr_reduce_only",
                                          "fr_no_layernorm", "fr_ojkd",               "fr_no_gate",
                                          "fr_k1",           "fr_k3"};
  return v;
}

/// Model configuration for a head variant name:
///   baseline, fr_ojkd, fr_no_gate, fr_no_layernorm, fr_reduce_only,
///   fr_square_linear_only, fr_k<k>.
/// All fr_* ablation variants train with the gate enabled.
inline ModelConfig model_for_variant(const std::string& variant, const BackboneConfig& backbone,
                                     std::size_t num_classes, std::size_t d_frf, bool second_relu) {
  ModelConfig m;
  m.backbone = backbone;
  m.num_classes = num_classes;
  m.fr.d_frf = d_frf;
  m.fr.second_relu = second_relu;
  m.with_fr = true;
  m.gate_enabled = true;
  if (variant == "baseline") {
    m.with_fr = false;
    m.gate_enabled = false;
  } else if (variant == "fr_ojkd") {
  } else if (variant == "fr_no_gate") {
    m.gate_enabled = false;
  } else if (variant == "fr_no_layernorm") {
    m.fr.variant = FrVariant::no_layernorm;
  } else if (variant == "fr_reduce_only") {
    m.fr.variant = FrVariant::reduce_only;
  } else if (variant == "fr_square_linear_only") {
    m.fr.variant = FrVariant::square_linear_only;
  } else if (variant.rfind("fr_k", 0) == 0 && variant.size() > 4 &&
             variant.find_first_not_of("0123456789", 4) == std::string::npos) {
    m.fr.variant = FrVariant::k_nonlinear_layers;
    m.fr.k = std::stoul(variant.substr(4));
  } else {
    throw ConfigError("unknown head variant '" + variant + "'");
  }
  return m;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"lr0", c.lr0}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
       {"epochs", c.epochs}, {"lr_drop_fraction", c.lr_drop_fraction},
       {"lr_drop_factor", c.lr_drop_factor}, {"batch_size", c.batch_size}};
}

inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.lr0 = j.value("lr0", c.lr0);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.lr_drop_fraction = j.value("lr_drop_fraction", c.lr_drop_fraction);
  c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
  c.batch_size = j.value("batch_size", c.batch_size);
}

inline nlohmann::json to_json_value(const ExperimentConfig& c) {
  nlohmann::json ds;
  if (c.dataset.synthetic) {
    ds = {{"synthetic", c.dataset.spec}};
  } else {
    ds = {{"train_path", c.dataset.train_path}, {"test_path", c.dataset.test_path},
          {"format", c.dataset.format == DatasetFormat::idx ? "idx" : "manifest"},
          {"split_seed", c.dataset.split_seed}};
  }
  return {{"name", c.name},
          {"dataset", ds},
          {"backbone", c.backbone},
          {"head", {{"variant", c.variant}, {"d_frf", c.d_frf}, {"second_relu", c.second_relu}}},
          {"optimizer", c.optimizer},
          {"augment",
           {{"enabled", c.augment.enabled}, {"hflip", c.augment.hflip},
            {"crop", {c.augment.crop_h, c.augment.crop_w}}, {"padding", c.augment.padding},
            {"normalize", c.augment.normalize}}},
          {"al",
           {{"initial_pool_size", c.al.initial_pool_size}, {"budget_per_cycle", c.al.budget_per_cycle},
            {"num_cycles", c.al.num_cycles}, {"strategy", to_string(c.al.strategy)},
            {"entropy_head", c.al.entropy_head == AcquisitionHead::fr ? "fr" : "original"}}},
          {"seeds", c.al.seeds},
          {"ablate_variants", c.ablate_variants}};
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    const auto& ds = j.at("dataset");
    if (ds.contains("synthetic")) {
      c.dataset.synthetic = true;
      c.dataset.spec = ds.at("synthetic").get<SyntheticSpec>();
    } else {
      c.dataset.synthetic = false;
      c.dataset.train_path = ds.at("train_path").get<std::string>();
      c.dataset.test_path = ds.value("test_path", std::string());
      c.dataset.format = dataset_format_from_string(ds.value("format", std::string("idx")));
      c.dataset.split_seed = ds.value("split_seed", std::uint64_t{0});
    }
    const auto& bb = j.at("backbone");
    c.backbone.kind = backbone_kind_from_string(bb.value("kind", std::string("mlp")));
    c.backbone.input_shape = bb.value("input_shape", Shape{});
    c.backbone.stage_widths = bb.value("stage_widths", std::vector<std::size_t>{});
    c.backbone.d_bbf = bb.value("d_bbf", std::size_t{0});
    if (j.contains("head")) {
      const auto& h = j.at("head");
      c.variant = h.value("variant", c.variant);
      c.d_frf = h.value("d_frf", c.d_frf);
      c.second_relu = h.value("second_relu", c.second_relu);
    }
    if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<OptimizerConfig>();
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      c.augment.enabled = a.value("enabled", true);
      c.augment.hflip = a.value("hflip", c.augment.hflip);
      if (a.contains("crop")) {
        const auto crop = a.at("crop").get<std::vector<std::size_t>>();
        if (crop.size() != 2) throw ConfigError("config: augment.crop must be [h, w]");
        c.augment.crop_h = crop[0];
        c.augment.crop_w = crop[1];
      }
      c.augment.padding = a.value("padding", c.augment.padding);
      c.augment.normalize = a.value("normalize", c.augment.normalize);
    }
    if (j.contains("al")) {
      const auto& a = j.at("al");
      c.al.initial_pool_size = a.value("initial_pool_size", c.al.initial_pool_size);
      c.al.budget_per_cycle = a.value("budget_per_cycle", c.al.budget_per_cycle);
      c.al.num_cycles = a.value("num_cycles", c.al.num_cycles);
      c.al.strategy = strategy_from_string(a.value("strategy", std::string("random")));
      c.al.entropy_head = a.value("entropy_head", std::string("original")) == "fr" ? AcquisitionHead::fr
                                                                                   : AcquisitionHead::original;
    }
    c.al.seeds = j.value("seeds", std::vector<std::uint64_t>{0});
    c.ablate_variants = j.value("ablate_variants", std::vector<std::string>{});
    c.out = j.value("out", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Hash of the effective configuration of one variant run. The output directory and the
/// ablation list do not change what a single run computes, so both are excluded.
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json_value(c);
  j.erase("ablate_variants");
  return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------
// Execution

struct LoadedData {
  Dataset train, test;
};

inline LoadedData load_data(const DatasetSource& src) {
  if (src.synthetic) {
    auto [tr, te] = make_synthetic(src.spec);
    return {std::move(tr), std::move(te)};
  }
  auto train_set = load_image_dataset(src.train_path, src.format);
  if (!src.test_path.empty()) {
    auto test_set = load_image_dataset(src.test_path, src.format);
    test_set.split = Split::test;
    return {std::move(train_set), std::move(test_set)};
  }
  auto [tr, te] = stratified_split(train_set, 0.7, src.split_seed);
  auto test_set = train_set.subset(te);
  test_set.split = Split::test;
  return {train_set.subset(tr), std::move(test_set)};
}

/// Backbone config with defaults filled from the data: input shape from the
/// samples, d_bbf from the last stage width for convolutional kinds.
inline BackboneConfig resolve_backbone(BackboneConfig b, const Dataset& d) {
  if (b.input_shape.empty()) b.input_shape = d.sample_shape;
  if (b.d_bbf == 0) {
    if (b.kind != BackboneKind::mlp && !b.stage_widths.empty()) b.d_bbf = b.stage_widths.back();
    else b.d_bbf = 64;
  }
  return b;
}

inline TrainConfig resolve_train_config(const ExperimentConfig& c, const Dataset& train_set) {
  TrainConfig t;
  t.optim = c.optimizer;
  if (c.augment.enabled && train_set.is_image()) {
    AugmentSpec a;
    a.hflip = c.augment.hflip;
    a.crop_h = c.augment.crop_h;
    a.crop_w = c.augment.crop_w;
    a.crop_padding = c.augment.padding;
    if (c.augment.normalize) std::tie(a.mean, a.std) = channel_stats(train_set);
    t.augment = a;
  }
  return t;
}

struct VariantRun {
  std::string variant;
  Strategy strategy;
  ModelConfig model;
  ALResult result;
  std::size_t train_params = 0, inference_params = 0;
};

inline VariantRun run_variant(const ExperimentConfig& c, const LoadedData& data, const std::string& variant,
                              std::size_t threads) {
  VariantRun v;
  v.variant = variant;
  v.strategy = c.al.strategy;
  v.model = model_for_variant(variant, resolve_backbone(c.backbone, data.train), data.train.class_count,
                              c.d_frf, c.second_relu);
  DualHeadNetwork<float> probe(v.model, InitSpec{InitScheme::zeros, 0});
  v.train_params = count_parameters(probe);
  v.inference_params = count_inference_parameters(probe);
  v.result = run_al_experiment<float>(c.al, v.model, resolve_train_config(c, data.train), data.train,
                                      data.test, threads);
  return v;
}

namespace detail {

inline std::string acc_str(double v) { return std::isnan(v) ? "nan" : format_fixed(v); }

}  // namespace detail

inline std::string run_dir_name(const std::string& variant, Strategy s) {
  return variant + "__" + to_string(s);
}

/// Writes per-seed artifacts of one variant under <out>/<variant>__<strategy>/.
inline void write_variant_run(const std::filesystem::path& out, const ExperimentConfig& c, const VariantRun& v) {
  namespace fs = std::filesystem;
  const auto dir = out / run_dir_name(v.variant, v.strategy);
  fs::create_directories(dir);
  auto cfg = c;
  cfg.variant = v.variant;
  const auto hash = config_hash(cfg);
  detail::write_file(dir / "config.json", to_json_value(cfg).dump(2) + "\n");
  for (const auto& run : v.result.runs) {
    const auto sd = dir / ("seed_" + std::to_string(run.seed));
    fs::create_directories(sd);
    std::string csv = "cycle,labeled_count,acc_original,acc_fr,init_hash,trained_hash\n";
    for (const auto& cyc : run.cycles) {
      csv += std::to_string(cyc.cycle) + "," + std::to_string(cyc.labeled_count) + "," +
             detail::acc_str(cyc.accuracy) + "," + detail::acc_str(cyc.accuracy_fr) + "," +
             hex64(cyc.init_hash) + "," + hex64(cyc.trained_hash) + "\n";
      detail::write_file(sd / ("pool_cycle_" + std::to_string(cyc.cycle) + ".txt"), format_index_list(cyc.labeled));
    }
    detail::write_file(sd / "cycles.csv", csv);
    detail::write_file(sd / "pool_final.txt", format_index_list(run.final_pool.labeled));
    nlohmann::json meta = {{"variant", v.variant},
                           {"strategy", to_string(v.strategy)},
                           {"config_hash", hash},
                           {"code_version", kCodeVersion},
                           {"seed", run.seed},
                           {"dual_head", v.model.with_fr},
                           {"train_parameters", v.train_params},
                           {"inference_parameters", v.inference_params}};
    detail::write_file(sd / "meta.json", meta.dump(2) + "\n");
  }
}

struct ReportBuild {
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
};

/// Aggregates every run directory (a directory containing seed_* children)
/// found under `root`. Pure function of the files; rows are ordered by run
/// directory name, then head, then cycle.
inline ReportBuild build_report(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ConfigError("report: no such directory " + root.string());
  std::map<std::string, std::vector<fs::path>> runs;  // run dir -> seed dirs
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0 &&
        fs::exists(e.path() / "cycles.csv"))
      runs[e.path().parent_path().string()].push_back(e.path());
  }
  if (runs.empty()) throw ConfigError("report: no seed_* run directories under " + root.string());
  ReportBuild out;
  for (auto& [dir, seeds] : runs) {
    std::sort(seeds.begin(), seeds.end());
    std::vector<std::vector<double>> orig, fr;
    std::vector<std::size_t> labeled;
    std::string variant, strategy, hash;
    bool dual = false;
    for (const auto& sd : seeds) {
      const auto meta = nlohmann::json::parse(detail::read_file(sd / "meta.json"));
      variant = meta.at("variant").get<std::string>();
      strategy = meta.at("strategy").get<std::string>();
      const auto h = meta.at("config_hash").get<std::string>();
      if (!hash.empty() && h != hash) throw ConfigError("report: mixed config hashes in " + dir);
      hash = h;
      dual = meta.at("dual_head").get<bool>();
      std::istringstream csv(detail::read_file(sd / "cycles.csv"));
      std::string line;
      std::getline(csv, line);
      auto& ro = orig.emplace_back();
      auto& rf = fr.emplace_back();
      std::vector<std::size_t> counts;
      while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ls, field, ',')) f.push_back(field);
        if (f.size() < 4) throw ConfigError("report: malformed row in " + (sd / "cycles.csv").string());
        counts.push_back(std::stoul(f[1]));
        ro.push_back(std::stod(f[2]));
        rf.push_back(f[3] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[3]));
      }
      if (!labeled.empty() && counts != labeled) throw ConfigError("report: seeds disagree on pool sizes in " + dir);
      labeled = counts;
    }
    auto emit = [&](const std::vector<std::vector<double>>& m, const std::string& head) {
      const auto agg = aggregate(m);
      if (agg.single_seed) out.warnings.push_back(dir + ": single seed, std reported as 0");
      for (std::size_t k = 0; k < agg.columns.size(); ++k)
        out.rows.push_back({k, labeled[k], agg.columns[k].mean, agg.columns[k].std, head, variant, strategy, hash});
    };
    emit(orig, "original");
    if (dual) emit(fr, "fr");
  }
  return out;
}

inline std::filesystem::path default_out_dir(const ExperimentConfig& c) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("OJKD_OUT_ROOT");
  return std::filesystem::path(root && *root ? root : "runs") / c.name;
}

}  // namespace ojkd
