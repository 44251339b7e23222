#pragma once

// Command-line front end: train, al, ablate, report, gradcheck, paramcount.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ojkd/experiment.hpp"
#include "ojkd/gradcheck_suite.hpp"

namespace ojkd {

namespace detail {

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--seed: '" + item + "' is not an integer");
    }
  }
  if (seeds.empty()) throw ConfigError("--seed: empty list");
  return seeds;
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct RunOptions {
  std::string config, seeds, out, strategy, variant, variants;
  std::size_t threads = 1;
};

inline ExperimentConfig resolve_config(const RunOptions& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  auto c = load_experiment_config(o.config);
  if (!o.seeds.empty()) c.al.seeds = parse_seed_list(o.seeds);
  if (!o.out.empty()) c.out = o.out;
  if (!o.strategy.empty()) c.al.strategy = strategy_from_string(o.strategy);
  if (!o.variant.empty()) c.variant = o.variant;
  if (!o.variants.empty()) c.ablate_variants = split_csv(o.variants);
  c.validate();
  return c;
}

inline void write_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
  const auto report = build_report(dir);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  const auto csv = to_csv(report.rows);
  detail::write_file(dir / "report.csv", csv);
  out << csv;
}

inline void run_experiment(ExperimentConfig c, const std::vector<std::string>& variants, std::size_t threads,
                           std::ostream& out, std::ostream& err) {
  const auto data = load_data(c.dataset);
  data.train.validate();
  data.test.validate();
  c.al.validate(data.train.size());
  const auto dir = default_out_dir(c);
  std::filesystem::create_directories(dir);
  for (const auto& variant : variants) {
    auto v = run_variant(c, data, variant, threads);
    write_variant_run(dir, c, v);
    err << variant << " [" << to_string(c.al.strategy) << "]: train params " << v.train_params
        << ", inference params " << v.inference_params << "\n";
  }
  write_report(dir, out, err);
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Feature Refiner / online joint distillation experiments", "ojkd"};
  app.require_subcommand(1);
  detail::RunOptions opt;

  auto add_run_flags = [&](CLI::App* sub, bool with_strategy) {
    sub->add_option("--config", opt.config, "experiment config (JSON)")->required();
    sub->add_option("--seed", opt.seeds, "comma-separated seeds, overrides the config");
    sub->add_option("--out", opt.out, "output directory (default $OJKD_OUT_ROOT/<name> or runs/<name>)");
    sub->add_option("--variant", opt.variant, "head variant");
    sub->add_option("--threads", opt.threads, "worker threads for independent seeds")->check(CLI::PositiveNumber);
    if (with_strategy) sub->add_option("--strategy", opt.strategy, "random | max_entropy | core_set");
  };

  auto* train_cmd = app.add_subcommand("train", "single supervised run on the initial labeled pool");
  add_run_flags(train_cmd, false);
  std::string checkpoint_path;
  train_cmd->add_option("--checkpoint", checkpoint_path, "write the trained network of the first seed here");

  auto* al_cmd = app.add_subcommand("al", "active-learning cycle experiment");
  add_run_flags(al_cmd, true);

  auto* ablate_cmd = app.add_subcommand("ablate", "sweep over head variants");
  add_run_flags(ablate_cmd, true);
  ablate_cmd->add_option("--variants", opt.variants, "comma-separated variants (default: config or built-in list)");

  auto* report_cmd = app.add_subcommand("report", "aggregate run directories into mean/std tables");
  std::vector<std::string> report_dirs;
  report_cmd->add_option("dirs", report_dirs, "experiment output directories");
  report_cmd->add_option("--out", opt.out, "experiment output directory");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite (64-bit)");
  std::size_t instances = 20;
  std::uint64_t grad_seed = 7;
  grad_cmd->add_option("--instances", instances, "random instances per layer")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad_seed, "random seed");

  auto* param_cmd = app.add_subcommand("paramcount", "train/inference parameter counts");
  std::size_t d_bbf = 512, d_frf = 64, classes = 10;
  std::string fr_variant = "full";
  param_cmd->add_option("--config", opt.config, "experiment config (counts its model)");
  param_cmd->add_option("--d-bbf", d_bbf, "backbone feature dimension");
  param_cmd->add_option("--d-frf", d_frf, "reduced feature dimension");
  param_cmd->add_option("--classes", classes, "number of classes");
  param_cmd->add_option("--variant", fr_variant, "feature refiner variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      auto c = detail::resolve_config(opt);
      // One cycle, no growth: the labeled set is the predefined initial pool.
      c.al.num_cycles = 1;
      c.al.budget_per_cycle = 0;
      c.al.strategy = Strategy::random;
      const auto data = load_data(c.dataset);
      c.al.validate(data.train.size());
      const auto dir = default_out_dir(c);
      std::filesystem::create_directories(dir);
      auto model = model_for_variant(c.variant, resolve_backbone(c.backbone, data.train), data.train.class_count,
                                     c.d_frf, c.second_relu);
      CycleHook<float> hook;
      if (!checkpoint_path.empty()) {
        const auto first = c.al.seeds.front();
        hook = [&, first](std::uint64_t seed, std::size_t, DualHeadNetwork<float>& net) {
          if (seed == first) save_checkpoint(net, checkpoint_path);
        };
      }
      VariantRun v;
      v.variant = c.variant;
      v.strategy = c.al.strategy;
      v.model = model;
      DualHeadNetwork<float> probe(model, InitSpec{InitScheme::zeros, 0});
      v.train_params = count_parameters(probe);
      v.inference_params = count_inference_parameters(probe);
      v.result = run_al_experiment<float>(c.al, model, resolve_train_config(c, data.train), data.train, data.test,
                                          opt.threads, hook);
      write_variant_run(dir, c, v);
      for (const auto& run : v.result.runs) {
        const auto& cyc = run.cycles.front();
        out << "seed " << run.seed << ": labeled " << cyc.labeled_count << ", accuracy " << format_fixed(cyc.accuracy);
        if (!std::isnan(cyc.accuracy_fr)) out << ", fr accuracy " << format_fixed(cyc.accuracy_fr);
        out << "\n";
      }
      detail::write_report(dir, out, err);
      return 0;
    }
    if (al_cmd->parsed()) {
      auto c = detail::resolve_config(opt);
      detail::run_experiment(c, {c.variant}, opt.threads, out, err);
      return 0;
    }
    if (ablate_cmd->parsed()) {
      auto c = detail::resolve_config(opt);
      const auto variants = c.ablate_variants.empty() ? default_ablation_variants() : c.ablate_variants;
      detail::run_experiment(c, variants, opt.threads, out, err);
      return 0;
    }
    if (report_cmd->parsed()) {
      if (!opt.out.empty()) report_dirs.push_back(opt.out);
      if (report_dirs.empty()) throw ConfigError("report: give at least one directory");
      for (const auto& d : report_dirs) detail::write_report(d, out, err);
      return 0;
    }
    if (grad_cmd->parsed()) {
      bool ok = true;
      for (const auto& r : run_gradcheck_suite(instances, grad_seed)) {
        const bool pass = r.max_error < 1e-4;
        ok = ok && pass;
        char line[160];
        std::snprintf(line, sizeof line, "%-24s instances=%zu max_rel_error=%.3e %s\n", r.name.c_str(), r.instances,
                      r.max_error, pass ? "PASS" : "FAIL");
        out << line;
      }
      return ok ? 0 : 1;
    }
    if (param_cmd->parsed()) {
      if (!opt.config.empty()) {
        auto c = load_experiment_config(opt.config);
        const auto data = load_data(c.dataset);
        auto model = model_for_variant(c.variant, resolve_backbone(c.backbone, data.train), data.train.class_count,
                                       c.d_frf, c.second_relu);
        DualHeadNetwork<float> net(model, InitSpec{InitScheme::zeros, 0});
        const auto train_n = count_parameters(net), infer_n = count_inference_parameters(net);
        out << "train_parameters " << train_n << "\n"
            << "inference_parameters " << infer_n << "\n"
            << "extra_parameters " << train_n - infer_n << "\n";
        return 0;
      }
      FeatureRefinerConfig fr;
      fr.d_bbf = d_bbf;
      fr.d_frf = d_frf;
      fr.num_classes = classes;
      fr.variant = fr_variant_from_string(fr_variant);
      FeatureRefinerHead<float> head(fr, InitSpec{InitScheme::zeros, 0});
      out << "extra_parameters " << count_parameters(head) << "\n"
          << "formula " << fr_parameter_formula(fr) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ojkd
