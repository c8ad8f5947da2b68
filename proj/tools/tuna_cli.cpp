/*
 * Copyright 2026 The TUNA-CIL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tuna/errors.hpp"
#include "tuna/fusion.hpp"
#include "tuna/harness/checkpoint.hpp"
#include "tuna/harness/data.hpp"
#include "tuna/harness/experiment.hpp"
#include "tuna/harness/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> strategies;
  std::string out;
};

tuna::ExperimentConfig resolve(const Common& c) {
  tuna::ExperimentConfig cfg = c.config.empty() ? tuna::ExperimentConfig{} : tuna::load_config(c.config);
  if (c.seed) cfg.seed = c.seed;
  if (!c.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : c.strategies) cfg.strategies.push_back(tuna::parse_strategy(s));
  }
  cfg.apply_seed();
  cfg.validate();
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

int cmd_pretrain(const Common& c) {
  auto cfg = resolve(c);
  cfg.pretrain.checkpoint.clear();
  const fs::path out = c.out.empty() ? fs::path("backbone.ckpt") : fs::path(c.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto backbone = tuna::prepare_backbone(cfg, log_line);
  tuna::save_backbone(backbone, out);
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

int cmd_run(const Common& c, const std::string& backbone_path) {
  auto cfg = resolve(c);
  if (!backbone_path.empty()) cfg.pretrain.checkpoint = backbone_path;
  const fs::path out = c.out.empty() ? fs::path("run") : fs::path(c.out);
  const auto result = tuna::run_experiment(cfg, nullptr, log_line);
  tuna::write_outputs(result, out);
  for (const auto& s : result.report.strategies) {
    std::printf("%-10s average %.4f  last %.4f\n", s.c_str(), result.report.average.at(s), result.report.last.at(s));
  }
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

int cmd_fuse(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<tuna::AdapterSet> sets;
  for (const auto& p : inputs) sets.push_back(tuna::load_adapter(p));
  const fs::path out = out_path.empty() ? fs::path("universal.ckpt") : fs::path(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  tuna::save_adapter(tuna::fuse(sets), out);
  std::cout << "fused " << sets.size() << " adapter(s) into " << out.string() << '\n';
  return kOk;
}

int cmd_eval(Common c, const std::string& checkpoint) {
  auto loaded = tuna::load_checkpoint(checkpoint);
  tuna::ExperimentConfig cfg;
  if (c.config.empty()) {
    cfg = tuna::parse_config(loaded.config);
    if (c.seed) cfg.seed = c.seed;
    if (!c.strategies.empty()) {
      cfg.strategies.clear();
      for (const auto& s : c.strategies) cfg.strategies.push_back(tuna::parse_strategy(s));
    }
    cfg.apply_seed();
    cfg.validate();
  } else {
    cfg = resolve(c);
  }
  tuna::BackboneConfig expected = cfg.backbone;
  expected.seq_len = cfg.synthetic.seq_len;
  expected.token_dim = cfg.synthetic.token_dim;
  if (!(loaded.state.backbone.config() == expected)) {
    throw tuna::DataError("checkpoint backbone does not match the configured dimensions");
  }
  const auto stream = tuna::build_stream(cfg);
  json doc = {{"checkpoint", checkpoint}, {"stages", json::array()}};
  const std::size_t stages = std::min(loaded.state.adapters.size(), stream.tasks.size());
  for (std::size_t b = 1; b <= stages; ++b) {
    const auto ev = tuna::evaluate_stage_all(loaded.state, stream, b, cfg.strategies);
    doc["stages"].push_back({{"stage", b}, {"accuracy", ev.accuracy}, {"selection_accuracy", ev.selection_accuracy}});
    std::printf("stage %zu:", b);
    for (const auto& [name, acc] : ev.accuracy) std::printf(" %s=%.4f", name.c_str(), acc);
    std::printf(" selection=%.4f\n", ev.selection_accuracy);
  }
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    tuna::write_text(fs::path(c.out) / "eval.json", doc.dump(2) + "\n");
  }
  return kOk;
}

int cmd_export(const Common& c) {
  const auto cfg = resolve(c);
  const auto stream = tuna::build_stream(cfg);
  const fs::path out = c.out.empty() ? fs::path("data") : fs::path(c.out);
  fs::create_directories(out);
  std::vector<tuna::Instance> train, test;
  for (const auto& t : stream.tasks) {
    train.insert(train.end(), t.train.begin(), t.train.end());
    test.insert(test.end(), t.test.begin(), t.test.end());
  }
  tuna::write_feature_dataset(out / "train.csv", train, stream.seq_len, stream.token_dim);
  tuna::write_feature_dataset(out / "test.csv", test, stream.seq_len, stream.token_dim);
  json pairs = json::array();
  for (const auto& [a, b] : stream.confusable_pairs) pairs.push_back({a, b});
  tuna::write_text(out / "pairs.json", pairs.dump() + "\n");
  std::cout << "wrote " << train.size() << " train and " << test.size() << " test rows to " << out.string() << '\n';
  return kOk;
}

int cmd_plot(const std::string& report_path, const std::string& checkpoint, const Common& c) {
  const fs::path out = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(out);
  const auto report = tuna::load_report(report_path);
  tuna::write_text(out / "accuracy.svg", tuna::accuracy_svg(report));
  std::cout << "wrote " << (out / "accuracy.svg").string() << '\n';
  if (!checkpoint.empty()) {
    auto loaded = tuna::load_checkpoint(checkpoint);
    auto cfg = tuna::parse_config(loaded.config);
    cfg.apply_seed();
    const auto stream = tuna::build_stream(cfg);
    tuna::write_text(out / "entropy.svg", tuna::entropy_svg(tuna::entropy_profile(loaded.state, stream)));
    std::cout << "wrote " << (out / "entropy.svg").string() << '\n';
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool strategies) {
  sub->add_option("-c,--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("-s,--seed", c.seed, "Seed override for data and training");
  if (strategies) sub->add_option("--strategy", c.strategies, "tuna, entropy, universal or maxlogit (repeatable)");
  sub->add_option("-o,--out", c.out, "Output path");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental learning with task-specific and universal adapters"};
  app.require_subcommand(1);

  Common pre, run, ev, exp, plot;
  std::string backbone_path, checkpoint, report_path, plot_ckpt, fuse_out;
  std::vector<std::string> fuse_inputs;

  auto* s_pre = app.add_subcommand("pretrain", "Pre-train and save a frozen backbone");
  add_common(s_pre, pre, false);
  auto* s_run = app.add_subcommand("run", "Run the full incremental protocol");
  add_common(s_run, run, true);
  s_run->add_option("--backbone", backbone_path, "Pre-trained backbone checkpoint")->check(CLI::ExistingFile);
  auto* s_fuse = app.add_subcommand("fuse", "Fuse adapter checkpoints into a universal adapter");
  s_fuse->add_option("adapters", fuse_inputs, "Adapter checkpoints")->required()->check(CLI::ExistingFile);
  s_fuse->add_option("-o,--out", fuse_out, "Universal adapter checkpoint");
  auto* s_eval = app.add_subcommand("eval", "Evaluate a saved model on every stage");
  add_common(s_eval, ev, true);
  s_eval->add_option("checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  auto* s_exp = app.add_subcommand("export-data", "Write the configured stream as delimited text");
  add_common(s_exp, exp, false);
  auto* s_plot = app.add_subcommand("plot", "Render accuracy curves as SVG");
  s_plot->add_option("report", report_path, "report.json from a run")->required()->check(CLI::ExistingFile);
  s_plot->add_option("--checkpoint", plot_ckpt, "Also draw the entropy map for this model")->check(CLI::ExistingFile);
  s_plot->add_option("-o,--out", plot.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*s_pre) return cmd_pretrain(pre);
    if (*s_run) return cmd_run(run, backbone_path);
    if (*s_fuse) return cmd_fuse(fuse_inputs, fuse_out);
    if (*s_eval) return cmd_eval(ev, checkpoint);
    if (*s_exp) return cmd_export(exp);
    if (*s_plot) return cmd_plot(report_path, plot_ckpt, plot);
  } catch (const tuna::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const tuna::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const tuna::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
