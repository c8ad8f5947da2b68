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
#include "tuna/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "tuna/errors.hpp"
#include "tuna/fusion.hpp"
#include "tuna/harness/checkpoint.hpp"

namespace tuna {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  };
  check([&] { protocol.validate(); });
  check([&] { synthetic.validate(); });
  check([&] { train.validate(); });
  check([&] {
    BackboneConfig b = backbone;
    b.seq_len = synthetic.seq_len;
    b.token_dim = synthetic.token_dim;
    b.validate();
  });
  if (train_file.empty() != test_file.empty()) problems.emplace_back("data: set both train_file and test_file, or neither");
  if (train_file.empty() && protocol.total_classes != synthetic.num_classes) {
    problems.emplace_back("synthetic.num_classes (" + std::to_string(synthetic.num_classes) +
                          ") must equal protocol.total_classes (" + std::to_string(protocol.total_classes) + ")");
  }
  if (train_file.empty() && synthetic.confusable_pairs > 0 && protocol.total_classes > 0 && protocol.increment > 0) {
    try {
      if (protocol.num_tasks() < 2) problems.emplace_back("synthetic.confusable_pairs need at least two tasks");
    } catch (...) {
    }
  }
  if (strategies.empty()) problems.emplace_back("strategies: at least one strategy is required");
  if (pretrain.checkpoint.empty()) {
    if (pretrain.aux_classes < 2) problems.emplace_back("pretrain.aux_classes must be >= 2");
    if (pretrain.per_class == 0) problems.emplace_back("pretrain.per_class must be >= 1");
    if (pretrain.train.epochs == 0) problems.emplace_back("pretrain.epochs must be >= 1");
    if (pretrain.train.batch_size == 0) problems.emplace_back("pretrain.batch_size must be >= 1");
    if (!(pretrain.train.lr0 > 0.0)) problems.emplace_back("pretrain.lr0 must be positive");
    if (!(pretrain.train.momentum >= 0.0 && pretrain.train.momentum < 1.0)) {
      problems.emplace_back("pretrain.momentum must lie in [0,1)");
    }
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << problems.size() << " configuration error(s):";
    for (const auto& p : problems) os << "\n  - " << p;
    throw ConfigError(os.str());
  }
}

void ExperimentConfig::apply_seed() {
  if (seed) {
    synthetic.seed = *seed;
    train.seed = *seed;
  }
}

namespace {

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + where + "." + key + "': " + obj.at(key).dump());
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  reject_unknown(doc, "", {"protocol", "synthetic", "backbone", "pretrain", "train", "strategies", "data", "seed"});
  if (doc.contains("protocol")) {
    const auto& p = doc.at("protocol");
    reject_unknown(p, "protocol", {"total_classes", "base", "increment", "shuffle_seed"});
    read(p, "total_classes", c.protocol.total_classes, "protocol");
    read(p, "base", c.protocol.base, "protocol");
    read(p, "increment", c.protocol.increment, "protocol");
    read(p, "shuffle_seed", c.protocol.shuffle_seed, "protocol");
  }
  if (doc.contains("synthetic")) {
    const auto& s = doc.at("synthetic");
    reject_unknown(s, "synthetic", {"num_classes", "train_per_class", "test_per_class", "token_dim", "seq_len",
                                    "noise_std", "confusable_pairs", "seed"});
    read(s, "num_classes", c.synthetic.num_classes, "synthetic");
    read(s, "train_per_class", c.synthetic.train_per_class, "synthetic");
    read(s, "test_per_class", c.synthetic.test_per_class, "synthetic");
    read(s, "token_dim", c.synthetic.token_dim, "synthetic");
    read(s, "seq_len", c.synthetic.seq_len, "synthetic");
    read(s, "noise_std", c.synthetic.noise_std, "synthetic");
    read(s, "confusable_pairs", c.synthetic.confusable_pairs, "synthetic");
    read(s, "seed", c.synthetic.seed, "synthetic");
  }
  if (doc.contains("backbone")) {
    const auto& b = doc.at("backbone");
    reject_unknown(b, "backbone", {"num_blocks", "embed_dim", "num_heads", "mlp_hidden", "readout"});
    read(b, "num_blocks", c.backbone.num_blocks, "backbone");
    read(b, "embed_dim", c.backbone.embed_dim, "backbone");
    read(b, "num_heads", c.backbone.num_heads, "backbone");
    read(b, "mlp_hidden", c.backbone.mlp_hidden, "backbone");
    std::string readout = "cls";
    read(b, "readout", readout, "backbone");
    if (readout == "cls") {
      c.backbone.readout = Readout::ClassToken;
    } else if (readout == "mean") {
      c.backbone.readout = Readout::MeanPool;
    } else {
      throw ConfigError("backbone.readout must be 'cls' or 'mean'");
    }
  }
  if (doc.contains("pretrain")) {
    const auto& p = doc.at("pretrain");
    reject_unknown(p, "pretrain", {"aux_classes", "per_class", "epochs", "batch_size", "lr0", "momentum", "seed",
                                   "checkpoint"});
    read(p, "aux_classes", c.pretrain.aux_classes, "pretrain");
    read(p, "per_class", c.pretrain.per_class, "pretrain");
    read(p, "epochs", c.pretrain.train.epochs, "pretrain");
    read(p, "batch_size", c.pretrain.train.batch_size, "pretrain");
    read(p, "lr0", c.pretrain.train.lr0, "pretrain");
    read(p, "momentum", c.pretrain.train.momentum, "pretrain");
    read(p, "seed", c.pretrain.train.seed, "pretrain");
    read(p, "checkpoint", c.pretrain.checkpoint, "pretrain");
  }
  if (doc.contains("train")) {
    const auto& t = doc.at("train");
    reject_unknown(t, "train", {"epochs", "batch_size", "lr0", "momentum", "lambda0", "lambda_decay", "orth_mode",
                                "adapter_rank", "replay_samples_per_class", "replay_epochs", "replay_lr", "seed"});
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "lr0", c.train.lr0, "train");
    read(t, "momentum", c.train.momentum, "train");
    read(t, "lambda0", c.train.lambda0, "train");
    read(t, "lambda_decay", c.train.lambda_decay, "train");
    std::string mode = to_string(c.train.orth_mode);
    read(t, "orth_mode", mode, "train");
    c.train.orth_mode = parse_orth_mode(mode);
    read(t, "adapter_rank", c.train.adapter_rank, "train");
    read(t, "replay_samples_per_class", c.train.replay_samples_per_class, "train");
    read(t, "replay_epochs", c.train.replay_epochs, "train");
    read(t, "replay_lr", c.train.replay_lr, "train");
    read(t, "seed", c.train.seed, "train");
  }
  if (doc.contains("strategies")) {
    std::vector<std::string> names;
    read(doc, "strategies", names, "");
    c.strategies.clear();
    for (const auto& n : names) c.strategies.push_back(parse_strategy(n));
  }
  if (doc.contains("data")) {
    const auto& d = doc.at("data");
    reject_unknown(d, "data", {"train_file", "test_file"});
    read(d, "train_file", c.train_file, "data");
    read(d, "test_file", c.test_file, "data");
  }
  if (doc.contains("seed")) {
    std::uint64_t s = 0;
    read(doc, "seed", s, "");
    c.seed = s;
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  std::vector<std::string> strategies;
  for (auto s : c.strategies) strategies.push_back(to_string(s));
  json doc = {
      {"protocol",
       {{"total_classes", c.protocol.total_classes},
        {"base", c.protocol.base},
        {"increment", c.protocol.increment},
        {"shuffle_seed", c.protocol.shuffle_seed}}},
      {"synthetic",
       {{"num_classes", c.synthetic.num_classes},
        {"train_per_class", c.synthetic.train_per_class},
        {"test_per_class", c.synthetic.test_per_class},
        {"token_dim", c.synthetic.token_dim},
        {"seq_len", c.synthetic.seq_len},
        {"noise_std", c.synthetic.noise_std},
        {"confusable_pairs", c.synthetic.confusable_pairs},
        {"seed", c.synthetic.seed}}},
      {"backbone",
       {{"num_blocks", c.backbone.num_blocks},
        {"embed_dim", c.backbone.embed_dim},
        {"num_heads", c.backbone.num_heads},
        {"mlp_hidden", c.backbone.mlp_hidden},
        {"readout", c.backbone.readout == Readout::ClassToken ? "cls" : "mean"}}},
      {"pretrain",
       {{"aux_classes", c.pretrain.aux_classes},
        {"per_class", c.pretrain.per_class},
        {"epochs", c.pretrain.train.epochs},
        {"batch_size", c.pretrain.train.batch_size},
        {"lr0", c.pretrain.train.lr0},
        {"momentum", c.pretrain.train.momentum},
        {"seed", c.pretrain.train.seed},
        {"checkpoint", c.pretrain.checkpoint}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr0", c.train.lr0},
        {"momentum", c.train.momentum},
        {"lambda0", c.train.lambda0},
        {"lambda_decay", c.train.lambda_decay},
        {"orth_mode", to_string(c.train.orth_mode)},
        {"adapter_rank", c.train.adapter_rank},
        {"replay_samples_per_class", c.train.replay_samples_per_class},
        {"replay_epochs", c.train.replay_epochs},
        {"replay_lr", c.train.replay_lr},
        {"seed", c.train.seed}}},
      {"strategies", strategies},
      {"data", {{"train_file", c.train_file}, {"test_file", c.test_file}}}};
  if (c.seed) doc["seed"] = *c.seed;
  return doc;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

double average_accuracy(std::span<const double> per_stage) {
  if (per_stage.empty()) return 0.0;
  double s = 0.0;
  for (double a : per_stage) s += a;
  return s / static_cast<double>(per_stage.size());
}

json to_json(const RunReport& r, bool include_timing) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"stage", s.stage},
                      {"classes_seen", s.classes_seen},
                      {"accuracy", s.accuracy},
                      {"selection_accuracy", s.selection_accuracy},
                      {"orth_gram_l1", s.orth_gram_l1},
                      {"train_loss", s.train_loss},
                      {"train_accuracy", s.train_accuracy}});
  }
  json doc = {{"strategies", r.strategies},
              {"stages", stages},
              {"average_accuracy", r.average},
              {"last_accuracy", r.last},
              {"config", r.config}};
  if (include_timing) doc["wall_clock_seconds"] = r.wall_clock_seconds;
  return doc;
}

std::string stage_table_csv(const RunReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "stage,classes_seen";
  for (const auto& s : r.strategies) os << ',' << s;
  os << ",selection_accuracy\n";
  for (const auto& st : r.stages) {
    os << st.stage << ',' << st.classes_seen;
    for (const auto& s : r.strategies) os << ',' << st.accuracy.at(s);
    os << ',' << st.selection_accuracy << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

/// The model as it stood after `stage` tasks.
struct StageView {
  std::vector<AdapterSet> adapters;
  std::optional<AdapterSet> universal;
  Classifier head;
  std::vector<int> task_ids;
  std::vector<Instance> test;
  std::vector<std::size_t> true_task;  // index into adapters
};

StageView make_view(const ModelState& model, const IncrementalStream& stream, std::size_t stage) {
  if (stage == 0 || stage > model.adapters.size() || stage > stream.tasks.size()) {
    throw std::out_of_range("evaluate_stage: stage " + std::to_string(stage) + " but " +
                            std::to_string(model.adapters.size()) + " trained task(s)");
  }
  StageView v;
  v.adapters.assign(model.adapters.begin(), model.adapters.begin() + static_cast<std::ptrdiff_t>(stage));
  for (const auto& a : v.adapters) v.task_ids.push_back(a.task_id);
  if (stage == model.adapters.size() && model.universal) {
    v.universal = model.universal;
  } else if (model.universal || stage < model.adapters.size()) {
    v.universal = fuse(v.adapters);
  }

  const int last_task = v.task_ids.back();
  const auto& full = model.classifier;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < full.num_classes(); ++j) {
    if (full.class_tasks[j] <= last_task) cols.push_back(j);
  }
  const std::size_t d = full.embed_dim(), k = full.num_classes();
  std::vector<double> w(d * cols.size());
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t c = 0; c < cols.size(); ++c) w[i * cols.size() + c] = full.weight.data()[i * k + cols[c]];
  v.head = Classifier(d);
  v.head.weight = Tensor::from({d, cols.size()}, std::move(w));
  for (auto c : cols) {
    v.head.class_ids.push_back(full.class_ids[c]);
    v.head.class_tasks.push_back(full.class_tasks[c]);
  }

  for (std::size_t b = 0; b < stage; ++b) {
    for (const auto& inst : stream.tasks[b].test) {
      v.test.push_back(inst);
      v.true_task.push_back(b);
    }
  }
  return v;
}

struct StageLogits {
  std::vector<std::vector<std::vector<double>>> per_adapter;  // [adapter][instance][class]
  std::vector<std::vector<double>> universal;                 // [instance][class]
};

StageLogits compute_logits(const Backbone& backbone, const StageView& v) {
  StageLogits out;
  for (const auto& a : v.adapters) {
    auto feats = backbone.embed_all(v.test, &a);
    std::vector<std::vector<double>> z;
    z.reserve(feats.size());
    for (const auto& f : feats) z.push_back(logits(f, v.head));
    out.per_adapter.push_back(std::move(z));
  }
  if (v.universal) {
    for (const auto& f : backbone.embed_all(v.test, &*v.universal)) out.universal.push_back(logits(f, v.head));
  }
  return out;
}

Prediction decide_for(Strategy s, const StageView& v, const StageLogits& z, std::size_t i) {
  std::vector<std::vector<double>> rows;
  rows.reserve(z.per_adapter.size());
  for (const auto& a : z.per_adapter) rows.push_back(a[i]);
  return decide(s, rows, v.universal ? &z.universal[i] : nullptr, v.head, v.task_ids);
}

}  // namespace

StageEvaluation evaluate_stage_all(const ModelState& model, const IncrementalStream& stream, std::size_t stage,
                                   std::span<const Strategy> strategies) {
  const StageView v = make_view(model, stream, stage);
  for (auto s : strategies) {
    if (needs_universal(s) && !v.universal) {
      throw std::invalid_argument("evaluate_stage: strategy '" + to_string(s) + "' needs the universal adapter");
    }
  }
  const StageLogits z = compute_logits(model.backbone, v);
  StageEvaluation ev;
  const std::size_t n = v.test.size();
  if (n == 0) throw DataError("evaluate_stage: empty test union");
  std::vector<std::size_t> correct(strategies.size(), 0);
  std::size_t routed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::vector<double>> probs;
    for (const auto& a : z.per_adapter) probs.push_back(softmax_probs(a[i]));
    if (select_by_entropy(probs).index == v.true_task[i]) ++routed;
    for (std::size_t si = 0; si < strategies.size(); ++si) {
      if (decide_for(strategies[si], v, z, i).class_id == v.test[i].label) ++correct[si];
    }
  }
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    ev.accuracy[to_string(strategies[si])] = static_cast<double>(correct[si]) / static_cast<double>(n);
  }
  ev.selection_accuracy = static_cast<double>(routed) / static_cast<double>(n);
  return ev;
}

double evaluate_stage(const ModelState& model, const IncrementalStream& stream, std::size_t stage,
                      Strategy strategy) {
  const Strategy one[] = {strategy};
  return evaluate_stage_all(model, stream, stage, one).accuracy.at(to_string(strategy));
}

double cross_task_gram_l1(std::span<const AdapterSet> adapters) {
  double total = 0.0;
  for (std::size_t j = 1; j < adapters.size(); ++j) {
    total += orth_loss(adapters[j], adapters.subspan(0, j), OrthMode::Up).item();
  }
  return total;
}

EntropyProfile entropy_profile(const ModelState& model, const IncrementalStream& stream) {
  const std::size_t stages = model.adapters.size();
  const StageView v = make_view(model, stream, stages);
  const StageLogits z = compute_logits(model.backbone, v);
  EntropyProfile p;
  p.mean_entropy.assign(stages, std::vector<double>(stages, 0.0));
  std::vector<std::size_t> counts(stages, 0);
  for (std::size_t i = 0; i < v.test.size(); ++i) {
    const std::size_t b = v.true_task[i];
    ++counts[b];
    for (std::size_t a = 0; a < stages; ++a) {
      const auto probs = softmax_probs(z.per_adapter[a][i]);
      const double h = entropy(probs);
      p.mean_entropy[b][a] += h;
      p.entropies.push_back(h);
      p.correct.push_back(v.head.class_ids[argmax(probs)] == v.test[i].label ? 1 : 0);
    }
  }
  for (std::size_t b = 0; b < stages; ++b)
    for (std::size_t a = 0; a < stages; ++a)
      if (counts[b] > 0) p.mean_entropy[b][a] /= static_cast<double>(counts[b]);
  return p;
}

ConfusionSummary confusion_summary(const ModelState& model, const IncrementalStream& stream, Strategy strategy) {
  const StageView v = make_view(model, stream, model.adapters.size());
  const StageLogits z = compute_logits(model.backbone, v);
  std::map<int, int> partner;
  for (const auto& [a, b] : stream.confusable_pairs) {
    partner[a] = b;
    partner[b] = a;
  }
  std::size_t pair_n = 0, pair_err = 0, pair_swap = 0, other_n = 0, other_err = 0;
  for (std::size_t i = 0; i < v.test.size(); ++i) {
    const int label = v.test[i].label;
    const int pred = decide_for(strategy, v, z, i).class_id;
    auto it = partner.find(label);
    if (it != partner.end()) {
      ++pair_n;
      if (pred != label) ++pair_err;
      if (pred == it->second) ++pair_swap;
    } else {
      ++other_n;
      if (pred != label) ++other_err;
    }
  }
  ConfusionSummary s;
  if (pair_n) {
    s.pair_error = static_cast<double>(pair_err) / static_cast<double>(pair_n);
    s.pair_swap_rate = static_cast<double>(pair_swap) / static_cast<double>(pair_n);
  }
  if (other_n) s.nonpair_error = static_cast<double>(other_err) / static_cast<double>(other_n);
  return s;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

IncrementalStream build_stream(const ExperimentConfig& config) {
  if (!config.train_file.empty()) {
    const auto train = load_feature_dataset(config.train_file);
    const auto test = load_feature_dataset(config.test_file);
    return stream_from_datasets(train, test, config.protocol);
  }
  return make_synthetic_stream(config.synthetic, config.protocol);
}

Backbone prepare_backbone(const ExperimentConfig& config, const ProgressFn& progress) {
  BackboneConfig bc = config.backbone;
  bc.seq_len = config.synthetic.seq_len;
  bc.token_dim = config.synthetic.token_dim;
  if (!config.pretrain.checkpoint.empty()) {
    Backbone b = load_backbone(config.pretrain.checkpoint);
    if (!(b.config() == bc)) {
      throw DataError("backbone checkpoint " + config.pretrain.checkpoint + " has dimensions " +
                      to_json(b.config()).dump() + ", config wants " + to_json(bc).dump());
    }
    return b;
  }
  Rng rng(config.pretrain.train.seed);
  Backbone b = Backbone::init(bc, rng);
  SyntheticConfig aux = config.synthetic;
  aux.train_per_class = config.pretrain.per_class;
  const auto data = make_auxiliary_data(aux, config.pretrain.aux_classes, config.pretrain.train.seed);
  std::vector<int> classes(config.pretrain.aux_classes);
  for (std::size_t k = 0; k < classes.size(); ++k) classes[k] = static_cast<int>(k);
  const double acc = pretrain_backbone(b, data, classes, config.pretrain.train);
  if (progress) progress("pretrain: auxiliary train accuracy " + std::to_string(acc));
  return b;
}

ExperimentResult run_experiment(const ExperimentConfig& config_in, const Backbone* backbone,
                                const ProgressFn& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig config = config_in;
  config.apply_seed();
  config.validate();

  ExperimentResult result;
  result.stream = build_stream(config);
  const auto& stream = result.stream;
  if (stream.seq_len != config.synthetic.seq_len || stream.token_dim != config.synthetic.token_dim) {
    throw DataError("dataset token layout " + std::to_string(stream.seq_len) + "x" + std::to_string(stream.token_dim) +
                    " does not match synthetic.seq_len x synthetic.token_dim");
  }

  ModelState& model = result.model;
  model.backbone = backbone != nullptr ? *backbone : prepare_backbone(config, progress);
  model.classifier = Classifier(model.backbone.config().embed_dim);
  std::vector<std::vector<double>> frozen_snapshot;
  for (const auto& t : model.backbone.parameters()) frozen_snapshot.push_back(t.values());

  RunReport& report = result.report;
  for (auto s : config.strategies) report.strategies.push_back(to_string(s));
  report.config = to_json(config);

  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const int task_id = static_cast<int>(t + 1);
    TaskOutcome out = train_task(model.backbone, stream.tasks[t], task_id, model.adapters, model.classifier,
                                 model.stats, config.train);
    model.adapters.push_back(std::move(out.adapters));
    model.universal = fuse(model.adapters);

    StageReport st;
    st.stage = t + 1;
    st.classes_seen = model.classifier.num_classes();
    st.train_loss = out.final_epoch_loss;
    st.train_accuracy = out.train_accuracy;
    st.orth_gram_l1 = cross_task_gram_l1(model.adapters);
    auto ev = evaluate_stage_all(model, stream, t + 1, config.strategies);
    st.accuracy = std::move(ev.accuracy);
    st.selection_accuracy = ev.selection_accuracy;
    if (progress) {
      std::ostringstream os;
      os << "stage " << st.stage << ": classes " << st.classes_seen;
      for (const auto& [name, acc] : st.accuracy) os << ' ' << name << '=' << acc;
      os << " selection=" << st.selection_accuracy;
      progress(os.str());
    }
    report.stages.push_back(std::move(st));
  }

  const auto params = model.backbone.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (std::memcmp(params[i].data().data(), frozen_snapshot[i].data(), frozen_snapshot[i].size() * sizeof(double)) != 0) {
      throw std::logic_error("run_experiment: frozen backbone changed during incremental training");
    }
  }

  for (const auto& name : report.strategies) {
    std::vector<double> series;
    for (const auto& st : report.stages) series.push_back(st.accuracy.at(name));
    report.average[name] = average_accuracy(series);
    report.last[name] = series.empty() ? 0.0 : series.back();
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "adapters");
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw DataError("cannot write " + (dir / "report.json").string());
    out << to_json(result.report).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "stages.csv");
    if (!out) throw DataError("cannot write " + (dir / "stages.csv").string());
    out << stage_table_csv(result.report);
  }
  save_checkpoint(result.model, dir / "model.ckpt", result.report.config);
  for (const auto& a : result.model.adapters) {
    save_adapter(a, dir / "adapters" / ("task_" + std::to_string(a.task_id) + ".ckpt"));
  }
  if (result.model.universal) save_adapter(*result.model.universal, dir / "adapters" / "universal.ckpt");
}

}  // namespace tuna
