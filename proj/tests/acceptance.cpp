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
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances and limits are fixed below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fusion_oracle.hpp"
#include "gradcheck.hpp"
#include "tuna/fusion.hpp"
#include "tuna/harness/checkpoint.hpp"
#include "tuna/harness/experiment.hpp"
#include "tuna/harness/protocol.hpp"

namespace {

using namespace tuna;
using Clock = std::chrono::steady_clock;

constexpr std::size_t kOracleLists = 1000;
constexpr double kOracleSeconds = 10.0;
constexpr std::size_t kPermutations = 100;
constexpr double kFdStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kAblationGap = 0.02;
constexpr std::size_t kAblationSeedsNeeded = 4;
constexpr double kAblationSeconds = 600.0;
constexpr double kOrthLambda = 1e-3;
constexpr double kEntropySlack = 1e-12;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ------------------------------------------------------------------ fusion

void fusion_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::size_t mismatches = 0, lists = 0, zeros = 0, conflicts = 0;
  for (; lists < kOracleLists; ++lists) {
    const std::size_t t = 1 + rng.below(8);
    const std::size_t n = 1 + rng.below(512);
    const auto vs = testing::random_dyadic_lists(rng, t, n);
    std::vector<TaskVector> tv(t);
    for (std::size_t i = 0; i < t; ++i) tv[i].values = vs[i];
    const auto got = fuse_vectors(tv).universal.values;
    const auto want = testing::brute_force_fuse(vs);
    for (std::size_t j = 0; j < n; ++j) {
      if (std::memcmp(&got[j], &want[j], sizeof(double)) != 0 && !(got[j] == 0.0 && want[j] == 0.0)) ++mismatches;
      bool pos = false, neg = false;
      for (const auto& v : vs) {
        zeros += v[j] == 0.0;
        pos = pos || v[j] > 0.0;
        neg = neg || v[j] < 0.0;
      }
      conflicts += pos && neg;
    }
  }
  const double secs = seconds_since(t0);
  report(mismatches == 0 && secs < kOracleSeconds && zeros > 0 && conflicts > 0, "fusion-oracle-equivalence",
         std::to_string(lists) + " lists, " + std::to_string(mismatches) + " mismatching entries, " +
             std::to_string(zeros) + " zero inputs, " + std::to_string(conflicts) + " sign conflicts, " +
             fmt("%.2f s", secs) + fmt(" (limit %.0f s)", kOracleSeconds));
}

AdapterSet random_adapter(Rng& rng, int task_id) {
  auto a = AdapterSet::init(2, 12, 4, task_id, rng, 0.5);
  for (auto& u : a.up)
    for (auto& x : u.mutable_data()) x = rng.normal(0.0, 0.5);
  return a;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void fusion_identities() {
  Rng rng(77);
  bool single_ok = true, consensus_ok = true, perm_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_adapter(rng, 1);
    const auto ref = flatten_adapter(a).values;
    const AdapterSet one[] = {a};
    single_ok = single_ok && bitwise_equal(flatten_adapter(fuse(one)).values, ref);
    const std::vector<AdapterSet> copies(2 + rng.below(6), a);
    consensus_ok = consensus_ok && bitwise_equal(flatten_adapter(fuse(copies)).values, ref);
  }
  std::vector<AdapterSet> sets;
  for (int i = 0; i < 6; ++i) sets.push_back(random_adapter(rng, i + 1));
  const auto base = flatten_adapter(fuse(sets)).values;
  std::size_t perms = 0;
  for (; perms < kPermutations; ++perms) {
    std::vector<AdapterSet> shuffled = sets;
    rng.shuffle(std::span<AdapterSet>(shuffled));
    perm_ok = perm_ok && bitwise_equal(flatten_adapter(fuse(shuffled)).values, base);
  }
  report(single_ok && consensus_ok && perm_ok, "fusion-identities",
         std::string("single ") + (single_ok ? "bitwise" : "DIFFERS") + ", consensus " +
             (consensus_ok ? "bitwise" : "DIFFERS") + ", " + std::to_string(perms) + " permutations " +
             (perm_ok ? "invariant" : "NOT invariant"));
}

// ------------------------------------------------------------------ gradients

std::vector<Tensor> adapter_inputs(const AdapterSet& a) {
  std::vector<Tensor> in;
  for (const auto& t : a.down) in.push_back(t.clone());
  for (const auto& t : a.up) in.push_back(t.clone());
  return in;
}

AdapterSet rebuild(const std::vector<Tensor>& in, std::size_t blocks, std::size_t rank) {
  AdapterSet a;
  a.rank = rank;
  for (std::size_t l = 0; l < blocks; ++l) {
    a.down.push_back(in[l]);
    a.up.push_back(in[blocks + l]);
  }
  return a;
}

void gradient_suite() {
  const auto t0 = Clock::now();
  BackboneConfig c;
  c.num_blocks = 2;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.mlp_hidden = 12;
  c.seq_len = 4;
  c.token_dim = 6;
  const std::size_t rank = 3;
  Rng rng(31);
  const auto backbone = Backbone::init(c, rng);
  std::vector<Instance> items(6);
  std::vector<int> targets;
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].tokens.resize(c.seq_len * c.token_dim);
    for (auto& x : items[i].tokens) x = rng.normal();
    items[i].label = static_cast<int>(i % 4);
    targets.push_back(items[i].label);
  }
  std::vector<const Instance*> batch;
  for (const auto& it : items) batch.push_back(&it);
  std::vector<AdapterSet> previous;
  for (int i = 0; i < 2; ++i) {
    auto p = AdapterSet::init(c.num_blocks, c.embed_dim, rank, i + 1, rng, 0.4);
    for (auto& u : p.up)
      for (auto& x : u.mutable_data()) x = rng.normal(0.0, 0.4);
    previous.push_back(p);
  }
  auto current = AdapterSet::init(c.num_blocks, c.embed_dim, rank, 3, rng, 0.4);
  for (auto& u : current.up)
    for (auto& x : u.mutable_data()) x = rng.normal(0.0, 0.4);
  const auto weight = testing::random_tensor({c.embed_dim, 4}, rng);

  std::vector<std::string> parts;
  double worst = 0.0;
  auto record = [&](const std::string& name, const testing::GradReport& r) {
    worst = std::max(worst, r.worst_rel);
    parts.push_back(name + fmt(" %.1e", r.worst_rel));
  };
  {
    auto in = adapter_inputs(current);
    in.push_back(weight.clone());
    record("cls", testing::check_gradients(
                      [&](const std::vector<Tensor>& x) {
                        return cls_loss(backbone, batch, rebuild(x, c.num_blocks, rank), x.back(), targets);
                      },
                      in, kFdStep));
  }
  for (auto mode : {OrthMode::Up, OrthMode::Down, OrthMode::Both}) {
    record("orth-" + to_string(mode),
           testing::check_gradients(
               [&](const std::vector<Tensor>& x) { return orth_loss(rebuild(x, c.num_blocks, rank), previous, mode); },
               adapter_inputs(current), kFdStep));
  }
  for (auto mode : {OrthMode::Up, OrthMode::Down, OrthMode::Both}) {
    auto in = adapter_inputs(current);
    in.push_back(weight.clone());
    record("total-" + to_string(mode),
           testing::check_gradients(
               [&](const std::vector<Tensor>& x) {
                 return total_loss(backbone, batch, rebuild(x, c.num_blocks, rank), x.back(), targets, previous, mode,
                                   0.05);
               },
               in, kFdStep));
  }
  const double secs = seconds_since(t0);
  std::string detail = "worst relative error" + fmt(" %.2e", worst) + fmt(" (limit %.0e); ", kGradRelTol);
  for (const auto& p : parts) detail += p + ", ";
  detail += fmt("%.2f s", secs) + fmt(" (limit %.0f s)", kGradSeconds);
  report(worst <= kGradRelTol && secs < kGradSeconds, "gradient-suite", detail);
}

// ------------------------------------------------------------------ desk-scale runs

struct Runs {
  Backbone backbone;
  double pretrain_seconds = 0.0;
};

ExperimentResult run(const ExperimentConfig& base, const Backbone& backbone, std::uint64_t seed, double* secs,
                     std::function<void(ExperimentConfig&)> tweak = {}) {
  ExperimentConfig c = base;
  c.seed = seed;
  c.apply_seed();
  if (tweak) tweak(c);
  const auto t0 = Clock::now();
  auto r = run_experiment(c, &backbone);
  if (secs) *secs += seconds_since(t0);
  return r;
}

double final_acc(const ExperimentResult& r, Strategy s) { return r.report.last.at(to_string(s)); }

struct Ordering {
  bool ordered = false;
  double gap = 0.0;
  std::string text;
};

Ordering ordering(const ExperimentResult& r) {
  const double tuna = final_acc(r, Strategy::TunaEnsemble);
  const double ent = final_acc(r, Strategy::EntropyOnly);
  const double uni = final_acc(r, Strategy::UniversalOnly);
  const double mx = final_acc(r, Strategy::MaxLogitBaseline);
  Ordering o;
  o.gap = tuna - mx;
  o.ordered = tuna >= ent && tuna >= uni && tuna >= mx && o.gap >= kAblationGap;
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << "tuna " << tuna << " ent " << ent << " uni " << uni << " max " << mx;
  o.text = os.str();
  return o;
}

void entropy_pilot(const ExperimentResult& r) {
  const auto p = entropy_profile(r.model, r.stream);
  std::size_t diag_ok = 0;
  double margin = 1e300;
  for (std::size_t b = 0; b < p.mean_entropy.size(); ++b) {
    bool lowest = true;
    for (std::size_t i = 0; i < p.mean_entropy[b].size(); ++i) {
      if (i == b) continue;
      margin = std::min(margin, p.mean_entropy[b][i] - p.mean_entropy[b][b]);
      lowest = lowest && p.mean_entropy[b][b] < p.mean_entropy[b][i];
    }
    diag_ok += lowest;
  }
  std::vector<std::size_t> order(p.entropies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p.entropies[a] < p.entropies[b]; });
  double acc[4];
  for (std::size_t q = 0; q < 4; ++q) {
    const std::size_t lo = q * order.size() / 4, hi = (q + 1) * order.size() / 4;
    std::size_t right = 0;
    for (std::size_t k = lo; k < hi; ++k) right += p.correct[order[k]] != 0;
    acc[q] = static_cast<double>(right) / static_cast<double>(hi - lo);
  }
  const bool mono = acc[0] > acc[1] && acc[1] > acc[2] && acc[2] > acc[3];
  const std::size_t tasks = p.mean_entropy.size();
  report(diag_ok == tasks && mono, "entropy-pilot",
         "own adapter lowest mean entropy on " + std::to_string(diag_ok) + "/" + std::to_string(tasks) +
             " tasks (min margin" + fmt(" %.4f", margin) + "); quartile accuracy" + fmt(" %.3f", acc[0]) +
             fmt(" > %.3f", acc[1]) + fmt(" > %.3f", acc[2]) + fmt(" > %.3f", acc[3]) + (mono ? "" : " violated"));
}

void ablation(const ExperimentResult& default_run, const std::vector<ExperimentResult>& seeded, double secs) {
  const auto d = ordering(default_run);
  std::size_t held = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < seeded.size(); ++i) {
    const auto o = ordering(seeded[i]);
    held += o.ordered;
    per_seed += " seed " + std::to_string(i + 1) + (o.ordered ? " ok" : " no") + fmt(" (gap %+.4f)", o.gap) + ";";
  }
  report(d.ordered && held >= kAblationSeedsNeeded && secs < kAblationSeconds, "ablation-ordering",
         "default seed " + d.text + fmt(" gap %+.4f", d.gap) + fmt(" (need >= %.2f);", kAblationGap) + per_seed +
             " held on " + std::to_string(held) + "/" + std::to_string(seeded.size()) + " (need " +
             std::to_string(kAblationSeedsNeeded) + "); " + fmt("%.0f s", secs) + fmt(" (limit %.0f s)", kAblationSeconds));
}

void orthogonality(const std::vector<ExperimentResult>& with_loss, const std::vector<ExperimentResult>& without_loss,
                   const ExperimentResult& up, const ExperimentResult& both) {
  std::size_t smaller = 0;
  std::string detail;
  for (std::size_t i = 0; i < with_loss.size(); ++i) {
    const double a = cross_task_gram_l1(with_loss[i].model.adapters);
    const double b = cross_task_gram_l1(without_loss[i].model.adapters);
    smaller += a < b;
    detail += "seed " + std::to_string(i + 1) + fmt(" %.4g", a) + fmt(" vs %.4g; ", b);
  }
  const double acc_up = final_acc(up, Strategy::TunaEnsemble);
  const double acc_both = final_acc(both, Strategy::TunaEnsemble);
  report(smaller == with_loss.size() && acc_up >= acc_both, "orthogonality-effect",
         "up-projection Gram L1 with/without loss: " + detail + "smaller on " + std::to_string(smaller) + "/" +
             std::to_string(with_loss.size()) + "; final accuracy UP" + fmt(" %.4f", acc_up) +
             fmt(" vs BOTH %.4f", acc_both));
}

void protocol_arithmetic() {
  struct Case {
    std::size_t total, base, inc, tasks;
  };
  const Case cases[] = {{100, 0, 5, 20}, {200, 0, 20, 10}, {200, 100, 20, 6}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    ProtocolSpec s;
    s.total_classes = c.total;
    s.base = c.base;
    s.increment = c.inc;
    const auto parts = split_classes(s);
    std::vector<int> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    bool bijective = all.size() == c.total;
    for (std::size_t k = 0; bijective && k < all.size(); ++k) bijective = all[k] == static_cast<int>(k);
    ok = ok && parts.size() == c.tasks && bijective;
    detail += std::to_string(c.total) + " B" + std::to_string(c.base) + " Inc" + std::to_string(c.inc) + " -> " +
              std::to_string(parts.size()) + " tasks (want " + std::to_string(c.tasks) + ")" +
              (bijective ? "" : " NOT a partition") + "; ";
  }
  report(ok, "protocol-arithmetic", detail.substr(0, detail.size() - 2));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism(const ExperimentResult& first, const ExperimentResult& second) {
  const bool reports_equal = to_json(first.report, false).dump(2) == to_json(second.report, false).dump(2) &&
                             stage_table_csv(first.report) == stage_table_csv(second.report);
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tuna_acceptance_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_checkpoint(first.model, dir / "a.ckpt", first.report.config);
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded.state, dir / "b.ckpt", loaded.config);
  const bool blob_equal = slurp(dir / "a.ckpt.bin") == slurp(dir / "b.ckpt.bin");
  auto ma = nlohmann::json::parse(slurp(dir / "a.ckpt"));
  auto mb = nlohmann::json::parse(slurp(dir / "b.ckpt"));
  ma.erase("blob");
  mb.erase("blob");
  const bool manifest_equal = ma == mb;
  const bool refused = first.model.universal &&
                       bitwise_equal(flatten_adapter(fuse(loaded.state.adapters)).values,
                                     flatten_adapter(*first.model.universal).values);
  fs::remove_all(dir);
  report(reports_equal && blob_equal && manifest_equal && refused, "determinism-and-persistence",
         std::string("rerun report ") + (reports_equal ? "byte-identical" : "DIFFERS") + ", checkpoint blob " +
             (blob_equal ? "bitwise" : "DIFFERS") + ", manifest " + (manifest_equal ? "identical" : "DIFFERS") +
             ", re-fused universal adapter " + (refused ? "matches" : "DIFFERS"));
}

void metric_identities(const std::vector<const ExperimentResult*>& results) {
  bool mean_ok = true, range_ok = true, entropy_ok = true;
  std::size_t checked = 0;
  for (const auto* r : results) {
    for (const auto& name : r->report.strategies) {
      std::vector<double> series;
      for (const auto& st : r->report.stages) {
        const double a = st.accuracy.at(name);
        range_ok = range_ok && a >= 0.0 && a <= 1.0;
        series.push_back(a);
      }
      double sum = 0.0;
      for (double a : series) sum += a;
      mean_ok = mean_ok && r->report.average.at(name) == sum / static_cast<double>(series.size()) &&
                r->report.last.at(name) == series.back();
      const double a = r->report.average.at(name);
      range_ok = range_ok && a >= 0.0 && a <= 1.0;
      ++checked;
    }
    for (const auto& st : r->report.stages) range_ok = range_ok && st.selection_accuracy >= 0.0 && st.selection_accuracy <= 1.0;
  }
  const auto& r = *results.front();
  const auto p = entropy_profile(r.model, r.stream);
  const double bound = std::log(static_cast<double>(r.model.classifier.num_classes()));
  for (double h : p.entropies) entropy_ok = entropy_ok && h >= 0.0 && h <= bound + kEntropySlack;
  report(mean_ok && range_ok && entropy_ok, "metric-identities",
         std::to_string(checked) + " strategy series: mean " + (mean_ok ? "exact" : "MISMATCH") + ", accuracies " +
             (range_ok ? "within [0,1]" : "OUT OF RANGE") + ", " + std::to_string(p.entropies.size()) +
             " entropies " + (entropy_ok ? "within [0, ln K]" : "OUT OF RANGE"));
}

}  // namespace

int main() {
  try {
    fusion_oracle();
    fusion_identities();
    gradient_suite();

    const ExperimentConfig defaults;
    const auto t_pre = Clock::now();
    const Backbone backbone = prepare_backbone(defaults);
    double ablation_secs = seconds_since(t_pre);

    auto default_run = run_experiment(defaults, &backbone);
    std::vector<ExperimentResult> seeded;
    for (std::uint64_t s = 1; s <= 5; ++s) seeded.push_back(run(defaults, backbone, s, &ablation_secs));
    entropy_pilot(default_run);
    ablation(default_run, seeded, ablation_secs);

    // The seeded runs above already use the default lambda0.
    if (defaults.train.lambda0 != kOrthLambda) throw std::logic_error("default lambda0 changed");
    const std::vector<ExperimentResult> with_orth(seeded.begin(), seeded.begin() + 3);
    std::vector<ExperimentResult> no_orth;
    for (std::uint64_t s = 1; s <= 3; ++s) {
      no_orth.push_back(run(defaults, backbone, s, nullptr, [](ExperimentConfig& c) { c.train.lambda0 = 0.0; }));
    }
    ExperimentConfig both_cfg = defaults;
    both_cfg.train.orth_mode = OrthMode::Both;
    const auto both = run_experiment(both_cfg, &backbone);
    orthogonality(with_orth, no_orth, default_run, both);

    protocol_arithmetic();

    const auto rerun = run_experiment(defaults, &backbone);
    determinism(default_run, rerun);

    std::vector<const ExperimentResult*> all{&default_run, &rerun, &both};
    for (const auto& r : seeded) all.push_back(&r);
    for (const auto& r : no_orth) all.push_back(&r);
    metric_identities(all);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance-harness: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
