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
#include "tuna/harness/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "tuna/errors.hpp"
#include "tuna/random.hpp"

namespace tuna {

void SyntheticConfig::validate() const {
  if (num_classes == 0) throw ConfigError("synthetic.num_classes must be >= 1");
  if (train_per_class == 0) throw ConfigError("synthetic.train_per_class must be >= 1");
  if (token_dim == 0 || seq_len == 0) throw ConfigError("synthetic.token_dim and seq_len must be >= 1");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("synthetic.noise_std must be >= 0");
  if (confusable_pairs > num_classes / 2) throw ConfigError("synthetic.confusable_pairs exceeds num_classes/2");
}

namespace {

std::vector<double> unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

Instance draw_instance(const std::vector<double>& prototype, int label, std::size_t seq_len, double noise,
                       Rng& rng) {
  Instance inst;
  inst.label = label;
  inst.tokens.resize(seq_len * prototype.size());
  for (std::size_t s = 0; s < seq_len; ++s) {
    for (std::size_t j = 0; j < prototype.size(); ++j) {
      inst.tokens[s * prototype.size() + j] = prototype[j] + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
    }
  }
  return inst;
}

}  // namespace

IncrementalStream make_synthetic_stream(const SyntheticConfig& config, const ProtocolSpec& spec) {
  config.validate();
  spec.validate();
  if (spec.total_classes != config.num_classes) {
    throw ConfigError("synthetic.num_classes (" + std::to_string(config.num_classes) +
                      ") must equal protocol.total_classes (" + std::to_string(spec.total_classes) + ")");
  }
  const auto partition = split_classes(spec);
  if (config.confusable_pairs > 0 && partition.size() < 2) {
    throw ConfigError("synthetic: confusable pairs need at least two tasks");
  }

  Rng root(config.seed);
  Rng proto_rng = root.fork(1);
  Rng pair_rng = root.fork(2);
  Rng noise_rng = root.fork(3);

  std::vector<std::vector<double>> prototypes(config.num_classes);
  for (auto& p : prototypes) p = unit_vector(config.token_dim, proto_rng);

  IncrementalStream stream;
  stream.seq_len = config.seq_len;
  stream.token_dim = config.token_dim;

  // Pair p links a class of task p mod T with a class of task (p+1) mod T.
  std::vector<std::vector<int>> available = partition;
  const std::size_t num_tasks = partition.size();
  for (std::size_t p = 0; p < config.confusable_pairs; ++p) {
    std::size_t ta = p % num_tasks, tb = (p + 1) % num_tasks;
    if (available[ta].empty() || available[tb].empty()) {
      throw ConfigError("synthetic: not enough classes to form " + std::to_string(config.confusable_pairs) +
                        " cross-task pairs");
    }
    auto take = [&](std::size_t task) {
      auto& pool = available[task];
      const auto idx = static_cast<std::size_t>(pair_rng.below(pool.size()));
      const int cls = pool[idx];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
      return cls;
    };
    if (ta > tb) std::swap(ta, tb);
    const int a = take(ta);
    const int b = take(tb);
    auto& pb = prototypes[static_cast<std::size_t>(b)];
    pb = prototypes[static_cast<std::size_t>(a)];
    for (auto& x : pb) x += pair_rng.normal(0.0, 0.3 * config.noise_std);
    stream.confusable_pairs.emplace_back(a, b);
  }

  for (const auto& classes : partition) {
    TaskData task;
    task.classes = classes;
    for (int cls : classes) {
      const auto& proto = prototypes[static_cast<std::size_t>(cls)];
      for (std::size_t i = 0; i < config.train_per_class; ++i) {
        task.train.push_back(draw_instance(proto, cls, config.seq_len, config.noise_std, noise_rng));
      }
      for (std::size_t i = 0; i < config.test_per_class; ++i) {
        task.test.push_back(draw_instance(proto, cls, config.seq_len, config.noise_std, noise_rng));
      }
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

std::vector<Instance> make_auxiliary_data(const SyntheticConfig& config, std::size_t num_classes,
                                          std::uint64_t seed) {
  config.validate();
  Rng root(seed ^ 0xA0C5A11ULL);
  Rng proto_rng = root.fork(11);
  Rng noise_rng = root.fork(13);
  std::vector<Instance> out;
  out.reserve(num_classes * config.train_per_class);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const auto proto = unit_vector(config.token_dim, proto_rng);
    for (std::size_t i = 0; i < config.train_per_class; ++i) {
      out.push_back(draw_instance(proto, static_cast<int>(k), config.seq_len, config.noise_std, noise_rng));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Delimited text
// ---------------------------------------------------------------------------

void write_feature_dataset(const std::filesystem::path& path, std::span<const Instance> items,
                           std::size_t seq_len, std::size_t token_dim) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "label";
  for (std::size_t s = 0; s < seq_len; ++s)
    for (std::size_t j = 0; j < token_dim; ++j) out << ",x" << s << '_' << j;
  out << '\n';
  char buf[40];
  for (const auto& it : items) {
    if (it.tokens.size() != seq_len * token_dim) throw DataError("write_feature_dataset: instance has wrong size");
    out << it.label;
    for (double v : it.tokens) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

FeatureDataset load_feature_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  const auto header = split_fields(trim(line));
  if (header.size() < 2 || trim(header[0]) != "label") {
    throw DataError(path.string() + ": header must start with 'label' followed by token columns");
  }
  // Last column is x{S-1}_{D-1}.
  FeatureDataset ds;
  {
    const std::string last = trim(header.back());
    unsigned long s = 0, d = 0;
    if (std::sscanf(last.c_str(), "x%lu_%lu", &s, &d) != 2) {
      throw DataError(path.string() + ": cannot read token layout from header column '" + last + "'");
    }
    ds.seq_len = s + 1;
    ds.token_dim = d + 1;
    if (ds.seq_len * ds.token_dim != header.size() - 1) {
      throw DataError(path.string() + ": header has " + std::to_string(header.size() - 1) +
                      " value columns, layout implies " + std::to_string(ds.seq_len * ds.token_dim));
    }
  }
  const std::size_t width = header.size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != width) {
      throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(width));
    }
    Instance inst;
    {
      const std::string f = trim(fields[0]);
      char* end = nullptr;
      errno = 0;
      const long v = std::strtol(f.c_str(), &end, 10);
      if (f.empty() || *end != '\0' || errno != 0) {
        throw DataError(path.string() + ": row " + std::to_string(line_no) + " has malformed label '" + f + "'");
      }
      inst.label = static_cast<int>(v);
    }
    inst.tokens.reserve(width - 1);
    for (std::size_t i = 1; i < width; ++i) {
      const std::string f = trim(fields[i]);
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0' || !std::isfinite(v)) {
        throw DataError(path.string() + ": row " + std::to_string(line_no) + " field " + std::to_string(i + 1) +
                        " is not a finite number: '" + f + "'");
      }
      inst.tokens.push_back(v);
    }
    ds.items.push_back(std::move(inst));
  }
  return ds;
}

IncrementalStream stream_from_datasets(const FeatureDataset& train, const FeatureDataset& test,
                                       const ProtocolSpec& spec) {
  if (train.seq_len != test.seq_len || train.token_dim != test.token_dim) {
    throw DataError("train and test files disagree on token layout");
  }
  const auto partition = split_classes(spec);
  std::vector<int> task_of(spec.total_classes, -1);
  for (std::size_t t = 0; t < partition.size(); ++t)
    for (int c : partition[t]) task_of[static_cast<std::size_t>(c)] = static_cast<int>(t);

  IncrementalStream stream;
  stream.seq_len = train.seq_len;
  stream.token_dim = train.token_dim;
  stream.tasks.resize(partition.size());
  for (std::size_t t = 0; t < partition.size(); ++t) stream.tasks[t].classes = partition[t];
  auto place = [&](const std::vector<Instance>& items, bool is_train) {
    for (const auto& it : items) {
      if (it.label < 0 || static_cast<std::size_t>(it.label) >= spec.total_classes) {
        throw DataError("label " + std::to_string(it.label) + " outside [0," + std::to_string(spec.total_classes) + ")");
      }
      auto& task = stream.tasks[static_cast<std::size_t>(task_of[static_cast<std::size_t>(it.label)])];
      (is_train ? task.train : task.test).push_back(it);
    }
  };
  place(train.items, true);
  place(test.items, false);
  return stream;
}

}  // namespace tuna
