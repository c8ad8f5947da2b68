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
#include "tuna/harness/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "tuna/errors.hpp"

namespace tuna {

using nlohmann::json;

namespace {

void put_le(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFF));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

std::filesystem::path blob_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".bin";
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

const Tensor& Archive::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw DataError("checkpoint has no tensor '" + name + "'");
}

void write_archive(const std::filesystem::path& path, const std::string& kind, json meta,
                   std::span<const NamedTensor> tensors) {
  std::vector<unsigned char> blob;
  json entries = json::array();
  for (const auto& t : tensors) {
    entries.push_back({{"name", t.name},
                       {"shape", t.tensor.shape()},
                       {"offset", blob.size()},
                       {"count", t.tensor.numel()}});
    for (double v : t.tensor.data()) put_le(blob, v);
  }
  meta["format"] = "tuna-checkpoint";
  meta["version"] = kCheckpointVersion;
  meta["kind"] = kind;
  meta["blob"] = blob_path(path).filename().string();
  meta["blob_bytes"] = blob.size();
  meta["tensors"] = std::move(entries);

  const auto bp = blob_path(path);
  std::ofstream out(bp, std::ios::binary);
  if (!out) throw DataError("cannot write " + bp.string());
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("write failed for " + bp.string());
  write_text(path, meta.dump(2) + "\n");
}

Archive read_archive(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Archive ar;
  try {
    ar.meta = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
  try {
    if (ar.meta.value("format", "") != "tuna-checkpoint") throw DataError(path.string() + ": not a checkpoint manifest");
    const int version = ar.meta.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    const std::string kind = ar.meta.at("kind").get<std::string>();
    if (!expected_kind.empty() && kind != expected_kind) {
      throw DataError(path.string() + ": expected a '" + expected_kind + "' checkpoint, found '" + kind + "'");
    }
    const auto bp = path.parent_path() / ar.meta.at("blob").get<std::string>();
    std::ifstream bin(bp, std::ios::binary);
    if (!bin) throw DataError("cannot open checkpoint blob " + bp.string());
    const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    const auto declared = ar.meta.at("blob_bytes").get<std::size_t>();
    if (blob.size() != declared) {
      throw DataError(bp.string() + ": blob has " + std::to_string(blob.size()) + " bytes, manifest declares " +
                      std::to_string(declared));
    }
    std::size_t expected_offset = 0;
    for (const auto& e : ar.meta.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (count != numel_of(shape) || offset != expected_offset || offset + 8 * count > blob.size()) {
        throw DataError(path.string() + ": tensor '" + name + "' does not match the blob layout");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = get_le(blob.data() + offset + 8 * i);
      ar.tensors.push_back({name, Tensor::from(shape, std::move(values))});
      expected_offset = offset + 8 * count;
    }
    if (expected_offset != blob.size()) throw DataError(path.string() + ": blob has trailing bytes");
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
  return ar;
}

// ---------------------------------------------------------------------------
// Component encoders
// ---------------------------------------------------------------------------

json to_json(const BackboneConfig& c) {
  return {{"num_blocks", c.num_blocks},  {"embed_dim", c.embed_dim}, {"num_heads", c.num_heads},
          {"mlp_hidden", c.mlp_hidden},  {"seq_len", c.seq_len},     {"token_dim", c.token_dim},
          {"readout", c.readout == Readout::ClassToken ? "cls" : "mean"}};
}

BackboneConfig backbone_config_from_json(const json& j) {
  BackboneConfig c;
  c.num_blocks = j.at("num_blocks").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.token_dim = j.at("token_dim").get<std::size_t>();
  const auto readout = j.value("readout", std::string("cls"));
  if (readout == "cls") {
    c.readout = Readout::ClassToken;
  } else if (readout == "mean") {
    c.readout = Readout::MeanPool;
  } else {
    throw ConfigError("unknown readout '" + readout + "' (expected cls or mean)");
  }
  return c;
}

namespace {

void append_backbone(const Backbone& b, std::vector<NamedTensor>& out) {
  for (const auto& [name, t] : b.named_parameters()) out.push_back({"backbone." + name, t});
}

Backbone restore_backbone(const BackboneConfig& config, const Archive& ar) {
  Rng dummy(0);
  Backbone b = Backbone::init(config, dummy);
  for (auto& [name, t] : b.named_parameters()) {
    const Tensor& src = ar.get("backbone." + name);
    if (src.shape() != t.shape()) {
      throw DataError("checkpoint tensor backbone." + name + " has shape " + shape_str(src.shape()) +
                      ", backbone expects " + shape_str(t.shape()));
    }
    Tensor handle = t;
    std::copy(src.data().begin(), src.data().end(), handle.mutable_data().begin());
  }
  b.freeze();
  return b;
}

void append_adapter(const AdapterSet& a, const std::string& prefix, std::vector<NamedTensor>& out) {
  for (std::size_t l = 0; l < a.num_blocks(); ++l) {
    out.push_back({prefix + ".down." + std::to_string(l), a.down[l]});
    out.push_back({prefix + ".up." + std::to_string(l), a.up[l]});
  }
}

AdapterSet restore_adapter(const Archive& ar, const std::string& prefix, int task_id, std::size_t rank,
                           std::size_t blocks) {
  AdapterSet a;
  a.task_id = task_id;
  a.rank = rank;
  for (std::size_t l = 0; l < blocks; ++l) {
    a.down.push_back(ar.get(prefix + ".down." + std::to_string(l)).clone());
    a.up.push_back(ar.get(prefix + ".up." + std::to_string(l)).clone());
  }
  return a;
}

}  // namespace

void save_backbone(const Backbone& backbone, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  append_backbone(backbone, tensors);
  write_archive(path, "backbone", {{"backbone_config", to_json(backbone.config())}}, tensors);
}

Backbone load_backbone(const std::filesystem::path& path) {
  const Archive ar = read_archive(path, "");
  const auto kind = ar.meta.at("kind").get<std::string>();
  if (kind != "backbone" && kind != "model") {
    throw DataError(path.string() + ": expected a backbone or model checkpoint, found '" + kind + "'");
  }
  return restore_backbone(backbone_config_from_json(ar.meta.at("backbone_config")), ar);
}

void save_adapter(const AdapterSet& adapters, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors;
  append_adapter(adapters, "adapter", tensors);
  write_archive(path, "adapter",
                {{"task_id", adapters.task_id}, {"rank", adapters.rank}, {"num_blocks", adapters.num_blocks()}},
                tensors);
}

AdapterSet load_adapter(const std::filesystem::path& path) {
  const Archive ar = read_archive(path, "adapter");
  try {
    AdapterSet a = restore_adapter(ar, "adapter", ar.meta.at("task_id").get<int>(),
                                   ar.meta.at("rank").get<std::size_t>(),
                                   ar.meta.at("num_blocks").get<std::size_t>());
    if (a.num_blocks() > 0) a.validate(a.num_blocks(), a.embed_dim());
    return a;
  } catch (const ShapeError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path, const json& config_echo) {
  std::vector<NamedTensor> tensors;
  append_backbone(state.backbone, tensors);
  json adapters = json::array();
  for (std::size_t i = 0; i < state.adapters.size(); ++i) {
    const auto& a = state.adapters[i];
    adapters.push_back({{"task_id", a.task_id}, {"rank", a.rank}});
    append_adapter(a, "adapters." + std::to_string(i), tensors);
  }
  json universal = nullptr;
  if (state.universal) {
    universal = {{"rank", state.universal->rank}};
    append_adapter(*state.universal, "universal", tensors);
  }
  tensors.push_back({"classifier.weight", state.classifier.weight});
  json stats = json::array();
  for (std::size_t i = 0; i < state.stats.size(); ++i) {
    const auto& s = state.stats[i];
    stats.push_back({{"class_id", s.class_id}, {"task_id", s.task_id}, {"count", s.count}});
    const auto d = s.mean.size();
    tensors.push_back({"stats." + std::to_string(i) + ".mean", Tensor::from({d}, s.mean)});
    tensors.push_back({"stats." + std::to_string(i) + ".variance", Tensor::from({d}, s.variance)});
  }
  json meta = {{"backbone_config", to_json(state.backbone.config())},
               {"adapters", adapters},
               {"universal", universal},
               {"classifier", {{"class_ids", state.classifier.class_ids}, {"class_tasks", state.classifier.class_tasks}}},
               {"stats", stats},
               {"config", config_echo}};
  write_archive(path, "model", std::move(meta), tensors);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const BackboneConfig* expected) {
  const Archive ar = read_archive(path, "model");
  LoadedCheckpoint out;
  try {
    const auto config = backbone_config_from_json(ar.meta.at("backbone_config"));
    if (expected != nullptr && !(config == *expected)) {
      throw DataError(path.string() + ": checkpoint backbone " + ar.meta.at("backbone_config").dump() +
                      " does not match the configured backbone " + to_json(*expected).dump());
    }
    out.state.backbone = restore_backbone(config, ar);
    const auto& adapters = ar.meta.at("adapters");
    for (std::size_t i = 0; i < adapters.size(); ++i) {
      AdapterSet a = restore_adapter(ar, "adapters." + std::to_string(i), adapters[i].at("task_id").get<int>(),
                                     adapters[i].at("rank").get<std::size_t>(), config.num_blocks);
      a.validate(config.num_blocks, config.embed_dim);
      out.state.adapters.push_back(std::move(a));
    }
    if (!ar.meta.at("universal").is_null()) {
      AdapterSet u = restore_adapter(ar, "universal", AdapterSet::kUniversal,
                                     ar.meta.at("universal").at("rank").get<std::size_t>(), config.num_blocks);
      u.validate(config.num_blocks, config.embed_dim);
      out.state.universal = std::move(u);
    }
    Classifier cls(config.embed_dim);
    cls.weight = ar.get("classifier.weight").clone();
    cls.class_ids = ar.meta.at("classifier").at("class_ids").get<std::vector<int>>();
    cls.class_tasks = ar.meta.at("classifier").at("class_tasks").get<std::vector<int>>();
    cls.validate();
    if (cls.embed_dim() != config.embed_dim) throw DataError(path.string() + ": classifier width mismatch");
    out.state.classifier = std::move(cls);
    const auto& stats = ar.meta.at("stats");
    for (std::size_t i = 0; i < stats.size(); ++i) {
      ClassStatistics s;
      s.class_id = stats[i].at("class_id").get<int>();
      s.task_id = stats[i].at("task_id").get<int>();
      s.count = stats[i].at("count").get<std::size_t>();
      s.mean = ar.get("stats." + std::to_string(i) + ".mean").values();
      s.variance = ar.get("stats." + std::to_string(i) + ".variance").values();
      out.state.stats.push_back(std::move(s));
    }
    out.config = ar.meta.at("config");
  } catch (const ShapeError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
  return out;
}

}  // namespace tuna
