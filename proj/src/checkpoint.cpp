// SPDX-License-Identifier: Apache-2.0
#include "premier/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "premier/error.hpp"

namespace premier {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'R', 'M', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kTensorEntry = 0;
constexpr std::uint8_t kTextEntry = 1;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void write_raw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw IoError(std::string("truncated checkpoint reading ") + what);
  return value;
}

std::string read_bytes(std::istream& in, std::uint64_t length, const char* what) {
  std::string s(length, '\0');
  if (length != 0 && !in.read(s.data(), static_cast<std::streamsize>(length)))
    throw IoError(std::string("truncated checkpoint reading ") + what);
  return s;
}

}  // namespace

void Checkpoint::put_tensor(const std::string& name, MatrixX value) {
  if (name.empty()) throw IoError("checkpoint entry name must be nonempty");
  if (texts_.count(name)) throw IoError("checkpoint entry '" + name + "' already holds text");
  tensors_[name] = std::move(value);
}

void Checkpoint::put_text(const std::string& name, std::string value) {
  if (name.empty()) throw IoError("checkpoint entry name must be nonempty");
  if (tensors_.count(name)) throw IoError("checkpoint entry '" + name + "' already holds a tensor");
  texts_[name] = std::move(value);
}

const MatrixX& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::text(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw IoError("checkpoint has no text entry '" + name + "'");
  return it->second;
}

void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  write_raw<std::uint32_t>(out, kCheckpointVersion);
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.tensors().size() + checkpoint.texts().size()));
  for (const auto& [name, value] : checkpoint.tensors()) {
    write_raw<std::uint8_t>(out, kTensorEntry);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw<std::uint32_t>(out, 2);
    write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(value.rows()));
    write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(value.cols()));
    out.write(reinterpret_cast<const char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
  }
  for (const auto& [name, value] : checkpoint.texts()) {
    write_raw<std::uint8_t>(out, kTextEntry);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw<std::uint64_t>(out, value.size());
    out.write(value.data(), static_cast<std::streamsize>(value.size()));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a checkpoint file (bad magic)");
  const auto version = read_raw<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  const auto count = read_raw<std::uint32_t>(in, "entry count");
  Checkpoint checkpoint;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = read_raw<std::uint8_t>(in, "entry kind");
    const auto name_length = read_raw<std::uint32_t>(in, "name length");
    std::string name = read_bytes(in, name_length, "entry name");
    if (checkpoint.has_tensor(name) || checkpoint.has_text(name)) throw IoError("duplicate checkpoint entry '" + name + "'");
    if (kind == kTensorEntry) {
      const auto rank = read_raw<std::uint32_t>(in, "rank");
      if (rank > 2) throw IoError("tensor '" + name + "' has rank " + std::to_string(rank) + "; at most 2 supported");
      std::uint64_t rows = 1, cols = 1;
      if (rank >= 1) rows = read_raw<std::uint64_t>(in, "dimension");
      if (rank == 2) cols = read_raw<std::uint64_t>(in, "dimension");
      if (rows != 0 && cols > kMaxElements / rows) throw IoError("tensor '" + name + "' is implausibly large");
      MatrixX value(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      const auto bytes = static_cast<std::streamsize>(rows * cols * sizeof(double));
      if (bytes != 0 && !in.read(reinterpret_cast<char*>(value.data()), bytes))
        throw IoError("truncated checkpoint reading values of '" + name + "'");
      checkpoint.put_tensor(name, std::move(value));
    } else if (kind == kTextEntry) {
      const auto length = read_raw<std::uint64_t>(in, "text length");
      if (length > kMaxElements) throw IoError("text entry '" + name + "' is implausibly large");
      checkpoint.put_text(name, read_bytes(in, length, "text"));
    } else {
      throw IoError("unknown checkpoint entry kind " + std::to_string(kind) + " for '" + name + "'");
    }
  }
  return checkpoint;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(checkpoint, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(buffer.str())));
  return hex;
}

namespace {

using nlohmann::json;

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw IoError("unknown graph activation '" + s + "' in checkpoint");
}

json config_json(const ModelConfig& c) {
  return {{"n_diagnoses", c.n_diagnoses},
          {"n_procedures", c.n_procedures},
          {"n_medications", c.n_medications},
          {"embed_size", c.embed_size},
          {"hidden_size", c.hidden_size},
          {"attention_bias", c.attention_bias},
          {"graph_activation", activation_name(c.graph_activation)},
          {"leaky_slope", c.leaky_slope},
          {"ablation",
           {{"medication_memory", c.ablation.medication_memory},
            {"cooccurrence_graph", c.ablation.cooccurrence_graph},
            {"interaction_graph", c.ablation.interaction_graph}}}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.n_diagnoses = j.at("n_diagnoses").get<std::size_t>();
  c.n_procedures = j.at("n_procedures").get<std::size_t>();
  c.n_medications = j.at("n_medications").get<std::size_t>();
  c.embed_size = j.at("embed_size").get<Eigen::Index>();
  c.hidden_size = j.at("hidden_size").get<Eigen::Index>();
  c.attention_bias = j.at("attention_bias").get<bool>();
  c.graph_activation = activation_from(j.at("graph_activation").get<std::string>());
  c.leaky_slope = j.at("leaky_slope").get<double>();
  const auto& a = j.at("ablation");
  c.ablation.medication_memory = a.at("medication_memory").get<bool>();
  c.ablation.cooccurrence_graph = a.at("cooccurrence_graph").get<bool>();
  c.ablation.interaction_graph = a.at("interaction_graph").get<bool>();
  return c;
}

}  // namespace

Checkpoint model_checkpoint(const PremierModel& model, const ModelMetadata& metadata) {
  Checkpoint ck;
  for (const auto* p : model.parameters()) ck.put_tensor("param." + p->name(), p->value());
  ck.put_tensor("graph.cooccurrence", model.cooccurrence().weights());
  ck.put_tensor("graph.interaction", model.interaction().weights());
  const auto drugs = compute_drug_values(model);
  if (drugs.z_c) ck.put_tensor("export.z_c", *drugs.z_c);
  if (drugs.z_d) ck.put_tensor("export.z_d", *drugs.z_d);

  const auto& v = metadata.vocabularies;
  json meta = {{"config", config_json(model.config())},
               {"vocabulary",
                {{"diagnosis", v.vocab_d.codes()}, {"procedure", v.vocab_p.codes()}, {"medication", v.vocab_m.codes()}}},
               {"split",
                {{"train", metadata.train_ids}, {"validation", metadata.validation_ids}, {"test", metadata.test_ids}}},
               {"seed", metadata.seed},
               {"best_epoch", metadata.best_epoch},
               {"best_val_jaccard", metadata.best_val_jaccard},
               {"label", model.config().ablation.label()}};
  ck.put_text("meta", meta.dump());
  return ck;
}

LoadedModel model_from_checkpoint(const Checkpoint& ck) {
  json meta;
  try {
    meta = json::parse(ck.text("meta"));
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  try {
    ModelConfig config = config_from(meta.at("config"));
    ModelMetadata md;
    const auto& voc = meta.at("vocabulary");
    md.vocabularies.vocab_d = CodeVocabulary(CodeKind::Diagnosis, voc.at("diagnosis").get<std::vector<std::string>>());
    md.vocabularies.vocab_p = CodeVocabulary(CodeKind::Procedure, voc.at("procedure").get<std::vector<std::string>>());
    md.vocabularies.vocab_m = CodeVocabulary(CodeKind::Medication, voc.at("medication").get<std::vector<std::string>>());
    if (md.vocabularies.vocab_d.size() != config.n_diagnoses || md.vocabularies.vocab_p.size() != config.n_procedures ||
        md.vocabularies.vocab_m.size() != config.n_medications)
      throw IoError("checkpoint vocabularies disagree with model dimensions");
    const auto& split = meta.at("split");
    md.train_ids = split.at("train").get<std::vector<std::string>>();
    md.validation_ids = split.at("validation").get<std::vector<std::string>>();
    md.test_ids = split.at("test").get<std::vector<std::string>>();
    md.seed = meta.at("seed").get<std::uint64_t>();
    md.best_epoch = meta.at("best_epoch").get<std::size_t>();
    md.best_val_jaccard = meta.at("best_val_jaccard").get<double>();

    LoadedModel loaded{PremierModel(config, 0), std::move(md), {}};
    for (auto* p : loaded.model.parameters()) p->assign(ck.tensor("param." + p->name()));
    loaded.model.set_graphs(DrugGraph(GraphKind::Cooccurrence, ck.tensor("graph.cooccurrence")),
                            DrugGraph(GraphKind::Interaction, ck.tensor("graph.interaction")));
    return loaded;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint metadata: ") + e.what());
  }
}

void save_model(const PremierModel& model, const ModelMetadata& metadata, const std::filesystem::path& path) {
  save_checkpoint(model_checkpoint(model, metadata), path);
}

LoadedModel load_model(const std::filesystem::path& path) {
  auto loaded = model_from_checkpoint(load_checkpoint(path));
  loaded.hash = file_hash(path);
  return loaded;
}

}  // namespace premier
