// SPDX-License-Identifier: Apache-2.0
//
// The full recommender: parameters, drug graphs, and the per-patient forward
// pass shared by training, evaluation, justification, and serving.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "premier/drug_encoder.hpp"
#include "premier/drug_graph.hpp"
#include "premier/ehr.hpp"
#include "premier/visit_encoder.hpp"

namespace premier {

/// Information sources that can be switched off for ablation runs.
struct Ablation {
  bool medication_memory = true;
  bool cooccurrence_graph = true;
  bool interaction_graph = true;

  bool uses_graphs() const { return cooccurrence_graph || interaction_graph; }
  /// "PREMIER" or "PREMIER[diagnosis, procedure, ...]".
  std::string label() const;
  /// Accepts "no-medmemory", "no-graphs", "no-cooccurrence", "no-interaction".
  void disable(const std::string& flag);
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct ModelConfig {
  std::size_t n_diagnoses = 0;
  std::size_t n_procedures = 0;
  std::size_t n_medications = 0;
  Eigen::Index embed_size = 64;
  Eigen::Index hidden_size = 64;
  bool attention_bias = false;
  Activation graph_activation = Activation::Tanh;
  Real leaky_slope = 0.2;
  Ablation ablation;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class PremierModel {
 public:
  PremierModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  void set_graphs(DrugGraph cooccurrence, DrugGraph interaction);
  const DrugGraph& cooccurrence() const { return cooccurrence_; }
  const DrugGraph& interaction() const { return interaction_; }
  const MatrixX& cooccurrence_mask() const { return cooccurrence_mask_; }
  const MatrixX& interaction_mask() const { return interaction_mask_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);

  EmbeddingTables embeddings;
  AttentionBranch diagnosis_branch;
  AttentionBranch procedure_branch;
  GraphNetwork cooccurrence_network;
  GraphNetwork interaction_network;
  Parameter w1, w2, w3, w4;
  Parameter output_weight;  // E^F: N_m x embed
  Parameter output_bias;    // N_m x 1

 private:
  ModelConfig config_;
  DrugGraph cooccurrence_;
  DrugGraph interaction_;
  MatrixX cooccurrence_mask_;
  MatrixX interaction_mask_;
};

/// Which medications populate the visit memory for past visits.
enum class HistoryMode { Recorded, Predicted };

struct ForwardOptions {
  bool training = false;
  Real dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // required when training with dropout
  HistoryMode history = HistoryMode::Recorded;
  Real threshold = 0.5;
};

struct DrugState {
  std::optional<GatOutput> cooccurrence;
  std::optional<GatOutput> interaction;
};

/// Graph attention over both drug graphs; independent of the patient.
DrugState encode_drugs(Tape& tape, const PremierModel& model);

/// Detached Z_C / Z_D values, reusable across tapes at inference.
struct DrugValues {
  std::optional<MatrixX> z_c;
  std::optional<MatrixX> z_d;
};

DrugValues drug_values(const DrugState& state);
DrugValues compute_drug_values(const PremierModel& model);
DrugState constant_drugs(Tape& tape, const DrugValues& values);

struct VisitForward {
  Var alpha_d, alpha_p;  // 1 x t
  Var beta_d, beta_p;    // embed x t
  Var response_d, response_p, context;
  std::optional<Var> gamma;  // (t-1) x 1
  Var history;
  Var query;
  std::optional<DrugRead> drug_read;
  Prediction prediction;
};

struct PatientForward {
  DrugState drugs;
  std::vector<VisitForward> visits;
  /// Medication sets written to memory for each visit (recorded or predicted).
  std::vector<IndexSet> memory_medications;
};

/// Predicts every visit of `record` from its own codes and the visits before it.
PatientForward forward_patient(Tape& tape, const PremierModel& model, const PatientRecord& record,
                               const ForwardOptions& options, const DrugState* drugs = nullptr);

struct VisitScores {
  VectorX probabilities;
  VectorX logits;
  IndexSet predicted;
};

/// Inference over all visits of one patient, no gradient tracking.
std::vector<VisitScores> predict_patient(const PremierModel& model, const PatientRecord& record,
                                         HistoryMode history = HistoryMode::Recorded, Real threshold = 0.5,
                                         const DrugValues* drugs = nullptr);

}  // namespace premier
