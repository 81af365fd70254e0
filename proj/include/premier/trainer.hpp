// SPDX-License-Identifier: Apache-2.0
//
// Per-patient training loop with validation-based model selection.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "premier/drug_graph.hpp"
#include "premier/ehr.hpp"
#include "premier/losses.hpp"
#include "premier/model.hpp"

namespace premier {

struct TrainConfig {
  Real learning_rate = 1e-4;
  std::size_t epochs = 40;
  Real dropout = 0.4;
  Eigen::Index embed_size = 64;
  Eigen::Index hidden_size = 64;
  bool attention_bias = false;
  Activation graph_activation = Activation::Tanh;
  std::uint64_t seed = 0;
  LossWeights weights;
  Ablation ablation;

  void validate() const;
};

ModelConfig model_config_for(const Cohort& cohort, const TrainConfig& config);

struct PatientLoss {
  Var total;
  Var bce;
  Var hinge;
  Var ddi;
  std::size_t labelled_visits = 0;
  std::size_t skipped_visits = 0;  // visits without medications: in memory, outside every loss term
};

/// Combined objective summed over the patient's labelled visits, memory filled
/// with recorded medications. All terms are zero when no visit is labelled.
PatientLoss patient_loss(Tape& tape, const PremierModel& model, const PatientRecord& record,
                         const LossWeights& weights, const ForwardOptions& options,
                         const DrugState* drugs = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  Real train_loss = 0;  // mean per-patient combined loss
  Real val_jaccard = 0;
  Real val_ddi = 0;
};

struct TrainResult {
  PremierModel best;
  std::size_t best_epoch = 0;
  Real best_val_jaccard = 0;
  std::vector<EpochLog> log;
};

/// Builds A_C from `split.train`, trains with one Adam step per patient, and
/// returns the epoch with the highest validation Jaccard (earliest on ties).
/// NumericError on a non-finite loss.
TrainResult train(const CohortSplit& split, const DrugGraph& interaction, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

void write_epoch_log(const std::vector<EpochLog>& log, std::ostream& out);

}  // namespace premier
