// SPDX-License-Identifier: Apache-2.0
#include "premier/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "premier/adam.hpp"
#include "premier/error.hpp"
#include "premier/metrics.hpp"

namespace premier {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
  if (embed_size <= 0 || hidden_size <= 0) throw ConfigError("embed and hidden sizes must be positive");
  weights.validate();
}

ModelConfig model_config_for(const Cohort& cohort, const TrainConfig& config) {
  ModelConfig mc;
  mc.n_diagnoses = cohort.vocab_d.size();
  mc.n_procedures = cohort.vocab_p.size();
  mc.n_medications = cohort.vocab_m.size();
  mc.embed_size = config.embed_size;
  mc.hidden_size = config.hidden_size;
  mc.attention_bias = config.attention_bias;
  mc.graph_activation = config.graph_activation;
  mc.ablation = config.ablation;
  return mc;
}

PatientLoss patient_loss(Tape& tape, const PremierModel& model, const PatientRecord& record,
                         const LossWeights& weights, const ForwardOptions& options, const DrugState* drugs) {
  ForwardOptions teacher = options;
  teacher.history = HistoryMode::Recorded;
  const auto forward = forward_patient(tape, model, record, teacher, drugs);
  const auto n_m = static_cast<Eigen::Index>(model.config().n_medications);
  std::vector<Var> columns;
  std::vector<std::size_t> labelled;
  for (std::size_t i = 0; i < record.visits.size(); ++i)
    if (!record.visits[i].medications.empty()) {
      labelled.push_back(i);
      columns.push_back(forward.visits[i].prediction.probabilities);
    }
  PatientLoss loss;
  loss.labelled_visits = labelled.size();
  loss.skipped_visits = record.visits.size() - labelled.size();
  if (labelled.empty()) {
    loss.bce = loss.hinge = loss.ddi = loss.total = tape.constant(MatrixX::Zero(1, 1));
    return loss;
  }
  MatrixX targets = MatrixX::Zero(n_m, static_cast<Eigen::Index>(labelled.size()));
  for (std::size_t c = 0; c < labelled.size(); ++c)
    for (std::size_t k : record.visits[labelled[c]].medications)
      targets(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = 1;
  const auto probabilities = ad::hcat(columns);
  loss.bce = bce_loss(probabilities, targets);
  loss.hinge = hinge_loss(probabilities, targets);
  loss.ddi = ddi_loss(probabilities, model.interaction().weights());
  loss.total = combined_loss(loss.bce, loss.hinge, loss.ddi, weights);
  return loss;
}

TrainResult train(const CohortSplit& split, const DrugGraph& interaction, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (split.train.empty() || split.validation.empty()) throw DataError("training needs nonempty train and validation sets");
  split.train.validate();

  PremierModel model(model_config_for(split.train, config), config.seed);
  model.set_graphs(build_cooccurrence(split.train), interaction);
  AdamOptions adam_options;
  adam_options.learning_rate = config.learning_rate;
  Adam<Real> optimizer(model.parameters(), adam_options);

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  ForwardOptions options;
  options.training = true;
  options.dropout = config.dropout;
  options.rng = &rng;

  TrainResult result{model, 0, -1.0, {}};
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Real loss_sum = 0;
    std::size_t stepped = 0;
    for (std::size_t idx : order) {
      const auto& record = split.train.records[idx];
      optimizer.zero_grad();
      Tape tape;
      const auto loss = patient_loss(tape, model, record, config.weights, options);
      if (loss.labelled_visits == 0) continue;
      const Real value = loss.total.scalar();
      if (!std::isfinite(value))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", patient " + record.patient_id);
      tape.backward(loss.total);
      optimizer.step();
      loss_sum += value;
      ++stepped;
    }

    const auto set = collect_predictions(split.validation, model_predictor(model));
    const auto report = evaluate(set, model.interaction().weights(), "validation");
    EpochLog entry{epoch, stepped ? loss_sum / static_cast<Real>(stepped) : 0.0, report.jaccard, report.ddi_rate};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.val_jaccard > result.best_val_jaccard) {
      result.best = model;
      result.best_epoch = epoch;
      result.best_val_jaccard = entry.val_jaccard;
    }
  }
  return result;
}

void write_epoch_log(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,train_loss,val_jaccard,val_ddi\n";
  const auto old_precision = out.precision(8);
  for (const auto& e : log) out << e.epoch << ',' << e.train_loss << ',' << e.val_jaccard << ',' << e.val_ddi << '\n';
  out.precision(old_precision);
}

}  // namespace premier
