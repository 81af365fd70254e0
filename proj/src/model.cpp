// SPDX-License-Identifier: Apache-2.0
#include "premier/model.hpp"

#include <cmath>

#include "premier/error.hpp"

namespace premier {

std::string Ablation::label() const {
  if (medication_memory && cooccurrence_graph && interaction_graph) return "PREMIER";
  std::string parts = "diagnosis, procedure";
  if (uses_graphs()) {
    if (cooccurrence_graph && interaction_graph)
      parts += ", drug repository";
    else if (cooccurrence_graph)
      parts += ", co-occurrence";
    else
      parts += ", interaction";
  }
  if (medication_memory) parts += ", medication";
  return "PREMIER[" + parts + "]";
}

void Ablation::disable(const std::string& flag) {
  if (flag == "no-medmemory")
    medication_memory = false;
  else if (flag == "no-graphs")
    cooccurrence_graph = interaction_graph = false;
  else if (flag == "no-cooccurrence")
    cooccurrence_graph = false;
  else if (flag == "no-interaction")
    interaction_graph = false;
  else
    throw ConfigError("unknown ablation '" + flag +
                      "' (expected no-medmemory, no-graphs, no-cooccurrence, no-interaction)");
}

void ModelConfig::validate() const {
  if (n_diagnoses == 0 || n_medications == 0) throw ConfigError("model needs nonempty diagnosis and medication vocabularies");
  if (embed_size <= 0 || hidden_size <= 0) throw ConfigError("embed and hidden sizes must be positive");
  if (leaky_slope < 0) throw ConfigError("leaky slope must be nonnegative");
}

namespace {

template <typename Rng>
void fill_uniform(Parameter& p, Real bound, Rng& rng) {
  std::uniform_real_distribution<Real> dist(-bound, bound);
  p.value() = p.value().unaryExpr([&](Real) { return dist(rng); });
}

template <typename Rng>
void fill_glorot(Parameter& p, Rng& rng) {
  fill_uniform(p, std::sqrt(6.0 / static_cast<Real>(p.rows() + p.cols())), rng);
}

Parameter scalar_parameter(const std::string& name, Real value) {
  MatrixX m(1, 1);
  m(0, 0) = value;
  return Parameter(name, m);
}

DrugGraph empty_graph(GraphKind kind, std::size_t n) {
  const auto dims = static_cast<Eigen::Index>(n);
  return DrugGraph(kind, MatrixX::Zero(dims, dims));
}

}  // namespace

PremierModel::PremierModel(const ModelConfig& config, std::uint64_t seed)
    : embeddings(config.embed_size, config.n_diagnoses, config.n_procedures, config.n_medications),
      diagnosis_branch("visit.diagnosis", config.embed_size, config.hidden_size, config.attention_bias),
      procedure_branch("visit.procedure", config.embed_size, config.hidden_size, config.attention_bias),
      cooccurrence_network("drug.cooccurrence", config.n_medications, config.embed_size),
      interaction_network("drug.interaction", config.n_medications, config.embed_size),
      w1(scalar_parameter("mix.w1", 1.0)),
      w2(scalar_parameter("mix.w2", 1.0)),
      w3(scalar_parameter("mix.w3", 1.0)),
      w4(scalar_parameter("mix.w4", 1.0)),
      output_weight("output.weight",
                    MatrixX::Zero(static_cast<Eigen::Index>(config.n_medications), config.embed_size)),
      output_bias("output.bias", MatrixX::Zero(static_cast<Eigen::Index>(config.n_medications), 1)),
      config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Real embed_bound = 1.0 / std::sqrt(static_cast<Real>(config.embed_size));
  const Real hidden_bound = 1.0 / std::sqrt(static_cast<Real>(config.hidden_size));
  for (auto* p : embeddings.parameters()) fill_uniform(*p, embed_bound, rng);
  for (auto* branch : {&diagnosis_branch, &procedure_branch}) {
    branch->alpha_rnn.initialize_uniform(hidden_bound, rng);
    branch->beta_rnn.initialize_uniform(hidden_bound, rng);
    fill_uniform(branch->phi, hidden_bound, rng);
    fill_uniform(branch->psi, hidden_bound, rng);
  }
  for (auto* net : {&cooccurrence_network, &interaction_network})
    for (auto* p : net->parameters()) fill_glorot(*p, rng);
  fill_uniform(output_weight, embed_bound, rng);
  set_graphs(empty_graph(GraphKind::Cooccurrence, config.n_medications),
             empty_graph(GraphKind::Interaction, config.n_medications));
}

void PremierModel::set_graphs(DrugGraph cooccurrence, DrugGraph interaction) {
  if (cooccurrence.dims() != config_.n_medications || interaction.dims() != config_.n_medications)
    throw ShapeError("drug graphs must be " + std::to_string(config_.n_medications) + " x " +
                     std::to_string(config_.n_medications));
  cooccurrence_ = std::move(cooccurrence);
  interaction_ = std::move(interaction);
  cooccurrence_mask_ = cooccurrence_.attention_mask();
  interaction_mask_ = interaction_.attention_mask();
}

std::vector<Parameter*> PremierModel::parameters() {
  std::vector<Parameter*> out = embeddings.parameters();
  for (auto* group : {&diagnosis_branch, &procedure_branch})
    for (auto* p : group->parameters()) out.push_back(p);
  for (auto* net : {&cooccurrence_network, &interaction_network})
    for (auto* p : net->parameters()) out.push_back(p);
  for (auto* p : {&w1, &w2, &w3, &w4, &output_weight, &output_bias}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> PremierModel::parameters() const {
  auto mutable_params = const_cast<PremierModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

Parameter* PremierModel::find_parameter(const std::string& name) {
  for (auto* p : parameters())
    if (p->name() == name) return p;
  return nullptr;
}

DrugState encode_drugs(Tape& tape, const PremierModel& model) {
  DrugState state;
  const auto& cfg = model.config();
  if (cfg.ablation.cooccurrence_graph)
    state.cooccurrence = gat_forward(tape, model.cooccurrence_network, model.cooccurrence_mask(),
                                     cfg.graph_activation, cfg.leaky_slope);
  if (cfg.ablation.interaction_graph)
    state.interaction = gat_forward(tape, model.interaction_network, model.interaction_mask(),
                                    cfg.graph_activation, cfg.leaky_slope);
  return state;
}

DrugValues drug_values(const DrugState& state) {
  DrugValues out;
  if (state.cooccurrence) out.z_c = state.cooccurrence->representation.value();
  if (state.interaction) out.z_d = state.interaction->representation.value();
  return out;
}

DrugValues compute_drug_values(const PremierModel& model) {
  Tape tape(false);
  return drug_values(encode_drugs(tape, model));
}

DrugState constant_drugs(Tape& tape, const DrugValues& values) {
  DrugState state;
  if (values.z_c) state.cooccurrence = GatOutput{tape.constant(*values.z_c), {}};
  if (values.z_d) state.interaction = GatOutput{tape.constant(*values.z_d), {}};
  return state;
}

PatientForward forward_patient(Tape& tape, const PremierModel& model, const PatientRecord& record,
                               const ForwardOptions& options, const DrugState* drugs) {
  const auto& cfg = model.config();
  const std::size_t T = record.visits.size();
  if (T == 0) throw DataError("patient " + record.patient_id + " has no visits");
  const bool use_dropout = options.training && options.dropout > 0;
  if (use_dropout && options.rng == nullptr) throw ConfigError("dropout requires a random generator");

  PatientForward out;
  out.drugs = drugs ? *drugs : encode_drugs(tape, model);

  auto e_d = tape.parameter(model.embeddings.diagnosis);
  auto e_p = tape.parameter(model.embeddings.procedure);
  auto e_m = tape.parameter(model.embeddings.medication);
  auto w1 = tape.parameter(model.w1);
  auto w2 = tape.parameter(model.w2);
  auto w3 = tape.parameter(model.w3);
  auto w4 = tape.parameter(model.w4);
  auto output_weight = tape.parameter(model.output_weight);
  auto output_bias = tape.parameter(model.output_bias);

  auto drop = [&](const Var& x) { return use_dropout ? ad::dropout(x, options.dropout, true, *options.rng) : x; };

  std::vector<Var> diag, proc;
  diag.reserve(T);
  proc.reserve(T);
  for (const auto& v : record.visits) {
    diag.push_back(drop(ad::column_sum(e_d, v.diagnoses)));
    proc.push_back(drop(ad::column_sum(e_p, v.procedures)));
  }
  const auto states_d = attention_states(tape, model.diagnosis_branch, diag);
  const auto states_p = attention_states(tape, model.procedure_branch, proc);
  const auto diag_seq = ad::hcat(diag);
  const auto proc_seq = ad::hcat(proc);

  std::optional<Var> z_c, z_d;
  if (out.drugs.cooccurrence) z_c = out.drugs.cooccurrence->representation;
  if (out.drugs.interaction) z_d = out.drugs.interaction->representation;

  VisitMemory memory;
  out.visits.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto n = static_cast<Eigen::Index>(t + 1);
    VisitForward vf;
    vf.alpha_d = ad::softmax(ad::middle_cols(states_d.scores, 0, n));
    vf.alpha_p = ad::softmax(ad::middle_cols(states_p.scores, 0, n));
    vf.beta_d = ad::middle_cols(states_d.beta, 0, n);
    vf.beta_p = ad::middle_cols(states_p.beta, 0, n);
    vf.response_d = response_vector(vf.alpha_d, vf.beta_d, ad::middle_cols(diag_seq, 0, n));
    vf.response_p = response_vector(vf.alpha_p, vf.beta_p, ad::middle_cols(proc_seq, 0, n));
    vf.context = context_vector(vf.response_d, vf.response_p, w1);

    if (cfg.ablation.medication_memory) {
      auto read = memory_attention(tape, memory, vf.context);
      vf.gamma = read.gamma;
      vf.history = read.history;
      vf.query = query_vector(vf.context, vf.history, w2);
    } else {
      vf.history = tape.constant(MatrixX::Zero(cfg.embed_size, 1));
      vf.query = vf.context;
    }

    std::optional<Var> read;
    if (z_c || z_d) {
      vf.drug_read = drug_memory_read(z_c, z_d, vf.query, w3);
      read = vf.drug_read->read;
    }
    vf.prediction = predict(vf.query, read, w4, output_weight, output_bias);

    IndexSet remembered = options.history == HistoryMode::Recorded
                              ? record.visits[t].medications
                              : threshold_predictions(vf.prediction.probabilities.value().col(0), options.threshold);
    // Written after the query: the current visit never attends to itself.
    if (cfg.ablation.medication_memory) memory.append(vf.context, drop(ad::column_sum(e_m, remembered)));
    out.memory_medications.push_back(std::move(remembered));
    out.visits.push_back(std::move(vf));
  }
  return out;
}

std::vector<VisitScores> predict_patient(const PremierModel& model, const PatientRecord& record,
                                         HistoryMode history, Real threshold, const DrugValues* drugs) {
  Tape tape(false);
  ForwardOptions options;
  options.history = history;
  options.threshold = threshold;
  std::optional<DrugState> state;
  if (drugs) state = constant_drugs(tape, *drugs);
  auto forward = forward_patient(tape, model, record, options, state ? &*state : nullptr);
  std::vector<VisitScores> out;
  out.reserve(forward.visits.size());
  for (const auto& v : forward.visits) {
    VisitScores s;
    s.probabilities = v.prediction.probabilities.value().col(0);
    s.logits = v.prediction.logits.value().col(0);
    s.predicted = threshold_predictions(s.probabilities, threshold);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace premier
