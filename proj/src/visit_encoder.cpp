// SPDX-License-Identifier: Apache-2.0
#include "premier/visit_encoder.hpp"

namespace premier {

EmbeddingTables::EmbeddingTables(Eigen::Index embed, std::size_t n_d, std::size_t n_p, std::size_t n_m)
    : diagnosis("visit.embed.diagnosis", MatrixX::Zero(embed, static_cast<Eigen::Index>(n_d))),
      procedure("visit.embed.procedure", MatrixX::Zero(embed, static_cast<Eigen::Index>(n_p))),
      medication("visit.embed.medication", MatrixX::Zero(embed, static_cast<Eigen::Index>(n_m))) {}

AttentionBranch::AttentionBranch(const std::string& name, Eigen::Index embed, Eigen::Index hidden, bool with_bias)
    : alpha_rnn(name + ".alpha_rnn", embed, hidden),
      beta_rnn(name + ".beta_rnn", embed, hidden),
      phi(name + ".phi", MatrixX::Zero(1, hidden)),
      psi(name + ".psi", MatrixX::Zero(embed, hidden)) {
  if (with_bias) {
    phi_bias.emplace(name + ".phi_bias", MatrixX::Zero(1, 1));
    psi_bias.emplace(name + ".psi_bias", MatrixX::Zero(embed, 1));
  }
}

std::vector<Parameter*> AttentionBranch::parameters() {
  std::vector<Parameter*> out = alpha_rnn.parameters();
  for (auto* p : beta_rnn.parameters()) out.push_back(p);
  out.push_back(&phi);
  out.push_back(&psi);
  if (phi_bias) out.push_back(&*phi_bias);
  if (psi_bias) out.push_back(&*psi_bias);
  return out;
}

EmbeddedVisit embed_visit(Tape& tape, const EmbeddingTables& tables, const Visit& visit) {
  return {ad::column_sum(tape.parameter(tables.diagnosis), visit.diagnoses),
          ad::column_sum(tape.parameter(tables.procedure), visit.procedures),
          ad::column_sum(tape.parameter(tables.medication), visit.medications)};
}

AttentionStates attention_states(Tape& tape, const AttentionBranch& branch, std::span<const Var> embedded) {
  if (embedded.empty()) throw ShapeError("two-level attention needs at least one visit");
  const Eigen::Index hidden = branch.alpha_rnn.hidden_size();
  auto h0 = tape.constant(MatrixX::Zero(hidden, 1));
  auto g = ad::hcat(gru_sequence(tape, branch.alpha_rnn, embedded, h0));
  auto h = ad::hcat(gru_sequence(tape, branch.beta_rnn, embedded, h0));

  auto scores = tape.parameter(branch.phi) * g;
  if (branch.phi_bias) {
    scores = ad::add_bias(scores, tape.parameter(*branch.phi_bias));
  }
  auto gate = tape.parameter(branch.psi) * h;
  if (branch.psi_bias) gate = ad::add_bias(gate, tape.parameter(*branch.psi_bias));
  return {scores, ad::tanh(gate)};
}

TwoLevelAttention two_level_attention(Tape& tape, const AttentionBranch& branch, std::span<const Var> embedded) {
  auto states = attention_states(tape, branch, embedded);
  return {ad::softmax(states.scores), states.beta};
}

Var response_vector(const Var& alpha, const Var& beta, const Var& embedded) {
  if (alpha.rows() != 1 || alpha.cols() != beta.cols() || beta.cols() != embedded.cols())
    throw ShapeError("response_vector: alpha " + ad::shape_string(alpha.rows(), alpha.cols()) + ", beta " +
                     ad::shape_string(beta.rows(), beta.cols()) + ", embedded " +
                     ad::shape_string(embedded.rows(), embedded.cols()));
  return ad::cwise_product(beta, embedded) * ad::transpose(alpha);
}

Var context_vector(const Var& response_d, const Var& response_p, const Var& w1) {
  return response_d + ad::scalar_mul(w1, response_p);
}

void VisitMemory::append(Var key, Var value) {
  keys_.push_back(key);
  values_.push_back(value);
}

MemoryRead memory_attention(Tape& tape, const VisitMemory& memory, const Var& context) {
  if (memory.empty()) return {std::nullopt, tape.constant(MatrixX::Zero(context.rows(), 1))};
  auto keys = ad::hcat(memory.keys());
  auto gamma = ad::softmax(ad::transpose(keys) * context);
  return {gamma, ad::hcat(memory.values()) * gamma};
}

Var query_vector(const Var& context, const Var& history, const Var& w2) {
  return context + ad::scalar_mul(w2, history);
}

}  // namespace premier
