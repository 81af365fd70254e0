// SPDX-License-Identifier: Apache-2.0
//
// Stage one: visit embeddings, two-level (visit / dimension) attention over
// diagnoses and procedures, context vectors, and the key-value memory of past
// context vectors and embedded medications that yields the query vector.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "premier/ehr.hpp"
#include "premier/gru.hpp"
#include "premier/types.hpp"

namespace premier {

/// E^d, E^p, E^m: embed x vocabulary size.
struct EmbeddingTables {
  Parameter diagnosis;
  Parameter procedure;
  Parameter medication;

  EmbeddingTables() = default;
  EmbeddingTables(Eigen::Index embed, std::size_t n_d, std::size_t n_p, std::size_t n_m);
  std::vector<Parameter*> parameters() { return {&diagnosis, &procedure, &medication}; }
};

/// Two GRUs over one code stream: the first scores visits (alpha), the second
/// produces per-dimension gates (beta).
struct AttentionBranch {
  GruCell<Real> alpha_rnn;
  GruCell<Real> beta_rnn;
  Parameter phi;  // 1 x hidden
  Parameter psi;  // embed x hidden
  std::optional<Parameter> phi_bias;
  std::optional<Parameter> psi_bias;

  AttentionBranch() = default;
  AttentionBranch(const std::string& name, Eigen::Index embed, Eigen::Index hidden, bool with_bias);
  std::vector<Parameter*> parameters();
};

struct EmbeddedVisit {
  Var diagnosis;
  Var procedure;
  Var medication;
};

/// Column sums of the embedding tables over the active codes; empty sets give zero vectors.
EmbeddedVisit embed_visit(Tape& tape, const EmbeddingTables& tables, const Visit& visit);

/// Visit scores phi(g_i) (1 x t) and gates beta (embed x t) for a whole sequence.
struct AttentionStates {
  Var scores;
  Var beta;
};

AttentionStates attention_states(Tape& tape, const AttentionBranch& branch, std::span<const Var> embedded);

struct TwoLevelAttention {
  Var alpha;  // 1 x t, sums to one
  Var beta;   // embed x t, entries in (-1, 1)
};

/// Throws ShapeError on an empty sequence.
TwoLevelAttention two_level_attention(Tape& tape, const AttentionBranch& branch, std::span<const Var> embedded);

/// sum_i alpha[i] * (beta[:, i] .* embedded[:, i]).
Var response_vector(const Var& alpha, const Var& beta, const Var& embedded);

/// r_d + w1 * r_p.
Var context_vector(const Var& response_d, const Var& response_p, const Var& w1);

/// Append-only store of (context vector, embedded medications) for past visits.
class VisitMemory {
 public:
  void append(Var key, Var value);
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::vector<Var>& keys() const { return keys_; }
  const std::vector<Var>& values() const { return values_; }

 private:
  std::vector<Var> keys_;
  std::vector<Var> values_;
};

struct MemoryRead {
  std::optional<Var> gamma;  // (t-1) x 1; absent for an empty memory
  Var history;               // sum_i gamma[i] * value_i; zero for an empty memory
};

MemoryRead memory_attention(Tape& tape, const VisitMemory& memory, const Var& context);

/// c + w2 * v.
Var query_vector(const Var& context, const Var& history, const Var& w2);

}  // namespace premier
