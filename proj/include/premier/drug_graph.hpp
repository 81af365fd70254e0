// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "premier/ehr.hpp"

namespace premier {

enum class GraphKind { Cooccurrence, Interaction };

/// Square, symmetric, nonnegative adjacency over the medication vocabulary with
/// a zero diagonal.
class DrugGraph {
 public:
  DrugGraph() = default;
  DrugGraph(GraphKind kind, Eigen::MatrixXd weights);

  GraphKind kind() const { return kind_; }
  std::size_t dims() const { return static_cast<std::size_t>(weights_.rows()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  double operator()(std::size_t j, std::size_t k) const {
    return weights_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
  }
  std::size_t num_edges() const;

  /// 0/1 neighbourhood mask with the diagonal set, as consumed by graph attention.
  Eigen::MatrixXd attention_mask() const;

 private:
  GraphKind kind_ = GraphKind::Cooccurrence;
  Eigen::MatrixXd weights_;
};

/// A_C[j,k] = number of training visits prescribing both j and k.
DrugGraph build_cooccurrence(const Cohort& train_cohort);

struct InteractionRecord {
  std::string code_a;
  std::string code_b;
  std::int64_t count = 0;
};

std::vector<InteractionRecord> read_interactions(std::istream& in);
std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path);
void save_interactions(const std::vector<InteractionRecord>& records, const std::filesystem::path& path);

struct InteractionBuild {
  DrugGraph graph;
  std::size_t skipped = 0;  // records naming a code outside the vocabulary
};

/// Keeps each drug's `cap` most-reported partners (ties by code order), then
/// symmetrizes into a binary matrix.
InteractionBuild build_interaction(const std::vector<InteractionRecord>& records,
                                   const CodeVocabulary& vocab_m, std::size_t cap = 40);
InteractionBuild build_interaction(const std::filesystem::path& pairs_file,
                                   const CodeVocabulary& vocab_m, std::size_t cap = 40);

/// Sorted indices k with weights(j,k) > 0.
std::vector<std::size_t> neighbors(const DrugGraph& graph, std::size_t j);

/// Coordinate list `j k weight`, upper triangle only.
void export_coordinates(const DrugGraph& graph, std::ostream& out);

}  // namespace premier
