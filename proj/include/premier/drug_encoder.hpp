// SPDX-License-Identifier: Apache-2.0
//
// Stage two: graph attention over the co-occurrence and interaction graphs,
// attention read of the drug representations with the query vector, and the
// sigmoid output layer.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "premier/ehr.hpp"
#include "premier/types.hpp"

namespace premier {

enum class Activation { Tanh, Sigmoid, Identity };

Var activate(const Var& x, Activation activation);

struct GatHead {
  Parameter weight;     // out x in
  Parameter attention;  // 2*out x 1, [source; neighbour]
};

struct GatLayer {
  std::vector<GatHead> heads;

  GatLayer() = default;
  GatLayer(const std::string& name, std::size_t heads, Eigen::Index input, Eigen::Index output);
  Eigen::Index input_size() const { return heads.front().weight.cols(); }
  Eigen::Index output_size() const { return heads.front().weight.rows(); }
  std::vector<Parameter*> parameters();
};

/// Two heads over identity features, then one head over their concatenation.
struct GraphNetwork {
  GatLayer first;
  GatLayer second;

  GraphNetwork() = default;
  GraphNetwork(const std::string& name, std::size_t n_m, Eigen::Index embed);
  std::vector<Parameter*> parameters();
};

/// Attention weights of one head for node j over `neighbors`, computed from
/// that head's projected node features (columns of `projected`).
VectorX gat_attention_coefficients(const GatHead& head, const MatrixX& projected, std::size_t j,
                                   const std::vector<std::size_t>& neighbors, Real slope = 0.2);

struct GatLayerOutput {
  Var output;                   // heads*out x N
  std::vector<Var> attention;   // per head, N x N, rows sum to one over the mask
};

/// `features` is in x N; an invalid Var stands for identity features.
GatLayerOutput gat_layer(Tape& tape, const GatLayer& layer, const Var& features, const MatrixX& mask,
                         Activation activation, Real slope = 0.2);

struct GatOutput {
  Var representation;  // embed x N
  std::vector<Var> attention;
};

/// `mask` is the 0/1 neighbourhood with self-loops (DrugGraph::attention_mask).
GatOutput gat_forward(Tape& tape, const GraphNetwork& network, const MatrixX& mask, Activation activation,
                      Real slope = 0.2);

struct DrugRead {
  Var lambda;  // N x 1
  Var read;    // embed x 1
};

/// Z = Z_C + w3 Z_D; lambda = softmax(Z^T q); read = Z lambda. Either graph may be absent.
DrugRead drug_memory_read(const std::optional<Var>& z_c, const std::optional<Var>& z_d, const Var& query,
                          const Var& w3);

struct Prediction {
  Var output;         // o = q + w4 * read
  Var logits;         // E^F o + bias
  Var probabilities;  // sigmoid(logits)
};

Prediction predict(const Var& query, const std::optional<Var>& read, const Var& w4, const Var& output_weight,
                   const Var& output_bias);

/// {k : p[k] > threshold}, strict.
IndexSet threshold_predictions(const VectorX& probabilities, Real threshold = 0.5);

}  // namespace premier
