// SPDX-License-Identifier: Apache-2.0
#include "premier/drug_encoder.hpp"

#include <cmath>

namespace premier {

Var activate(const Var& x, Activation activation) {
  switch (activation) {
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Sigmoid: return ad::sigmoid(x);
    case Activation::Identity: return x;
  }
  return x;
}

GatLayer::GatLayer(const std::string& name, std::size_t n_heads, Eigen::Index input, Eigen::Index output) {
  for (std::size_t b = 0; b < n_heads; ++b) {
    const std::string prefix = name + ".head" + std::to_string(b);
    heads.push_back({Parameter(prefix + ".weight", MatrixX::Zero(output, input)),
                     Parameter(prefix + ".attention", MatrixX::Zero(2 * output, 1))});
  }
}

std::vector<Parameter*> GatLayer::parameters() {
  std::vector<Parameter*> out;
  for (auto& h : heads) {
    out.push_back(&h.weight);
    out.push_back(&h.attention);
  }
  return out;
}

GraphNetwork::GraphNetwork(const std::string& name, std::size_t n_m, Eigen::Index embed)
    : first(name + ".layer1", 2, static_cast<Eigen::Index>(n_m), embed),
      second(name + ".layer2", 1, 2 * embed, embed) {}

std::vector<Parameter*> GraphNetwork::parameters() {
  auto out = first.parameters();
  for (auto* p : second.parameters()) out.push_back(p);
  return out;
}

VectorX gat_attention_coefficients(const GatHead& head, const MatrixX& projected, std::size_t j,
                                   const std::vector<std::size_t>& neighbors, Real slope) {
  if (neighbors.empty()) throw DataError("graph attention: node " + std::to_string(j) + " has no neighbours");
  const Eigen::Index out = head.weight.rows();
  const auto a_src = head.attention.value().topRows(out);
  const auto a_dst = head.attention.value().bottomRows(out);
  const Real source = a_src.col(0).dot(projected.col(static_cast<Eigen::Index>(j)));
  VectorX e(static_cast<Eigen::Index>(neighbors.size()));
  for (std::size_t n = 0; n < neighbors.size(); ++n) {
    const Real raw = source + a_dst.col(0).dot(projected.col(static_cast<Eigen::Index>(neighbors[n])));
    e[static_cast<Eigen::Index>(n)] = raw > 0 ? raw : slope * raw;
  }
  e = (e.array() - e.maxCoeff()).exp();
  return e / e.sum();
}

GatLayerOutput gat_layer(Tape& tape, const GatLayer& layer, const Var& features, const MatrixX& mask,
                         Activation activation, Real slope) {
  const Eigen::Index n = mask.rows();
  if (mask.cols() != n) throw ShapeError("graph attention: mask must be square");
  if (features.valid() && (features.rows() != layer.input_size() || features.cols() != n))
    throw ShapeError("graph attention: features " + ad::shape_string(features.rows(), features.cols()) +
                     ", layer expects " + ad::shape_string(layer.input_size(), n));
  if (!features.valid() && layer.input_size() != n)
    throw ShapeError("graph attention: identity features need input size " + std::to_string(n));

  GatLayerOutput result;
  std::vector<Var> outputs;
  const Eigen::Index out = layer.output_size();
  for (const auto& head : layer.heads) {
    auto weight = tape.parameter(head.weight);
    // W * I == W for identity features.
    auto projected = features.valid() ? weight * features : weight;
    auto a = tape.parameter(head.attention);
    auto source = ad::transpose(ad::transpose(ad::middle_rows(a, 0, out)) * projected);  // N x 1
    auto target = ad::transpose(ad::middle_rows(a, out, out)) * projected;               // 1 x N
    auto delta = ad::masked_row_softmax(ad::leaky_relu(ad::outer_sum(source, target), slope), mask);
    outputs.push_back(activate(projected * ad::transpose(delta), activation));
    result.attention.push_back(delta);
  }
  result.output = outputs.size() == 1 ? outputs.front() : ad::vcat(outputs);
  return result;
}

GatOutput gat_forward(Tape& tape, const GraphNetwork& network, const MatrixX& mask, Activation activation,
                      Real slope) {
  auto first = gat_layer(tape, network.first, Var{}, mask, activation, slope);
  auto second = gat_layer(tape, network.second, first.output, mask, activation, slope);
  GatOutput out{second.output, first.attention};
  for (const auto& a : second.attention) out.attention.push_back(a);
  return out;
}

DrugRead drug_memory_read(const std::optional<Var>& z_c, const std::optional<Var>& z_d, const Var& query,
                          const Var& w3) {
  if (!z_c && !z_d) throw Error("drug_memory_read: no drug representations");
  Var z;
  if (z_c && z_d)
    z = *z_c + ad::scalar_mul(w3, *z_d);
  else if (z_c)
    z = *z_c;
  else
    z = ad::scalar_mul(w3, *z_d);
  if (z.rows() != query.rows()) throw ShapeError("drug_memory_read: query size differs from representation size");
  auto lambda = ad::softmax(ad::transpose(z) * query);
  return {lambda, z * lambda};
}

Prediction predict(const Var& query, const std::optional<Var>& read, const Var& w4, const Var& output_weight,
                   const Var& output_bias) {
  Var output = read ? query + ad::scalar_mul(w4, *read) : query;
  if (output_weight.cols() != output.rows() || output_bias.rows() != output_weight.rows())
    throw ShapeError("predict: output layer shape mismatch");
  auto logits = output_weight * output + output_bias;
  return {output, logits, ad::sigmoid(logits)};
}

IndexSet threshold_predictions(const VectorX& probabilities, Real threshold) {
  IndexSet out;
  for (Eigen::Index k = 0; k < probabilities.size(); ++k)
    if (probabilities[k] > threshold) out.push_back(static_cast<std::size_t>(k));
  return out;
}

}  // namespace premier
