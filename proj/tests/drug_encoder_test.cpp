// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradient_suite.hpp"
#include "premier/drug_encoder.hpp"
#include "premier/error.hpp"

namespace premier {
namespace {

using testing::random_matrix;

// Attention weights from the raw formula: softmax over neighbours of
// leakyReLU(a . [W n_j ; W n_k]).
std::vector<double> oracle_coefficients(const MatrixX& w, const MatrixX& a, const MatrixX& features, std::size_t j,
                                        const std::vector<std::size_t>& nbrs, double slope) {
  const MatrixX wn = w * features;
  std::vector<double> e;
  for (std::size_t k : nbrs) {
    double s = 0;
    for (Eigen::Index d = 0; d < wn.rows(); ++d)
      s += a(d, 0) * wn(d, static_cast<Eigen::Index>(j)) + a(wn.rows() + d, 0) * wn(d, static_cast<Eigen::Index>(k));
    e.push_back(s > 0 ? s : slope * s);
  }
  double mx = *std::max_element(e.begin(), e.end()), total = 0;
  for (auto& x : e) total += (x = std::exp(x - mx));
  for (auto& x : e) x /= total;
  return e;
}

std::vector<std::size_t> mask_neighbors(const MatrixX& mask, std::size_t j) {
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < mask.cols(); ++k)
    if (mask(static_cast<Eigen::Index>(j), k) != 0) out.push_back(static_cast<std::size_t>(k));
  return out;
}

GraphNetwork random_network(std::mt19937_64& rng, std::size_t n, Eigen::Index embed) {
  GraphNetwork net("g", n, embed);
  for (auto* p : net.parameters()) p->value() = random_matrix(rng, p->rows(), p->cols(), 0.6);
  return net;
}

TEST(GatCoefficients, SingletonAndSymmetricNeighbourhoods) {
  std::mt19937_64 rng(1);
  GatHead head{Parameter("w", random_matrix(rng, 3, 4)), Parameter("a", random_matrix(rng, 6, 1))};
  const MatrixX projected = random_matrix(rng, 3, 4);
  EXPECT_NEAR(gat_attention_coefficients(head, projected, 1, {2})[0], 1.0, 1e-15);
  MatrixX same = projected;
  same.col(3) = same.col(2);
  const auto d = gat_attention_coefficients(head, same, 0, {2, 3});
  EXPECT_NEAR(d[0], 0.5, 1e-15);
  EXPECT_NEAR(d[1], 0.5, 1e-15);
  EXPECT_THROW(gat_attention_coefficients(head, projected, 0, {}), DataError);
}

TEST(GatCoefficients, RandomGraphsMatchFormula) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 4;
    GatLayer layer("l", 2, 4, 3);
    for (auto* p : layer.parameters()) p->value() = random_matrix(rng, p->rows(), p->cols());
    const MatrixX mask = testing::random_adjacency(rng, n, 0.5) + MatrixX::Identity(4, 4);
    Tape t(false);
    const auto out = gat_layer(t, layer, Var{}, mask, Activation::Tanh);
    for (std::size_t b = 0; b < 2; ++b) {
      const auto& head = layer.heads[b];
      const MatrixX delta = out.attention[b].value();
      for (std::size_t j = 0; j < n; ++j) {
        const auto nbrs = mask_neighbors(mask, j);
        const auto expected = oracle_coefficients(head.weight.value(), head.attention.value(), MatrixX::Identity(4, 4), j,
                                                  nbrs, 0.2);
        const auto lib = gat_attention_coefficients(head, head.weight.value(), j, nbrs);
        for (std::size_t i = 0; i < nbrs.size(); ++i) {
          EXPECT_NEAR(delta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(nbrs[i])), expected[i], 1e-12);
          EXPECT_NEAR(lib[static_cast<Eigen::Index>(i)], expected[i], 1e-12);
        }
        EXPECT_NEAR(delta.row(static_cast<Eigen::Index>(j)).sum(), 1.0, 1e-12);
      }
      // Output: tanh(sum_k delta_jk W n_k).
      const MatrixX expected_out = (head.weight.value() * delta.transpose()).array().tanh().matrix();
      EXPECT_LE((out.output.value().middleRows(static_cast<Eigen::Index>(3 * b), 3) - expected_out).cwiseAbs().maxCoeff(),
                1e-12);
    }
  }
}

TEST(GatForward, IsolatedNodesSeeOnlyThemselves) {
  std::mt19937_64 rng(2);
  auto net = random_network(rng, 5, 3);
  const MatrixX mask = MatrixX::Identity(5, 5);
  Tape t1(false);
  const MatrixX base = gat_forward(t1, net, mask, Activation::Tanh).representation.value();
  net.first.heads[0].weight.value().col(4).setConstant(9.0);
  net.first.heads[1].weight.value().col(4).setConstant(-9.0);
  Tape t2(false);
  const MatrixX changed = gat_forward(t2, net, mask, Activation::Tanh).representation.value();
  EXPECT_EQ(changed.leftCols(4), base.leftCols(4));
  EXPECT_NE(changed.col(4), base.col(4));
}

TEST(GatForward, PermutationEquivariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 3 + seed % 8;
    auto net = random_network(rng, n, 3);
    const MatrixX mask = testing::random_adjacency(rng, n, 0.4) + MatrixX::Identity(n, n);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(Eigen::Map<Eigen::VectorXi>(perm.data(), static_cast<Eigen::Index>(n)));
    const MatrixX pm = p;
    auto permuted = net;
    for (auto& head : permuted.first.heads) head.weight.value() = head.weight.value() * pm.transpose();
    Tape t1(false), t2(false);
    const MatrixX z = gat_forward(t1, net, mask, Activation::Tanh).representation.value();
    const MatrixX zp = gat_forward(t2, permuted, pm * mask * pm.transpose(), Activation::Tanh).representation.value();
    EXPECT_LE((zp - z * pm.transpose()).cwiseAbs().maxCoeff(), 1e-12) << "n=" << n;
  }
}

TEST(GatForward, ZeroWeightsGiveConstantRepresentation) {
  GraphNetwork net("g", 4, 3);
  std::mt19937_64 rng(3);
  for (auto* p : net.parameters()) p->value() = random_matrix(rng, p->rows(), p->cols());
  for (auto* layer : {&net.first, &net.second})
    for (auto& h : layer->heads) h.weight.value().setZero();
  Tape t(false);
  EXPECT_EQ(gat_forward(t, net, MatrixX::Ones(4, 4), Activation::Tanh).representation.value(), MatrixX::Zero(3, 4));
  EXPECT_EQ(gat_forward(t, net, MatrixX::Ones(4, 4), Activation::Sigmoid).representation.value(),
            MatrixX::Constant(3, 4, 0.5));
}

TEST(GatForward, ShapeErrors) {
  GraphNetwork net("g", 4, 3);
  Tape t(false);
  EXPECT_THROW(gat_forward(t, net, MatrixX::Identity(5, 5), Activation::Tanh), ShapeError);
}

TEST(DrugMemoryRead, ClosedForms) {
  std::mt19937_64 rng(4);
  Tape t(false);
  auto zc = t.constant(random_matrix(rng, 3, 5));
  auto zd = t.constant(random_matrix(rng, 3, 5));
  auto w3 = t.constant(MatrixX::Constant(1, 1, 0.0));
  const auto uniform = drug_memory_read(zc, zd, t.constant(MatrixX::Zero(3, 1)), w3);
  EXPECT_LE((uniform.lambda.value().array() - 0.2).abs().maxCoeff(), 1e-15);
  auto q = t.constant(random_matrix(rng, 3, 1));
  const auto c_only = drug_memory_read(zc, std::nullopt, q, w3);
  const auto w3_zero = drug_memory_read(zc, zd, q, w3);
  EXPECT_LE((c_only.read.value() - w3_zero.read.value()).cwiseAbs().maxCoeff(), 1e-15);
  const auto single = drug_memory_read(t.constant(random_matrix(rng, 3, 1)), std::nullopt, q, w3);
  EXPECT_EQ(single.lambda.value(), MatrixX::Constant(1, 1, 1.0));
  EXPECT_THROW(drug_memory_read(std::nullopt, std::nullopt, q, w3), Error);
}

TEST(Predict, ThresholdIsStrict) {
  Tape t(false);
  auto q = t.constant(MatrixX::Zero(3, 1));
  auto pred = predict(q, std::nullopt, t.constant(MatrixX::Ones(1, 1)), t.constant(MatrixX::Ones(4, 3)),
                      t.constant(MatrixX::Zero(4, 1)));
  EXPECT_EQ(pred.probabilities.value(), MatrixX::Constant(4, 1, 0.5));
  EXPECT_TRUE(threshold_predictions(pred.probabilities.value().col(0)).empty());
  MatrixX bias = MatrixX::Zero(4, 1);
  bias(2, 0) = 50;
  auto big = predict(q, std::nullopt, t.constant(MatrixX::Ones(1, 1)), t.constant(MatrixX::Ones(4, 3)), t.constant(bias));
  EXPECT_NEAR(big.probabilities.value()(2, 0), 1.0, 1e-15);
  EXPECT_EQ(threshold_predictions(big.probabilities.value().col(0)), (IndexSet{2}));
}

TEST(DrugEncoders, SameShapesDifferentValuesOnRandomInit) {
  auto model = testing::random_model(5);
  const auto drugs = compute_drug_values(model);
  ASSERT_TRUE(drugs.z_c && drugs.z_d);
  EXPECT_EQ(drugs.z_c->rows(), drugs.z_d->rows());
  EXPECT_EQ(drugs.z_c->cols(), drugs.z_d->cols());
  EXPECT_NE(*drugs.z_c, *drugs.z_d);
}

TEST(Ablation, LabelsAndFlags) {
  Ablation a;
  EXPECT_EQ(a.label(), "PREMIER");
  a.disable("no-graphs");
  EXPECT_EQ(a.label(), "PREMIER[diagnosis, procedure, medication]");
  a.disable("no-medmemory");
  EXPECT_EQ(a.label(), "PREMIER[diagnosis, procedure]");
  Ablation b;
  b.disable("no-medmemory");
  EXPECT_EQ(b.label(), "PREMIER[diagnosis, procedure, drug repository]");
  EXPECT_THROW(b.disable("no-such-thing"), ConfigError);
}

}  // namespace
}  // namespace premier
