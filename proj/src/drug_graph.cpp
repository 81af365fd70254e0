// SPDX-License-Identifier: Apache-2.0
#include "premier/drug_graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "premier/error.hpp"

namespace premier {

DrugGraph::DrugGraph(GraphKind kind, Eigen::MatrixXd weights) : kind_(kind), weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols()) throw ShapeError("drug graph must be square");
  for (Eigen::Index j = 0; j < weights_.rows(); ++j) {
    if (weights_(j, j) != 0.0) throw DataError("drug graph diagonal must be zero");
    for (Eigen::Index k = 0; k < weights_.cols(); ++k) {
      if (weights_(j, k) < 0.0) throw DataError("drug graph weights must be nonnegative");
      if (weights_(j, k) != weights_(k, j)) throw DataError("drug graph must be symmetric");
    }
  }
}

std::size_t DrugGraph::num_edges() const {
  return static_cast<std::size_t>((weights_.array() > 0.0).count()) / 2;
}

Eigen::MatrixXd DrugGraph::attention_mask() const {
  Eigen::MatrixXd mask = (weights_.array() > 0.0).cast<double>().matrix();
  mask.diagonal().setOnes();
  return mask;
}

DrugGraph build_cooccurrence(const Cohort& train_cohort) {
  const auto n = static_cast<Eigen::Index>(train_cohort.vocab_m.size());
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& record : train_cohort.records)
    for (const auto& visit : record.visits) {
      const auto& meds = visit.medications;
      for (std::size_t a = 0; a < meds.size(); ++a)
        for (std::size_t b = a + 1; b < meds.size(); ++b) {
          const auto j = static_cast<Eigen::Index>(meds[a]);
          const auto k = static_cast<Eigen::Index>(meds[b]);
          if (j == k) continue;
          counts(j, k) += 1.0;
          counts(k, j) += 1.0;
        }
    }
  return DrugGraph(GraphKind::Cooccurrence, std::move(counts));
}

std::vector<InteractionRecord> read_interactions(std::istream& in) {
  std::vector<InteractionRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty() || text[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) throw ParseError("expected codeA<TAB>codeB<TAB>count", line);
    InteractionRecord rec{fields[0], fields[1], 0};
    try {
      std::size_t used = 0;
      rec.count = std::stoll(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("count '" + fields[2] + "' is not an integer", line);
    }
    if (rec.count < 0) throw DataError("line " + std::to_string(line) + ": negative report count");
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<InteractionRecord> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interaction file " + path.string());
  return read_interactions(in);
}

void save_interactions(const std::vector<InteractionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write interaction file " + path.string());
  for (const auto& r : records) out << r.code_a << '\t' << r.code_b << '\t' << r.count << '\n';
}

InteractionBuild build_interaction(const std::vector<InteractionRecord>& records,
                                   const CodeVocabulary& vocab_m, std::size_t cap) {
  const std::size_t n = vocab_m.size();
  // partners[j][k] = max report count seen for the unordered pair.
  std::vector<std::map<std::size_t, std::int64_t>> partners(n);
  std::size_t skipped = 0;
  for (const auto& r : records) {
    if (r.count < 0) throw DataError("negative report count for " + r.code_a + "/" + r.code_b);
    auto a = vocab_m.find(r.code_a);
    auto b = vocab_m.find(r.code_b);
    if (!a || !b) {
      ++skipped;
      continue;
    }
    if (*a == *b) continue;
    for (auto [j, k] : {std::pair{*a, *b}, std::pair{*b, *a}}) {
      auto& slot = partners[j][k];
      slot = std::max(slot, r.count);
    }
  }

  Eigen::MatrixXd adjacency = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::pair<std::size_t, std::int64_t>> ranked(partners[j].begin(), partners[j].end());
    // map iteration is already in index (= code) order; stable sort keeps it for ties.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    if (ranked.size() > cap) ranked.resize(cap);
    for (const auto& [k, count] : ranked) {
      adjacency(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = 1.0;
      adjacency(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = 1.0;
    }
  }
  return {DrugGraph(GraphKind::Interaction, std::move(adjacency)), skipped};
}

InteractionBuild build_interaction(const std::filesystem::path& pairs_file, const CodeVocabulary& vocab_m,
                                   std::size_t cap) {
  return build_interaction(load_interactions(pairs_file), vocab_m, cap);
}

std::vector<std::size_t> neighbors(const DrugGraph& graph, std::size_t j) {
  if (j >= graph.dims())
    throw EncodingError("drug index " + std::to_string(j) + " out of range", j);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < graph.dims(); ++k)
    if (graph(j, k) > 0.0) out.push_back(k);
  return out;
}

void export_coordinates(const DrugGraph& graph, std::ostream& out) {
  for (std::size_t j = 0; j < graph.dims(); ++j)
    for (std::size_t k = j + 1; k < graph.dims(); ++k)
      if (graph(j, k) > 0.0) out << j << ' ' << k << ' ' << graph(j, k) << '\n';
}

}  // namespace premier
