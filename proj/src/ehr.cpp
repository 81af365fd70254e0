// SPDX-License-Identifier: Apache-2.0
#include "premier/ehr.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "premier/error.hpp"

namespace premier {

using nlohmann::json;

std::string_view to_string(CodeKind kind) {
  switch (kind) {
    case CodeKind::Diagnosis: return "diagnosis";
    case CodeKind::Procedure: return "procedure";
    case CodeKind::Medication: return "medication";
  }
  return "unknown";
}

CodeVocabulary::CodeVocabulary(CodeKind kind, std::vector<std::string> codes)
    : kind_(kind), codes_(std::move(codes)) {
  std::sort(codes_.begin(), codes_.end());
  lookup_.reserve(codes_.size());
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (!lookup_.emplace(codes_[i], i).second)
      throw DataError("duplicate " + std::string(to_string(kind_)) + " code '" + codes_[i] + "'");
  }
}

const std::string& CodeVocabulary::code(std::size_t index) const {
  if (index >= codes_.size())
    throw EncodingError(std::string(to_string(kind_)) + " index " + std::to_string(index) +
                            " out of range (size " + std::to_string(codes_.size()) + ")",
                        index);
  return codes_[index];
}

std::optional<std::size_t> CodeVocabulary::find(std::string_view code) const {
  auto it = lookup_.find(std::string(code));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t CodeVocabulary::index(std::string_view code) const {
  auto found = find(code);
  if (!found) throw DataError("unknown " + std::string(to_string(kind_)) + " code '" + std::string(code) + "'");
  return *found;
}

const CodeVocabulary& Vocabularies::of(CodeKind kind) const {
  switch (kind) {
    case CodeKind::Diagnosis: return vocab_d;
    case CodeKind::Procedure: return vocab_p;
    case CodeKind::Medication: return vocab_m;
  }
  return vocab_d;
}

IndexSet normalize(IndexSet indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  return indices;
}

std::size_t Cohort::num_visits() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.visits.size();
  return n;
}

Cohort Cohort::empty_like() const {
  Cohort out;
  out.vocab_d = vocab_d;
  out.vocab_p = vocab_p;
  out.vocab_m = vocab_m;
  return out;
}

void Cohort::validate() const {
  auto check = [](const IndexSet& set, const CodeVocabulary& vocab, const std::string& pid) {
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (set[k] >= vocab.size())
        throw DataError("patient " + pid + ": " + std::string(to_string(vocab.kind())) + " index " +
                        std::to_string(set[k]) + " out of range");
      if (k > 0 && set[k] <= set[k - 1])
        throw DataError("patient " + pid + ": code set not sorted/unique");
    }
  };
  for (const auto& r : records) {
    if (r.visits.empty()) throw DataError("patient " + r.patient_id + " has no visits");
    for (const auto& v : r.visits) {
      check(v.diagnoses, vocab_d, r.patient_id);
      check(v.procedures, vocab_p, r.patient_id);
      check(v.medications, vocab_m, r.patient_id);
    }
  }
}

MultiHotVector::MultiHotVector(std::size_t dims, IndexSet active)
    : dims_(dims), active_(normalize(std::move(active))) {
  for (auto i : active_)
    if (i >= dims_)
      throw EncodingError("multi-hot index " + std::to_string(i) + " out of range for " +
                              std::to_string(dims_) + " dims",
                          i);
}

Eigen::VectorXd MultiHotVector::dense() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dims_));
  for (auto i : active_) v[static_cast<Eigen::Index>(i)] = 1.0;
  return v;
}

MultiHotVector encode_multi_hot(const IndexSet& codes, std::size_t dims) {
  return MultiHotVector(dims, codes);
}

Cohort filter_min_visits(const Cohort& cohort, std::size_t min_visits) {
  if (min_visits < 1) throw ConfigError("min_visits must be >= 1");
  Cohort out = cohort.empty_like();
  for (const auto& r : cohort.records)
    if (r.visits.size() >= min_visits) out.records.push_back(r);
  return out;
}

CohortSplit split_cohort(const Cohort& cohort, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0))
    throw ConfigError("split ratios must be positive");
  const std::size_t n = cohort.size();
  if (n < 3) throw DataError("cannot split " + std::to_string(n) + " patients into 3 partitions");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double total = ratios.train + ratios.validation + ratios.test;
  const double quota[3] = {n * ratios.train / total, n * ratios.validation / total,
                           n * ratios.test / total};
  std::size_t sizes[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(quota[i]);
    assigned += sizes[i];
  }
  // Largest remainder; earlier partitions win ties.
  std::vector<int> by_remainder = {0, 1, 2};
  std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](int a, int b) {
    return quota[a] - sizes[a] > quota[b] - sizes[b];
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[by_remainder[k % 3]];
  // Every partition gets at least one patient.
  for (int i = 0; i < 3; ++i) {
    if (sizes[i] == 0) {
      auto donor = std::max_element(sizes, sizes + 3);
      --*donor;
      ++sizes[i];
    }
  }

  CohortSplit split{cohort.empty_like(), cohort.empty_like(), cohort.empty_like()};
  Cohort* parts[3] = {&split.train, &split.validation, &split.test};
  std::size_t pos = 0;
  for (int p = 0; p < 3; ++p)
    for (std::size_t k = 0; k < sizes[p]; ++k) parts[p]->records.push_back(cohort.records[order[pos++]]);
  return split;
}

Cohort select_patients(const Cohort& cohort, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < cohort.records.size(); ++i) by_id.emplace(cohort.records[i].patient_id, i);
  Cohort out = cohort.empty_like();
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("patient '" + id + "' not in cohort");
    out.records.push_back(cohort.records[it->second]);
  }
  return out;
}

namespace {

std::vector<std::string> read_codes(const json& visit, const char* key, std::size_t line) {
  std::vector<std::string> codes;
  auto it = visit.find(key);
  if (it == visit.end()) return codes;
  if (!it->is_array()) throw SchemaError(std::string("field '") + key + "' must be an array", line);
  for (const auto& c : *it) {
    if (!c.is_string()) throw SchemaError(std::string("field '") + key + "' must hold strings", line);
    codes.push_back(c.get<std::string>());
  }
  return codes;
}

struct RawRecord {
  std::string patient_id;
  std::vector<CodedVisit> visits;
};

IndexSet to_indices(const std::vector<std::string>& codes, const CodeVocabulary& vocab) {
  IndexSet out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(vocab.index(c));
  return normalize(std::move(out));
}

}  // namespace

Cohort read_cohort(std::istream& in) {
  std::vector<RawRecord> raw;
  std::set<std::string> dcodes, pcodes, mcodes;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line);
    }
    if (!j.is_object()) throw ParseError("record must be a JSON object", line);
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "patient_id" && it.key() != "visits")
        throw SchemaError("unknown field '" + it.key() + "'", line);
    if (!j.contains("patient_id") || !j["patient_id"].is_string())
      throw SchemaError("missing string field 'patient_id'", line);
    if (!j.contains("visits") || !j["visits"].is_array() || j["visits"].empty())
      throw SchemaError("field 'visits' must be a nonempty array", line);
    RawRecord rec{j["patient_id"].get<std::string>(), {}};
    for (const auto& v : j["visits"]) {
      if (!v.is_object()) throw SchemaError("visit must be an object", line);
      for (auto it = v.begin(); it != v.end(); ++it)
        if (it.key() != "d" && it.key() != "p" && it.key() != "m")
          throw SchemaError("unknown visit field '" + it.key() + "'", line);
      CodedVisit cv{read_codes(v, "d", line), read_codes(v, "p", line), read_codes(v, "m", line)};
      dcodes.insert(cv.diagnoses.begin(), cv.diagnoses.end());
      pcodes.insert(cv.procedures.begin(), cv.procedures.end());
      mcodes.insert(cv.medications.begin(), cv.medications.end());
      rec.visits.push_back(std::move(cv));
    }
    raw.push_back(std::move(rec));
  }

  Cohort cohort;
  cohort.vocab_d = CodeVocabulary(CodeKind::Diagnosis, {dcodes.begin(), dcodes.end()});
  cohort.vocab_p = CodeVocabulary(CodeKind::Procedure, {pcodes.begin(), pcodes.end()});
  cohort.vocab_m = CodeVocabulary(CodeKind::Medication, {mcodes.begin(), mcodes.end()});
  cohort.records.reserve(raw.size());
  for (const auto& r : raw) {
    PatientRecord rec{r.patient_id, {}};
    for (const auto& v : r.visits)
      rec.visits.push_back(Visit{to_indices(v.diagnoses, cohort.vocab_d),
                                 to_indices(v.procedures, cohort.vocab_p),
                                 to_indices(v.medications, cohort.vocab_m)});
    cohort.records.push_back(std::move(rec));
  }
  return cohort;
}

Cohort load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cohort file " + path.string());
  return read_cohort(in);
}

void write_cohort(const Cohort& cohort, std::ostream& out) {
  auto codes = [](const IndexSet& set, const CodeVocabulary& vocab) {
    json arr = json::array();
    for (auto i : set) arr.push_back(vocab.code(i));
    return arr;
  };
  for (const auto& r : cohort.records) {
    nlohmann::ordered_json j;
    j["patient_id"] = r.patient_id;
    j["visits"] = nlohmann::ordered_json::array();
    for (const auto& v : r.visits) {
      nlohmann::ordered_json visit;
      visit["d"] = codes(v.diagnoses, cohort.vocab_d);
      visit["p"] = codes(v.procedures, cohort.vocab_p);
      visit["m"] = codes(v.medications, cohort.vocab_m);
      j["visits"].push_back(std::move(visit));
    }
    out << j.dump() << '\n';
  }
}

void save_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write cohort file " + path.string());
  write_cohort(cohort, out);
}

Visit resolve_visit(const CodedVisit& visit, const Vocabularies& vocabs, std::size_t visit_index,
                    std::vector<UnrecognizedCode>& unrecognized) {
  auto resolve = [&](const std::vector<std::string>& codes, const CodeVocabulary& vocab) {
    IndexSet out;
    for (const auto& c : codes) {
      if (auto idx = vocab.find(c))
        out.push_back(*idx);
      else
        unrecognized.push_back({vocab.kind(), c, visit_index});
    }
    return normalize(std::move(out));
  };
  return Visit{resolve(visit.diagnoses, vocabs.vocab_d), resolve(visit.procedures, vocabs.vocab_p),
               resolve(visit.medications, vocabs.vocab_m)};
}

CodedVisit to_coded(const Visit& visit, const Vocabularies& vocabs) {
  auto codes = [](const IndexSet& set, const CodeVocabulary& vocab) {
    std::vector<std::string> out;
    for (auto i : set) out.push_back(vocab.code(i));
    return out;
  };
  return CodedVisit{codes(visit.diagnoses, vocabs.vocab_d), codes(visit.procedures, vocabs.vocab_p),
                    codes(visit.medications, vocabs.vocab_m)};
}

}  // namespace premier
