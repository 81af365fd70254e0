// SPDX-License-Identifier: Apache-2.0
//
// Patient/visit data model, code vocabularies and cohort file I/O.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace premier {

enum class CodeKind { Diagnosis, Procedure, Medication };

std::string_view to_string(CodeKind kind);

/// Bijective code <-> index map over one coding system.
class CodeVocabulary {
 public:
  CodeVocabulary() = default;
  /// Codes are sorted and must be unique.
  CodeVocabulary(CodeKind kind, std::vector<std::string> codes);

  CodeKind kind() const { return kind_; }
  std::size_t size() const { return codes_.size(); }
  const std::vector<std::string>& codes() const { return codes_; }
  const std::string& code(std::size_t index) const;
  std::optional<std::size_t> find(std::string_view code) const;
  std::size_t index(std::string_view code) const;

  friend bool operator==(const CodeVocabulary& a, const CodeVocabulary& b) {
    return a.kind_ == b.kind_ && a.codes_ == b.codes_;
  }

 private:
  CodeKind kind_ = CodeKind::Diagnosis;
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

using IndexSet = std::vector<std::size_t>;

/// Sorts and removes duplicates.
IndexSet normalize(IndexSet indices);

struct Visit {
  IndexSet diagnoses;
  IndexSet procedures;
  IndexSet medications;

  friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;

  std::size_t num_visits() const { return visits.size(); }
  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Vocabularies {
  CodeVocabulary vocab_d{CodeKind::Diagnosis, {}};
  CodeVocabulary vocab_p{CodeKind::Procedure, {}};
  CodeVocabulary vocab_m{CodeKind::Medication, {}};

  const CodeVocabulary& of(CodeKind kind) const;
  friend bool operator==(const Vocabularies&, const Vocabularies&) = default;
};

struct Cohort {
  std::vector<PatientRecord> records;
  CodeVocabulary vocab_d{CodeKind::Diagnosis, {}};
  CodeVocabulary vocab_p{CodeKind::Procedure, {}};
  CodeVocabulary vocab_m{CodeKind::Medication, {}};

  Vocabularies vocabularies() const { return {vocab_d, vocab_p, vocab_m}; }

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::size_t num_visits() const;
  /// Same vocabularies, no records.
  Cohort empty_like() const;
  /// Throws DataError when any index is out of range for its vocabulary.
  void validate() const;
};

class MultiHotVector {
 public:
  MultiHotVector(std::size_t dims, IndexSet active);
  std::size_t dims() const { return dims_; }
  const IndexSet& active() const { return active_; }
  Eigen::VectorXd dense() const;

 private:
  std::size_t dims_;
  IndexSet active_;
};

/// Throws EncodingError on an out-of-range index.
MultiHotVector encode_multi_hot(const IndexSet& codes, std::size_t dims);

Cohort filter_min_visits(const Cohort& cohort, std::size_t min_visits);

struct SplitRatios {
  double train = 4.0;
  double validation = 1.0;
  double test = 1.0;
};

struct CohortSplit {
  Cohort train;
  Cohort validation;
  Cohort test;
};

/// Patient-level shuffle-and-cut. Sizes use largest-remainder rounding.
CohortSplit split_cohort(const Cohort& cohort, SplitRatios ratios, std::uint64_t seed);

/// Keeps records whose patient id is listed, in the order given by `ids`.
Cohort select_patients(const Cohort& cohort, const std::vector<std::string>& ids);

// Line-delimited JSON cohort files:
//   {"patient_id": "...", "visits": [{"d": [...], "p": [...], "m": [...]}, ...]}
Cohort load_cohort(const std::filesystem::path& path);
Cohort read_cohort(std::istream& in);
/// Vocabularies are rebuilt from the observed codes when reading.
void save_cohort(const Cohort& cohort, const std::filesystem::path& path);
void write_cohort(const Cohort& cohort, std::ostream& out);

/// Raw (code-string) visit, used for requests that may carry unknown codes.
struct CodedVisit {
  std::vector<std::string> diagnoses;
  std::vector<std::string> procedures;
  std::vector<std::string> medications;
};

struct UnrecognizedCode {
  CodeKind kind;
  std::string code;
  std::size_t visit;
};

/// Maps codes to indices; unknown codes are collected rather than dropped silently.
Visit resolve_visit(const CodedVisit& visit, const Vocabularies& vocabs, std::size_t visit_index,
                    std::vector<UnrecognizedCode>& unrecognized);

CodedVisit to_coded(const Visit& visit, const Vocabularies& vocabs);

}  // namespace premier
