// SPDX-License-Identifier: Apache-2.0
//
// Rule-driven synthetic EHR cohorts with known ground-truth structure.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "premier/drug_graph.hpp"
#include "premier/ehr.hpp"

namespace premier {

/// Antecedent diagnoses imply consequent medications.
struct MedicationRule {
  IndexSet antecedent;
  IndexSet consequent;
};

struct ExplicitRule {
  std::vector<std::string> antecedent;
  std::vector<std::string> consequent;
};

struct GeneratorConfig {
  std::size_t patients = 500;
  std::size_t diagnoses = 30;
  std::size_t procedures = 10;
  std::size_t medications = 40;

  double mean_diagnoses = 6.0;
  double mean_procedures = 2.0;
  double mean_medications = 8.0;

  std::size_t min_visits = 2;
  std::size_t max_visits = 5;
  double mean_visits = 2.36;

  // Carried into every visit of a patient so history is informative.
  std::size_t chronic_diagnoses = 2;
  // Size of each patient's recurring medication list; used to fill visits up
  // to their sampled medication count.
  std::size_t medication_pool = 6;
  // Draw pools only from medications no rule prescribes, so every rule
  // consequent is explained by its antecedent alone.
  bool pool_excludes_rule_medications = false;

  std::size_t rules = 12;
  std::size_t rule_antecedent = 1;
  std::size_t rule_consequent = 2;
  std::vector<ExplicitRule> explicit_rules;

  double noise = 0.1;
  double ddi_overlap = 0.3;
  std::size_t ddi_random_pairs = 20;

  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. A `rule` line has the form
/// `rule = D001,D004 -> M003,M010` and may repeat.
GeneratorConfig parse_generator_config(std::istream& in);
GeneratorConfig load_generator_config(const std::filesystem::path& path);

struct SyntheticCohort {
  Cohort cohort;
  std::vector<MedicationRule> rules;
  std::vector<InteractionRecord> interactions;
};

SyntheticCohort generate_synthetic_cohort(const GeneratorConfig& config, std::uint64_t seed);

/// Fraction of (visit, rule) pairs with the antecedent present whose consequent is fully prescribed.
double rule_satisfaction_rate(const Cohort& cohort, const std::vector<MedicationRule>& rules);

std::string diagnosis_code(std::size_t i);
std::string procedure_code(std::size_t i);
std::string medication_code(std::size_t i);

}  // namespace premier
