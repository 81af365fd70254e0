// SPDX-License-Identifier: Apache-2.0
#include "premier/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "premier/error.hpp"

namespace premier {

namespace {

std::string padded(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> make_codes(char prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(padded(prefix, i));
  return out;
}

/// `count` distinct values from [0, n), sorted.
IndexSet sample_distinct(std::size_t count, std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(count, n));
  return normalize(std::move(all));
}

std::size_t clamped_poisson(double mean, std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  std::size_t v = 0;
  if (mean > 0.0) v = static_cast<std::size_t>(std::poisson_distribution<long>(mean)(rng));
  return std::clamp(v, lo, hi);
}

}  // namespace

std::string diagnosis_code(std::size_t i) { return padded('D', i); }
std::string procedure_code(std::size_t i) { return padded('P', i); }
std::string medication_code(std::size_t i) { return padded('M', i); }

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("generator config: " + msg); };
  if (patients == 0 || diagnoses == 0 || medications == 0) fail("sizes must be positive");
  if (mean_diagnoses <= 0.0 || mean_medications <= 0.0) fail("mean diagnosis/medication counts must be positive");
  if (mean_procedures < 0.0) fail("mean_procedures must be nonnegative");
  if (mean_diagnoses > static_cast<double>(diagnoses)) fail("mean_diagnoses exceeds diagnosis vocabulary");
  if (mean_procedures > static_cast<double>(procedures)) fail("mean_procedures exceeds procedure vocabulary");
  if (mean_medications > static_cast<double>(medications)) fail("mean_medications exceeds medication vocabulary");
  if (min_visits < 1 || max_visits < min_visits) fail("visit bounds invalid");
  if (mean_visits < static_cast<double>(min_visits) || mean_visits > static_cast<double>(max_visits))
    fail("mean_visits outside [min_visits, max_visits]");
  if (chronic_diagnoses > diagnoses) fail("chronic_diagnoses exceeds diagnosis vocabulary");
  if (medication_pool > medications) fail("medication_pool exceeds medication vocabulary");
  if (rules > 0 && (rule_antecedent == 0 || rule_consequent == 0)) fail("rule sizes must be positive");
  if (rule_antecedent > diagnoses) fail("rule_antecedent exceeds diagnosis vocabulary");
  if (rule_consequent > medications) fail("rule_consequent exceeds medication vocabulary");
  if (noise < 0.0 || noise > 1.0) fail("noise must lie in [0,1]");
  if (ddi_overlap < 0.0 || ddi_overlap > 1.0) fail("ddi_overlap must lie in [0,1]");
  if (ddi_random_pairs > medications * (medications - 1) / 2) fail("ddi_random_pairs exceeds available pairs");
}

GeneratorConfig parse_generator_config(std::istream& in) {
  GeneratorConfig cfg;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    try {
      auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
      auto as_double = [&] { return std::stod(value); };
      if (key == "patients") cfg.patients = as_size();
      else if (key == "diagnoses") cfg.diagnoses = as_size();
      else if (key == "procedures") cfg.procedures = as_size();
      else if (key == "medications") cfg.medications = as_size();
      else if (key == "mean_diagnoses") cfg.mean_diagnoses = as_double();
      else if (key == "mean_procedures") cfg.mean_procedures = as_double();
      else if (key == "mean_medications") cfg.mean_medications = as_double();
      else if (key == "min_visits") cfg.min_visits = as_size();
      else if (key == "max_visits") cfg.max_visits = as_size();
      else if (key == "mean_visits") cfg.mean_visits = as_double();
      else if (key == "chronic_diagnoses") cfg.chronic_diagnoses = as_size();
      else if (key == "medication_pool") cfg.medication_pool = as_size();
      else if (key == "pool_excludes_rule_medications") {
        if (value != "true" && value != "false") throw ParseError("expected true or false", line);
        cfg.pool_excludes_rule_medications = value == "true";
      }
      else if (key == "rules") cfg.rules = as_size();
      else if (key == "rule_antecedent") cfg.rule_antecedent = as_size();
      else if (key == "rule_consequent") cfg.rule_consequent = as_size();
      else if (key == "noise") cfg.noise = as_double();
      else if (key == "ddi_overlap") cfg.ddi_overlap = as_double();
      else if (key == "ddi_random_pairs") cfg.ddi_random_pairs = as_size();
      else if (key == "rule") {
        const auto arrow = value.find("->");
        if (arrow == std::string::npos) throw ParseError("rule needs 'antecedents -> consequents'", line);
        ExplicitRule rule{split_list(value.substr(0, arrow)), split_list(value.substr(arrow + 2))};
        if (rule.antecedent.empty() || rule.consequent.empty()) throw ParseError("rule sides must be nonempty", line);
        cfg.explicit_rules.push_back(std::move(rule));
      } else {
        throw ConfigError("generator config line " + std::to_string(line) + ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ParseError("bad value for '" + key + "'", line);
    } catch (const std::out_of_range&) {
      throw ParseError("value out of range for '" + key + "'", line);
    }
  }
  return cfg;
}

GeneratorConfig load_generator_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open generator config " + path.string());
  return parse_generator_config(in);
}

SyntheticCohort generate_synthetic_cohort(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticCohort out;
  Cohort& cohort = out.cohort;
  cohort.vocab_d = CodeVocabulary(CodeKind::Diagnosis, make_codes('D', config.diagnoses));
  cohort.vocab_p = CodeVocabulary(CodeKind::Procedure, make_codes('P', config.procedures));
  cohort.vocab_m = CodeVocabulary(CodeKind::Medication, make_codes('M', config.medications));

  for (const auto& r : config.explicit_rules) {
    MedicationRule rule;
    for (const auto& c : r.antecedent) {
      auto idx = cohort.vocab_d.find(c);
      if (!idx) throw ConfigError("rule antecedent '" + c + "' is not a generated diagnosis code");
      rule.antecedent.push_back(*idx);
    }
    for (const auto& c : r.consequent) {
      auto idx = cohort.vocab_m.find(c);
      if (!idx) throw ConfigError("rule consequent '" + c + "' is not a generated medication code");
      rule.consequent.push_back(*idx);
    }
    rule.antecedent = normalize(std::move(rule.antecedent));
    rule.consequent = normalize(std::move(rule.consequent));
    out.rules.push_back(std::move(rule));
  }
  for (std::size_t r = 0; r < config.rules; ++r)
    out.rules.push_back({sample_distinct(config.rule_antecedent, config.diagnoses, rng),
                         sample_distinct(config.rule_consequent, config.medications, rng)});

  std::vector<std::size_t> pool_candidates;
  {
    std::set<std::size_t> prescribed;
    if (config.pool_excludes_rule_medications)
      for (const auto& rule : out.rules) prescribed.insert(rule.consequent.begin(), rule.consequent.end());
    for (std::size_t m = 0; m < config.medications; ++m)
      if (!prescribed.count(m)) pool_candidates.push_back(m);
    if (pool_candidates.size() < config.medication_pool)
      throw ConfigError("generator config: only " + std::to_string(pool_candidates.size()) +
                        " medications outside the rules for a pool of " + std::to_string(config.medication_pool));
  }

  const double extra_visits = config.mean_visits - static_cast<double>(config.min_visits);
  for (std::size_t p = 0; p < config.patients; ++p) {
    PatientRecord record;
    record.patient_id = padded('S', p);

    const std::size_t t = clamped_poisson(extra_visits, 0, config.max_visits - config.min_visits, rng) +
                          config.min_visits;
    IndexSet chronic = sample_distinct(config.chronic_diagnoses, config.diagnoses, rng);
    std::shuffle(chronic.begin(), chronic.end(), rng);
    std::vector<std::size_t> pool = pool_candidates;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(config.medication_pool);

    for (std::size_t v = 0; v < t; ++v) {
      Visit visit;
      const std::size_t nd = clamped_poisson(config.mean_diagnoses, 1, config.diagnoses, rng);
      std::set<std::size_t> diag(chronic.begin(), chronic.begin() + std::min(nd, chronic.size()));
      std::uniform_int_distribution<std::size_t> pick_d(0, config.diagnoses - 1);
      while (diag.size() < nd) diag.insert(pick_d(rng));
      visit.diagnoses.assign(diag.begin(), diag.end());

      const std::size_t np = clamped_poisson(config.mean_procedures, 0, config.procedures, rng);
      visit.procedures = sample_distinct(np, config.procedures, rng);

      std::set<std::size_t> meds;
      for (const auto& rule : out.rules) {
        const bool applies = std::includes(visit.diagnoses.begin(), visit.diagnoses.end(),
                                           rule.antecedent.begin(), rule.antecedent.end());
        if (applies && unit(rng) >= config.noise) meds.insert(rule.consequent.begin(), rule.consequent.end());
      }
      if (config.noise > 0.0 && unit(rng) < config.noise)
        meds.insert(std::uniform_int_distribution<std::size_t>(0, config.medications - 1)(rng));
      const std::size_t nm = clamped_poisson(config.mean_medications, 1, config.medications, rng);
      for (std::size_t k = 0; k < pool.size() && meds.size() < nm; ++k) meds.insert(pool[k]);
      visit.medications.assign(meds.begin(), meds.end());
      record.visits.push_back(std::move(visit));
    }
    cohort.records.push_back(std::move(record));
  }

  // Interactions: a fraction of rule co-prescribed pairs plus random pairs.
  std::set<std::pair<std::size_t, std::size_t>> coprescribed;
  for (const auto& rule : out.rules)
    for (std::size_t a = 0; a < rule.consequent.size(); ++a)
      for (std::size_t b = a + 1; b < rule.consequent.size(); ++b)
        coprescribed.emplace(rule.consequent[a], rule.consequent[b]);
  std::vector<std::pair<std::size_t, std::size_t>> candidates(coprescribed.begin(), coprescribed.end());
  std::shuffle(candidates.begin(), candidates.end(), rng);
  const auto planted = static_cast<std::size_t>(std::llround(config.ddi_overlap * static_cast<double>(candidates.size())));
  std::set<std::pair<std::size_t, std::size_t>> interacting(candidates.begin(), candidates.begin() + planted);
  std::uniform_int_distribution<std::size_t> pick_m(0, config.medications - 1);
  const std::size_t target = std::min(interacting.size() + config.ddi_random_pairs,
                                      config.medications * (config.medications - 1) / 2);
  while (interacting.size() < target) {
    auto a = pick_m(rng), b = pick_m(rng);
    if (a == b) continue;
    interacting.emplace(std::min(a, b), std::max(a, b));
  }
  std::uniform_int_distribution<std::int64_t> reports(1, 500);
  for (const auto& [a, b] : interacting)
    out.interactions.push_back({cohort.vocab_m.code(a), cohort.vocab_m.code(b), reports(rng)});
  return out;
}

double rule_satisfaction_rate(const Cohort& cohort, const std::vector<MedicationRule>& rules) {
  std::size_t applicable = 0, satisfied = 0;
  for (const auto& record : cohort.records)
    for (const auto& visit : record.visits)
      for (const auto& rule : rules) {
        if (!std::includes(visit.diagnoses.begin(), visit.diagnoses.end(), rule.antecedent.begin(),
                           rule.antecedent.end()))
          continue;
        ++applicable;
        if (std::includes(visit.medications.begin(), visit.medications.end(), rule.consequent.begin(),
                          rule.consequent.end()))
          ++satisfied;
      }
  return applicable == 0 ? 1.0 : static_cast<double>(satisfied) / static_cast<double>(applicable);
}

}  // namespace premier
