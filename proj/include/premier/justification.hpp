// SPDX-License-Identifier: Apache-2.0
//
// Additive decomposition of each medication logit into diagnosis, procedure,
// past-medication, co-occurrence, and interaction scores, and the ranked
// top contributors derived from it.
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "premier/ehr.hpp"
#include "premier/model.hpp"

namespace premier {

enum class Source { Diagnosis, Procedure, Medication, Cooccurrence, Interaction };
inline constexpr std::size_t kNumSources = 5;
using SourceArray = std::array<Real, kNumSources>;

std::string_view to_string(Source source);

struct ElementScore {
  Source source;
  std::optional<std::size_t> visit;  // absent for graph sources
  std::optional<std::size_t> code;
  Real raw = 0;
};

struct ContributionBreakdown {
  std::size_t visit = 0;
  std::size_t medication = 0;
  Real logit = 0;
  Real probability = 0;
  Real bias = 0;
  bool predicted = false;  // false means the breakdown was requested for diagnosis only
  std::vector<ElementScore> elements;  // ordered by source, then visit, then code
  SourceArray totals{};
  SourceArray shares{};  // |total| / sum |total|; uniform when all totals vanish
  std::array<int, kNumSources> signs{};
  bool degenerate = false;

  /// sum(elements) + bias - logit; zero up to rounding.
  Real residual() const;
};

/// Breakdown for medication `medication` at visit `visit` of a completed forward pass.
ContributionBreakdown compute_contributions(const PremierModel& model, const PatientRecord& record,
                                            const PatientForward& forward, std::size_t visit,
                                            std::size_t medication);

/// Every medication at one visit, from a fresh inference pass.
std::vector<ContributionBreakdown> explain_visit(const PremierModel& model, const PatientRecord& record,
                                                 std::size_t visit, HistoryMode history = HistoryMode::Recorded,
                                                 Real threshold = 0.5);

struct Contributor {
  Source source;
  std::optional<std::size_t> visit;
  std::optional<std::size_t> code;
  Real raw = 0;
  Real share = 0;  // |raw| over the same denominator as the source shares
};

struct Justification {
  std::size_t medication = 0;
  std::vector<Contributor> top;
  SourceArray shares{};
  std::array<int, kNumSources> signs{};
  Real bias = 0;  // baseline propensity, outside the shares
  bool degenerate = false;
};

/// Top `top_n` elements by |raw|; ties keep source, visit, code order.
Justification normalize_and_rank(const ContributionBreakdown& breakdown, std::size_t top_n = 2);

/// Mean source shares over a nonempty set of breakdowns.
SourceArray source_distribution(std::span<const ContributionBreakdown> breakdowns);

/// Code string for code-level contributors, or the graph name.
std::string contributor_label(const Contributor& contributor, const Vocabularies& vocabularies);

}  // namespace premier
