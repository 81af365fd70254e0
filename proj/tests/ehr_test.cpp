// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "premier/ehr.hpp"
#include "premier/error.hpp"
#include "test_util.hpp"

namespace premier {
namespace {

TEST(CodeVocabulary, SortsCodesAndLooksUpIndices) {
  CodeVocabulary v(CodeKind::Medication, {"M3", "M1", "M2"});
  EXPECT_EQ(v.codes(), (std::vector<std::string>{"M1", "M2", "M3"}));
  EXPECT_EQ(v.index("M2"), 1u);
  EXPECT_EQ(v.code(2), "M3");
  EXPECT_FALSE(v.find("M9").has_value());
  EXPECT_THROW(v.index("M9"), DataError);
  EXPECT_THROW(v.code(3), EncodingError);
}

TEST(CodeVocabulary, RejectsDuplicates) {
  EXPECT_THROW(CodeVocabulary(CodeKind::Diagnosis, {"D1", "D1"}), DataError);
}

TEST(MultiHot, DenseHasOnesAtActiveIndices) {
  const auto m = encode_multi_hot({3, 0, 3}, 5);
  EXPECT_EQ(m.active(), (IndexSet{0, 3}));
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(5);
  expected[0] = expected[3] = 1;
  EXPECT_EQ(m.dense(), expected);
  EXPECT_THROW(encode_multi_hot({5}, 5), EncodingError);
}

TEST(FilterMinVisits, KeepsOnlyLongRecordsAndVocabularies) {
  std::mt19937_64 rng(3);
  const auto c = testing::random_cohort(rng, 40, 6, 4, 5, 4);
  const auto f = filter_min_visits(c, 2);
  for (const auto& r : f.records) EXPECT_GE(r.visits.size(), 2u);
  std::size_t expected = 0;
  for (const auto& r : c.records) expected += r.visits.size() >= 2;
  EXPECT_EQ(f.size(), expected);
  EXPECT_EQ(f.vocab_m, c.vocab_m);
  EXPECT_THROW(filter_min_visits(c, 0), ConfigError);
}

TEST(SplitCohort, FourOneOnePartitionIsDisjointAndDeterministic) {
  std::mt19937_64 rng(5);
  const auto c = testing::random_cohort(rng, 60, 6, 4, 5, 3);
  const auto s = split_cohort(c, {}, 11);
  EXPECT_EQ(s.train.size(), 40u);
  EXPECT_EQ(s.validation.size(), 10u);
  EXPECT_EQ(s.test.size(), 10u);
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& r : part->records) EXPECT_TRUE(ids.insert(r.patient_id).second);
  EXPECT_EQ(ids.size(), 60u);
  const auto again = split_cohort(c, {}, 11);
  EXPECT_EQ(again.test.records, s.test.records);
  const auto other = split_cohort(c, {}, 12);
  EXPECT_NE(other.test.records, s.test.records);
}

TEST(SplitCohort, LargestRemainderSizes) {
  std::mt19937_64 rng(6);
  const auto c = testing::random_cohort(rng, 7, 3, 3, 3, 2);
  const auto s = split_cohort(c, {}, 1);
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 7u);
  EXPECT_EQ(s.train.size(), 5u);
  EXPECT_GE(s.validation.size(), 1u);
  EXPECT_GE(s.test.size(), 1u);
  EXPECT_THROW(split_cohort(testing::random_cohort(rng, 2, 3, 3, 3, 2), {}, 1), DataError);
}

TEST(CohortIo, RoundTripsThroughJsonLines) {
  std::mt19937_64 rng(7);
  const auto c = testing::random_cohort(rng, 12, 6, 4, 5, 3);
  std::stringstream buffer;
  write_cohort(c, buffer);
  const auto back = read_cohort(buffer);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back.records[i].patient_id, c.records[i].patient_id);
    ASSERT_EQ(back.records[i].visits.size(), c.records[i].visits.size());
    for (std::size_t t = 0; t < c.records[i].visits.size(); ++t) {
      const auto a = to_coded(c.records[i].visits[t], c.vocabularies());
      const auto b = to_coded(back.records[i].visits[t], back.vocabularies());
      EXPECT_EQ(a.diagnoses, b.diagnoses);
      EXPECT_EQ(a.procedures, b.procedures);
      EXPECT_EQ(a.medications, b.medications);
    }
  }
}

TEST(CohortIo, ReportsLineOfMalformedRecord) {
  std::stringstream in;
  in << R"({"patient_id":"a","visits":[{"d":["D1"],"p":[],"m":["M1"]}]})" << '\n' << "{not json\n";
  try {
    read_cohort(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(CohortIo, UnknownFieldIsSchemaError) {
  std::stringstream in;
  in << R"({"patient_id":"a","visits":[{"d":["D1"],"x":[]}]})" << '\n';
  EXPECT_THROW(read_cohort(in), SchemaError);
}

TEST(ResolveVisit, CollectsUnknownCodes) {
  const auto v = testing::synthetic_vocabularies(3, 2, 3);
  std::vector<UnrecognizedCode> unknown;
  const auto visit = resolve_visit({{"D0001", "X1"}, {"P0009"}, {"M0002"}}, v, 4, unknown);
  EXPECT_EQ(visit.diagnoses, (IndexSet{1}));
  EXPECT_TRUE(visit.procedures.empty());
  EXPECT_EQ(visit.medications, (IndexSet{2}));
  ASSERT_EQ(unknown.size(), 2u);
  EXPECT_EQ(unknown[0].code, "X1");
  EXPECT_EQ(unknown[0].kind, CodeKind::Diagnosis);
  EXPECT_EQ(unknown[1].kind, CodeKind::Procedure);
  EXPECT_EQ(unknown[1].visit, 4u);
}

TEST(SelectPatients, KeepsRequestedOrder) {
  std::mt19937_64 rng(8);
  const auto c = testing::random_cohort(rng, 5, 3, 3, 3, 2);
  const auto s = select_patients(c, {"P3", "P1"});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.records[0].patient_id, "P3");
  EXPECT_EQ(s.records[1].patient_id, "P1");
}

}  // namespace
}  // namespace premier
