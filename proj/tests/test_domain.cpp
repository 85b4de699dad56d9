#include "oracles.hpp"

#include "rap/domain.hpp"
#include "rap/edit_distance.hpp"
#include "rap/random.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace rap;

namespace {

ActionVocabulary tiny_vocab() {
  std::vector<VocabEntry> e;
  e.push_back({0, "START", Vector::Constant(3, 0.1)});
  e.push_back({1, "END", Vector::Unit(3, 0)});
  e.push_back({2, "pour milk", Vector::Unit(3, 1)});
  e.push_back({3, "stir", Vector::Unit(3, 2)});
  return ActionVocabulary(e);
}

}  // namespace

TEST(Vocabulary, ReservedIdsAndLookup) {
  const auto v = tiny_vocab();
  EXPECT_EQ(v.size(), 4);
  EXPECT_EQ(v.dim(), 3);
  EXPECT_EQ(v.lookup("stir"), 3);
  EXPECT_EQ(v.name(ActionVocabulary::kEnd), "END");
  EXPECT_TRUE(v.embedding(2).isApprox(Vector::Unit(3, 1)));
}

TEST(Vocabulary, UnknownNameSuggestsNearest) {
  const auto v = tiny_vocab();
  try {
    v.lookup("stirr");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "unknown action");
    EXPECT_NE(std::string(e.what()).find("'stir'"), std::string::npos);
  }
}

TEST(Vocabulary, RejectsBadEntries) {
  std::vector<VocabEntry> e{{0, "START", Vector::Ones(2)}, {1, "END", Vector::Ones(2)}, {2, "a", Vector::Ones(3)}};
  EXPECT_THROW(ActionVocabulary{e}, Error);
  e[2].embedding = Vector::Ones(2);
  e[2].name = "END";
  EXPECT_THROW(ActionVocabulary{e}, Error);
  e[2].name = "a";
  std::swap(e[0].name, e[1].name);
  EXPECT_THROW(ActionVocabulary{e}, Error);
}

TEST(Distribution, StartNeverScored) {
  const auto v = tiny_vocab();
  const auto n = nearest_action(Vector::Constant(3, 5.0), v);
  EXPECT_EQ(n.distribution[ActionVocabulary::kStart], 0.0);
  EXPECT_TRUE(n.distribution.is_normalized());
  EXPECT_NE(n.id, ActionVocabulary::kStart);
  EXPECT_EQ(nearest_action(Vector::Unit(3, 2), v).id, 3);
}

TEST(Distribution, DimensionMismatchThrows) {
  EXPECT_THROW(vocabulary_logits(Vector::Ones(4), tiny_vocab()), Error);
}

TEST(Softmax, StableAndMaskAware) {
  Vector l(3);
  l << 1000.0, 1000.0, -std::numeric_limits<double>::infinity();
  const Vector p = softmax(l);
  EXPECT_DOUBLE_EQ(p(0), 0.5);
  EXPECT_EQ(p(2), 0.0);
  EXPECT_NEAR(log_sum_exp(Vector(l.head(2))), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Argmax, TiesGoToLowestIndex) {
  Vector v(4);
  v << 0.1, 0.4, 0.4, 0.2;
  EXPECT_EQ(argmax_lowest(v), 1);
}

TEST(Cosine, MatchesNaiveAndRejectsZero) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Vector a = gaussian_vector(7, rng), b = gaussian_vector(7, rng);
    EXPECT_NEAR(cosine_similarity(a, b), oracle::cosine(a, b), 1e-14);
  }
  EXPECT_THROW(cosine_similarity(Vector::Zero(3), Vector::Ones(3)), Error);
  EXPECT_THROW(cosine_similarity(Vector::Ones(2), Vector::Ones(3)), Error);
}

TEST(Levenshtein, KnownValues) {
  EXPECT_EQ(levenshtein(std::string("kitten"), std::string("sitting")), 3u);
  EXPECT_EQ(levenshtein(std::string(""), std::string("abc")), 3u);
  EXPECT_EQ(levenshtein(std::vector<int>{1, 2, 3}, std::vector<int>{3, 2, 1}), 2u);
}

TEST(Levenshtein, MatchesRecursiveOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> a(static_cast<std::size_t>(uniform_int(rng, 0, 6))), b(static_cast<std::size_t>(uniform_int(rng, 0, 6)));
    for (auto& x : a) x = uniform_int(rng, 0, 3);
    for (auto& x : b) x = uniform_int(rng, 0, 3);
    ASSERT_EQ(static_cast<int>(levenshtein(a, b)), oracle::levenshtein(a, b));
  }
}

TEST(Plan, ValidationRejectsReservedIds) {
  const auto v = tiny_vocab();
  EXPECT_NO_THROW(validate_plan(Plan{0, {2, 3}}, v));
  EXPECT_THROW(validate_plan(Plan{0, {2, ActionVocabulary::kEnd}}, v), Error);
  EXPECT_THROW(validate_plan(Plan{0, {ActionVocabulary::kStart}}, v), Error);
  EXPECT_THROW(validate_plan(Plan{0, {9}}, v), Error);
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(0, 1), derive_seed(0, 2));
  EXPECT_NE(derive_seed(0, 1, 0), derive_seed(0, 1, 1));
  EXPECT_EQ(derive_seed(5, 3, 2), derive_seed(5, 3, 2));
}
