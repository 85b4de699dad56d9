#include "oracles.hpp"

#include "rap/grounding.hpp"

#include <gtest/gtest.h>

using namespace rap;

TEST(MatchCost, IsOneMinusCosine) {
  Rng rng(1);
  const Matrix f = gaussian_matrix(4, 5, rng), a = gaussian_matrix(4, 3, rng);
  const Matrix c = match_cost(f, a);
  ASSERT_EQ(c.rows(), 5);
  ASSERT_EQ(c.cols(), 3);
  for (int t = 0; t < 5; ++t)
    for (int n = 0; n < 3; ++n) EXPECT_NEAR(c(t, n), 1.0 - oracle::cosine(f.col(t), a.col(n)), 1e-14);
  Matrix z = f;
  z.col(2).setZero();
  EXPECT_THROW(match_cost(z, a), Error);
  EXPECT_THROW(match_cost(f, Matrix::Ones(3, 2)), Error);
}

TEST(DropCost, NearestRank) {
  Matrix c(4, 5);
  for (int i = 0; i < 20; ++i) c.reshaped()(i) = 20 - i;  // values 1..20
  EXPECT_DOUBLE_EQ(drop_cost(c, 15), 3.0);
  EXPECT_DOUBLE_EQ(drop_cost(c, 0), 1.0);
  EXPECT_DOUBLE_EQ(drop_cost(c, 50), 10.0);
  EXPECT_DOUBLE_EQ(drop_cost(c, 100), 20.0);
  EXPECT_DOUBLE_EQ(drop_cost(c, 16), 4.0);
  EXPECT_THROW(drop_cost(c, 101), Error);
  EXPECT_THROW(drop_cost(Matrix(0, 0), 10), Error);
}

TEST(Align, FigurePattern) {
  const auto r = align(oracle::figure_cost(), 0.5);
  EXPECT_EQ(r.dropped_frames, (std::vector<int>{2, 4}));
  EXPECT_EQ(r.dropped_actions, (std::vector<int>{2}));
  ASSERT_EQ(r.segments.size(), 2u);
  EXPECT_EQ(r.segments[0], (GroundedSegment{0, 1, 0}));
  EXPECT_EQ(r.segments[1], (GroundedSegment{3, 5, 1}));
  EXPECT_EQ(r.segment_frames[1], (std::vector<int>{3, 5}));
  EXPECT_EQ(r.coverage, 4);
  EXPECT_NEAR(r.total_cost, 0.6, 1e-12);
}

TEST(Align, MatchesEnumeration) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int t = uniform_int(rng, 1, 8), n = uniform_int(rng, 1, 3);
    Matrix c(t, n);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.reshaped()(i) = uniform_real(rng);
    const double drop = 0.2 + 0.6 * uniform_real(rng);
    std::vector<int> df, da;
    const auto want = oracle::enumerate_alignment(c, drop, &df, &da);
    const auto got = align(c, drop);
    ASSERT_EQ(static_cast<int>(got.segments.size()), want.count) << "trial " << trial;
    EXPECT_EQ(got.coverage, want.coverage);
    EXPECT_NEAR(got.total_cost, want.cost, 1e-9);
    EXPECT_EQ(got.dropped_frames, df);
    std::vector<int> unassigned;
    for (int a = 0; a < n; ++a) {
      if (std::none_of(want.runs.begin(), want.runs.end(), [a](const auto& run) { return run[2] == a; })) unassigned.push_back(a);
    }
    EXPECT_EQ(got.dropped_actions, unassigned);
    for (std::size_t i = 0; i < want.runs.size(); ++i) {
      EXPECT_EQ(got.segments[i].t_start, want.runs[i][0]);
      EXPECT_EQ(got.segments[i].t_end, want.runs[i][1]);
      EXPECT_EQ(got.segments[i].action, want.runs[i][2]);
    }
    for (std::size_t i = 1; i < got.segments.size(); ++i) {
      EXPECT_GT(got.segments[i].t_start, got.segments[i - 1].t_end);
      EXPECT_GT(got.segments[i].action, got.segments[i - 1].action);
    }
  }
}

TEST(Align, NothingFeasible) {
  const auto r = align(Matrix::Ones(3, 2), 0.5);
  EXPECT_TRUE(r.segments.empty());
  EXPECT_EQ(r.dropped_frames.size(), 3u);
  EXPECT_EQ(r.dropped_actions.size(), 2u);
}

TEST(Align, LiteralModeTakesCheapestRuns) {
  // Action 1 is cheapest early, action 0 late: literal mode keeps both (each
  // on its cheapest single frame) and orders segments by start; ordered mode
  // must give one of them up.
  Matrix c(4, 2);
  c << 0.9, 0.1,
       0.9, 0.1,
       0.1, 0.9,
       0.1, 0.9;
  const auto lit = align(c, 0.5, AlignMode::literal);
  ASSERT_EQ(lit.segments.size(), 2u);
  EXPECT_EQ(lit.segments[0], (GroundedSegment{0, 0, 1}));
  EXPECT_EQ(lit.segments[1], (GroundedSegment{2, 2, 0}));
  EXPECT_EQ(align(c, 0.5, AlignMode::ordered).segments.size(), 1u);
}

TEST(PseudoAnnotation, GroundsASubsequenceOfThePlan) {
  const World w = World::generate(WorldConfig{}, 3);
  VideoConfig vc;
  vc.sigma = 0.05;
  int grounded = 0, kept = 0, total = 0;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const int task = static_cast<int>(i % 18);
    const auto v = synthesize_unannotated_video(w, task, vc, {}, i);
    const auto s = emit_pseudo_annotation(v, v.nominal_plan, w.vocab(), GroundingConfig{}, 500 + static_cast<int>(i));
    total += v.nominal_plan.horizon();
    if (!s) continue;
    ++grounded;
    kept += s->plan.horizon();
    EXPECT_EQ(s->source_id, 500 + static_cast<int>(i));
    EXPECT_EQ(s->plan.task_id, task);
    std::size_t j = 0;
    for (auto a : v.nominal_plan.actions) {
      if (j < s->plan.actions.size() && s->plan.actions[j] == a) ++j;
    }
    EXPECT_EQ(j, s->plan.actions.size());
  }
  EXPECT_GT(grounded, 30);
  EXPECT_GT(static_cast<double>(kept) / total, 0.5);
}

TEST(PseudoAnnotation, RejectsBadInput) {
  const World w = World::generate(WorldConfig{}, 3);
  const auto v = synthesize_unannotated_video(w, 0, VideoConfig{}, {}, 1);
  EXPECT_FALSE(emit_pseudo_annotation(v, Plan{0, {}}, w.vocab(), GroundingConfig{}, 0).has_value());
  EXPECT_THROW(emit_pseudo_annotation(v, Plan{0, {ActionVocabulary::kEnd}}, w.vocab(), GroundingConfig{}, 0), Error);
  GroundingConfig bad;
  bad.perc = -1;
  EXPECT_THROW(emit_pseudo_annotation(v, v.nominal_plan, w.vocab(), bad, 0), Error);
  EXPECT_THROW(emit_pseudo_annotations({v}, {}, w.vocab(), GroundingConfig{}), Error);
}
