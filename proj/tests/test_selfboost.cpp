#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ntpboost/construction.hpp"
#include "ntpboost/selfboost.hpp"
#include "oracles.hpp"

using namespace ntpboost;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST(Schedule, SizeAndHiddenBudgets) {
  auto s = make_schedule(Variant::plain, 2, 1, 6, 0.3, 2);
  EXPECT_EQ(s.N(10), 5100);
  EXPECT_EQ(s.H(10), 360);
}

TEST(Schedule, FirstTimeIsTau) {
  auto s = make_schedule(Variant::plain, 2, 1, 6, 0.3, 2);
  EXPECT_EQ(s.T(1), 6);
  EXPECT_EQ(s.T(3), 16.0 * 16.0 * 6);
  EXPECT_NEAR(s.log2_T(3), std::log2(16.0 * 16.0 * 6), 1e-12);
}

TEST(Schedule, TimeOverflowsToInfinity) {
  auto s = make_schedule(Variant::plain, 2, 2, 6, 0.3, 2);
  EXPECT_EQ(s.T(400), kInf);
  EXPECT_NEAR(s.log2_T(400), 399 * 6 + std::log2(6.0), 1e-9);
}

TEST(Schedule, BitsVariantLowerBound) {
  auto s = make_schedule(Variant::bits, 2, 1, 6, 0.3, 2);
  EXPECT_DOUBLE_EQ(s.ell(3), 0.0309375);
  EXPECT_DOUBLE_EQ(s.drop_threshold(), 0.09 / 8);
  double want = 3.0 * 4 + 2 * std::log2(6.0) + 772.0 * (1 / 0.09 + std::log2(1 / 0.3));
  EXPECT_EQ(s.bits(2), static_cast<long long>(std::ceil(want)));
}

TEST(Schedule, RejectsBadEpsilon) {
  EXPECT_THROW(make_schedule(Variant::plain, 2, 1, 6, 0.0, 2), Error);
  EXPECT_THROW(make_schedule(Variant::plain, 2, 1, 6, 1.5, 2), Error);
}

TEST(SampleJ0, RangeUnderRounding) {
  auto s = make_schedule(Variant::plain, 1, 1, 1, 1.0, 2);
  EXPECT_EQ(s.j0_range(), std::make_pair(3LL, 30LL));
  auto b = make_schedule(Variant::bits, 1, 1, 1, 1.0, 2);
  EXPECT_EQ(b.j0_range(), std::make_pair(12LL, 121LL));
}

TEST(SampleJ0, Reproducible) {
  std::mt19937_64 a(9), b(9);
  for (int rep = 0; rep < 20; ++rep) EXPECT_EQ(sample_j0(1, 2, 0.5, a), sample_j0(1, 2, 0.5, b));
}

// A correct sampler fails this at rate 0.01 per seed; the seed is fixed for reproducibility.
TEST(SampleJ0, UniformChiSquare) {
  std::mt19937_64 rng(2);
  std::vector<long long> counts(28, 0);
  const int draws = 100000;
  for (int rep = 0; rep < draws; ++rep) {
    long long j = sample_j0(1, 2, 1.0, rng);
    ASSERT_GE(j, 3);
    ASSERT_LE(j, 30);
    ++counts[j - 3];
  }
  double expect = draws / 28.0, chi = 0;
  for (long long c : counts) chi += (c - expect) * (c - expect) / expect;
  EXPECT_LT(chi, 46.963);  // 0.99 quantile of chi-square with 27 degrees of freedom
}

TEST(BadSetBound, Arithmetic) {
  EXPECT_NEAR(bad_set_bound(std::log(2.0), 0.1), 6.931471805599453, 1e-12);
  EXPECT_THROW(bad_set_bound(1, 0), Error);
}

TEST(Minimize, ZeroFamilyLeavesModel) {
  std::mt19937_64 rng(91);
  auto p = oracle::random_text(2, 3, rng);
  auto start = uniform_state(2, 3, false);
  auto r = minimize_loss_constrained(p, start, kInf, kInf, kInf, Family::of({Distinguisher(1, 3, 2)}), 0.1, 1);
  EXPECT_TRUE(r.boosts.empty());
  EXPECT_EQ(r.state.lm.at(2, 3, 1), 0.5);
}

TEST(Minimize, UniformDataNeedsNoRounds) {
  auto p = TextDistribution::uniform(2, 4);
  auto r = minimize_loss_constrained(p, uniform_state(2, 4, false), kInf, kInf, kInf, Family::prefix1(), 0.1, 2);
  EXPECT_TRUE(r.boosts.empty());
  EXPECT_EQ(r.final_advantage, 0.0);
}

TEST(Minimize, ReachesEpsilonOnFamily) {
  std::mt19937_64 rng(92);
  for (int rep = 0; rep < 5; ++rep) {
    auto p = oracle::peaked_text(2, 4, rng);
    const double eps = 0.05;
    auto r = minimize_loss_constrained(p, uniform_state(2, 4, false), kInf, kInf, kInf, Family::prefix1(), eps, 2);
    EXPECT_FALSE(r.budget_exhausted);
    EXPECT_LE(std::fabs(max_advantage_oracle(p, r.state.lm, 2, Family::prefix1()).advantage), eps + 1e-9);
    double prev = std::log(2.0) * 4;
    for (auto& b : r.boosts) {
      EXPECT_LE(b.kl_after, b.kl_before - b.guaranteed_drop + 1e-9);
      EXPECT_LE(b.kl_after, prev + 1e-12);
      prev = b.kl_after;
    }
  }
}

TEST(Minimize, BudgetExhaustionIsReported) {
  std::mt19937_64 rng(93);
  auto p = oracle::peaked_text(2, 3, rng);
  auto r = minimize_loss_constrained(p, uniform_state(2, 3, false), 50, 30, kInf, Family::prefix1(), 0.01, 1);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_GT(r.final_advantage, 0.01);
  for (auto& b : r.boosts) EXPECT_TRUE(b.cost.fits(50, 30, kInf));
}

TEST(Minimize, CostAccountingMatchesCompiledCircuit) {
  std::mt19937_64 rng(94);
  auto p = oracle::peaked_text(2, 3, rng);
  CompileOptions co;
  co.enabled = true;
  auto r = minimize_loss_constrained(p, uniform_state(2, 3, true), kInf, kInf, 1000, Family::prefix1(), 0.02, 1, co);
  ASSERT_FALSE(r.boosts.empty());
  ASSERT_TRUE(r.state.graph.has_value());
  EXPECT_EQ(r.state.graph->size(), r.state.cost.size);
  EXPECT_EQ(r.state.graph->hidden_size(), r.state.cost.hidden);
  EXPECT_EQ(double(r.state.graph->rnn_time), r.state.cost.time);
  EXPECT_LT(oracle::max_diff(lm_from_graph(*r.state.graph, 2, 3), r.state.lm), 1e-9);
}

TEST(Algorithm, OptimalStartStopsAfterSecondIndex) {
  std::mt19937_64 rng(95);
  auto s = make_schedule(Variant::plain, 2, 1, 6, 0.3, 2);
  auto tr = run_algorithm(s, TextDistribution::uniform(2, 3), Family::prefix1(), rng);
  ASSERT_EQ(tr.indices.size(), 2u);
  EXPECT_EQ(tr.returned_index, tr.j0 + 1);
  EXPECT_EQ(tr.termination, "loss_plateau");
  EXPECT_EQ(tr.total_boosts, 0);
  EXPECT_LT(oracle::max_diff(tr.model, LanguageModel(2, 3)), 1e-15);
}

TEST(Algorithm, FixedIndexIsHonoured) {
  std::mt19937_64 rng(96);
  auto s = make_schedule(Variant::plain, 2, 1, 6, 0.3, 2);
  AlgorithmOptions o;
  o.j0 = 5;
  auto tr = run_algorithm(s, TextDistribution::uniform(2, 2), Family::prefix1(), rng, o);
  EXPECT_EQ(tr.j0, 5);
  EXPECT_EQ(tr.indices.front().index, 6);
}

TEST(Algorithm, FullPipelineCertificates) {
  std::mt19937_64 rng(97);
  for (int rep = 0; rep < 3; ++rep) {
    auto p = oracle::peaked_text(2, 4, rng);
    auto s = make_schedule(Variant::plain, 2, 2, 6, 0.3, 2);
    auto tr = run_algorithm(s, p, Family::prefix1(), rng);
    EXPECT_LE(tr.total_boosts, s.round_bound());
    EXPECT_LE(tr.final_advantage, 0.3 + 1e-9);
    auto best = max_advantage_oracle(p, tr.model, 2, Family::prefix1());
    EXPECT_NEAR(std::fabs(best.advantage), tr.final_advantage, 1e-12);
    EXPECT_NEAR(tr.pinsker, pinsker_bound(p, lm_to_text(tr.model), 2), 1e-12);
    for (std::size_t j = 1; j < tr.indices.size(); ++j) EXPECT_LE(tr.indices[j].loss, tr.indices[j - 1].loss + 1e-12);
  }
}

TEST(Algorithm, BitsVariantUsesLooserThreshold) {
  std::mt19937_64 rng(98);
  auto p = oracle::peaked_text(2, 3, rng);
  auto s = make_schedule(Variant::bits, 2, 1, 6, 0.3, 2);
  auto tr = run_algorithm(s, p, Family::prefix1(), rng);
  EXPECT_GE(tr.j0, s.j0_range().first);
  EXPECT_LE(tr.j0, s.j0_range().second);
  EXPECT_GT(tr.indices.front().bits, 0);
  EXPECT_DOUBLE_EQ(tr.indices.front().ell, s.ell(tr.j0 + 1));
  EXPECT_LE(tr.final_advantage, 0.3 + 1e-9);
}

TEST(BadSet, LossesMatchIndependentMinimization) {
  std::mt19937_64 rng(99);
  auto p = oracle::peaked_text(2, 3, rng);
  // Tight budgets so the surrogate loss still changes across indices.
  auto s = make_schedule(Variant::plain, 1, 1, 6, 0.1, 2);
  auto rep = empirical_bad_set(s, p, Family::prefix1(), 1, 12);
  ASSERT_EQ(rep.losses.size(), 13u);
  for (long long j = 1; j <= 13; ++j) {
    auto m = minimize_loss_constrained(p, uniform_state(2, 3, false), s.N(j), s.H(j), s.T(j), Family::prefix1(), 0.1, 1);
    EXPECT_NEAR(rep.losses[j - 1], next_token_loss(p, m.state.lm), 1e-12) << "j=" << j;
  }
  std::size_t count = 0;
  for (long long j = 1; j <= 12; ++j)
    if (rep.losses[j] < rep.losses[j - 1] - s.drop_threshold()) ++count;
  EXPECT_EQ(rep.bad.size(), count);
  EXPECT_LE(double(rep.bad.size()), bad_set_bound(std::log(2.0), s.drop_threshold()));
}

TEST(BadSet, TwoIndicesOutsideBadSet) {
  std::mt19937_64 rng(100);
  auto p = oracle::peaked_text(2, 3, rng);
  auto s = make_schedule(Variant::plain, 1, 1, 6, 0.1, 2);
  auto rep = empirical_bad_set(s, p, Family::prefix1(), 1, 40);
  for (long long j0 = 0; j0 < 40; ++j0) {
    AlgorithmOptions o;
    o.j0 = j0;
    auto tr = run_algorithm(s, p, Family::prefix1(), rng, o);
    bool bad = std::find(rep.bad.begin(), rep.bad.end(), j0 + 1) != rep.bad.end();
    if (!bad) EXPECT_EQ(tr.indices.size(), 2u) << "j0=" << j0;
    EXPECT_NEAR(tr.indices.front().loss, rep.losses[j0], 1e-12);
  }
}
