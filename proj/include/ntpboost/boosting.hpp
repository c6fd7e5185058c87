#pragma once

#include "ntpboost/dist.hpp"
#include "ntpboost/distinguisher.hpp"

namespace ntpboost {

struct BoostResult {
  TextDistribution q_boosted;
  LanguageModel lm_boosted;
  int offset = 0;  // i0*, the 0-based start of the first reweighted block
  double alpha = 0;
  double kl_before = 0;
  double kl_after = 0;
  double guaranteed_drop = 0;  // alpha^2 n / 4k
  bool complemented = false;   // true when the negated predicate was used
  Distinguisher applied;       // the predicate actually used for reweighting
};

// Block starts (0-based) reweighted for offset i0: i0, i0+k, ... <= n-1.
std::vector<int> block_starts(int i0, int k, int n);

// Z(s) = sum_w q(w|s) exp(-alpha d_{|s|+1}(s.w)), w over the clipped window.
double normalization_Z(const LanguageModel& q, const Distinguisher& d, double alpha, std::span<const int> s);
double normalization_Z(const TextDistribution& q, const Distinguisher& d, double alpha, std::span<const int> s);

// The reweighted text distribution for a fixed offset and alpha (no sign handling).
TextDistribution boosted_text(const LanguageModel& q, const Distinguisher& d, double alpha, int i0);

BoostResult boost_text(const TextDistribution& p, const TextDistribution& q, const Distinguisher& d);

struct FG {
  double f1 = 0, f2 = 0;
  int g1 = 0, g2 = 0;
};

// Block start i0(i) for 1-based token position i > i0*: the largest block start below i.
int block_start_for(int i, int i0_star, int k);

// Components of the ratio form. s is a window of length min(k, n - i0(i)); x holds at least
// the first i tokens of the document.
FG components_f_g(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star, int i,
                  std::span<const int> s, std::span<const int> x);

// q'(token | prefix) via the ratio of sums over all windows s.
double boosted_next_token(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star,
                          std::span<const int> prefix, int token);
double boosted_next_token(const TextDistribution& q, const Distinguisher& d, double alpha, int i0_star,
                          std::span<const int> prefix, int token);

LanguageModel boosted_lm(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star);

}  // namespace ntpboost
