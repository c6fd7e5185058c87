#pragma once

#include <utility>

#include "ntpboost/distinguisher.hpp"
#include "ntpboost/rnn.hpp"

namespace ntpboost {

struct ConstructionReport {
  long long built_size = 0, built_hidden = 0, built_time = 0;
  long long formula_size = 0, formula_hidden = 0, formula_time = 0;
  bool equivalence_checked = false;

  bool formulas_match() const {
    return built_size == formula_size && built_hidden == formula_hidden && built_time == formula_time;
  }
};

// Largest |alphabet|^k the enumerating constructions accept.
inline constexpr long long kMaxEnumStrings = 4096;

// Constant model q(y|s) = 1/|alphabet|: an input node plus one hidden constant node, time 1.
RnnGraph uniform_model(int alphabet);

// Table model with time 2. The output after token i is q(x_i | x_{:i}); past n the
// conditionals are uniform.
RnnGraph compile_language_model(const LanguageModel& lm);

// Table distinguisher with time 2. After reading m tokens the output is
// d_{m-k+1}(x_1..x_{min(m,n)}), or 0 when that position does not exist.
RnnGraph compile_table_distinguisher(const Distinguisher& d);

long long enumeration_count(int alphabet, int k);
long long boosted_time(long long T_Q, long long T_D, int alphabet, int k);
long long loop_time(int alphabet, int k, long long tau);  // (|alphabet|^k + 1) k tau

RnnGraph build_sync_enumerator(const RnnGraph& Q, int alphabet, int k, int i0_star, long long tau);
RnnGraph build_f1(const RnnGraph& Q, int alphabet, int k, int i0_star, long long tau);
RnnGraph build_f2(const RnnGraph& D, int alphabet, int k, int i0_star, double alpha, long long tau,
                  bool complemented = false);
RnnGraph build_g(int alphabet, int k, int i0_star, long long tau);

// Assembles Q' from f1, f2 and the indicator circuit. When complemented is set the
// circuit computes exp(-alpha (1 - d)).
std::pair<RnnGraph, ConstructionReport> build_boosted_rnn(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k,
                                                          double alpha, int i0_star, bool complemented = false);

// Doubling construction: copies every non-input node of Q and D instead of the hidden sets.
RnnGraph build_boosted_rnn_simple(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k, double alpha,
                                  int i0_star, bool complemented = false);

}  // namespace ntpboost
