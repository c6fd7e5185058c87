#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ntpboost/dist.hpp"
#include "ntpboost/distinguisher.hpp"
#include "ntpboost/rnn.hpp"

namespace ntpboost {

enum class Variant { plain, bits };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct SelfBoostSchedule {
  Variant variant = Variant::plain;
  int d_bound = 1;
  int k = 1;
  long long tau = 1;
  double epsilon = 0.5;
  int alphabet = 2;
  int b_D = 0;

  double N(long long i) const;       // 17 (d + k) i^2
  double H(long long i) const;       // 12 (d + k) i
  double T(long long i) const;       // (8k |alphabet|^k)^(i-1) tau, inf once it overflows
  double log2_T(long long i) const;
  long long bits(long long i) const; // bits variant only
  double ell(long long i) const;     // 0.99 / (|alphabet| 4^(i-1))
  double drop_threshold() const;     // eps^2 / 4k, or eps^2 / 8k for bits
  // Closed integer range for j0: ceil of the lower end, floor of the upper end.
  std::pair<long long, long long> j0_range() const;
  // Bound on boosting rounds: 4k ln|alphabet| / eps^2 + 1 (16k for bits).
  double round_bound() const;
};

SelfBoostSchedule make_schedule(Variant variant, int d_bound, int k, long long tau, double epsilon, int alphabet,
                                int b_D = 0);

long long sample_j0(const SelfBoostSchedule& s, std::mt19937_64& rng);
long long sample_j0(int k, int alphabet, double epsilon, std::mt19937_64& rng, Variant variant = Variant::plain);

double bad_set_bound(double L1, double epsilon);

// Size accounting of a model realized by a circuit.
struct ModelCost {
  long long size = 0;
  long long hidden = 0;
  double time = 1;

  bool fits(double N, double H, double T) const { return size <= N && hidden <= H && time <= T; }
};

struct BoostRecord {
  long long schedule_index = 0;
  double alpha = 0;
  int offset = 0;
  bool complemented = false;
  double kl_before = 0, kl_after = 0, guaranteed_drop = 0;
  double loss_after = 0;
  ModelCost cost;
};

struct ModelState {
  LanguageModel lm;
  TextDistribution text;
  ModelCost cost;
  std::optional<RnnGraph> graph;  // kept while compiling
};

struct CompileOptions {
  bool enabled = false;
  // Largest time * |prefix tree| product simulated before compilation is skipped.
  double step_budget = 2e7;
  double tolerance = 1e-9;
};

struct MinimizeResult {
  ModelState state;
  std::vector<BoostRecord> boosts;
  double final_advantage = 0;
  bool budget_exhausted = false;
  std::vector<std::string> notes;
};

// Constructive minimizer: boosts with the strongest family member while its advantage
// exceeds epsilon and the boosted circuit still fits the budget.
MinimizeResult minimize_loss_constrained(const TextDistribution& p, ModelState start, double N, double H, double T,
                                         const Family& family, double epsilon, int k, const CompileOptions& compile = {},
                                         long long schedule_index = 0);

ModelState uniform_state(int alphabet, int n, bool with_graph);

struct IndexRecord {
  long long index = 0;
  double N = 0, H = 0, T = 0, log2_T = 0;
  long long bits = 0;
  double ell = 0;
  ModelCost cost;
  double loss = 0, kl = 0, advantage = 0;
  int boosts = 0;
  bool budget_exhausted = false;
};

struct SelfBoostTrace {
  SelfBoostSchedule schedule;
  long long j0 = 0;
  std::vector<IndexRecord> indices;
  std::vector<BoostRecord> boosts;
  std::string termination;
  long long returned_index = 0;
  LanguageModel model;
  double final_loss = 0, final_kl = 0;
  double final_advantage = 0;
  double pinsker = 0;
  int total_boosts = 0;  // rounds applied up to the returned model
  std::vector<std::string> notes;
};

struct AlgorithmOptions {
  CompileOptions compile;
  long long max_indices = 100000;
  std::optional<long long> j0;  // fixed index instead of a draw
};

SelfBoostTrace run_algorithm(const SelfBoostSchedule& schedule, const TextDistribution& p, const Family& family,
                             std::mt19937_64& rng, const AlgorithmOptions& opts = {});

// Optimal-loss surrogate L_j for j in [lo, hi + 1] and the indices j with L_{j+1} < L_j - threshold.
struct BadSetReport {
  long long lo = 0, hi = 0;
  std::vector<double> losses;
  std::vector<long long> bad;
};
BadSetReport empirical_bad_set(const SelfBoostSchedule& schedule, const TextDistribution& p, const Family& family,
                               long long lo, long long hi);

}  // namespace ntpboost
