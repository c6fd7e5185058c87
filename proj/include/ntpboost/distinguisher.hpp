#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ntpboost/dist.hpp"

namespace ntpboost {

struct RnnGraph;

// Length of the clipped window seen by d at 1-based position i: x_1..x_{min(i+k-1, n)}.
inline int window_len(int i, int k, int n) { return std::min(i + k - 1, n); }

// A next-k-token predicate stored as one bit per (position, clipped window).
// bits[i-1][index of x_1..x_{window_len(i)}].
class Distinguisher {
 public:
  Distinguisher() = default;
  Distinguisher(int k, int n, int alphabet);  // d == 0

  static Distinguisher from_function(int k, int n, int alphabet,
                                     const std::function<int(int, std::span<const int>)>& f);
  static Distinguisher random(int k, int n, int alphabet, std::mt19937_64& rng, double density = 0.5);

  int k() const { return k_; }
  int n() const { return n_; }
  int alphabet() const { return alphabet_; }

  // x may be any string at least window_len(i) long; only the window is read.
  int operator()(int i, std::span<const int> x) const;
  std::uint8_t bit(int i, std::size_t window_idx) const { return bits_[i - 1][window_idx]; }
  void set_bit(int i, std::size_t window_idx, int v) { bits_[i - 1][window_idx] = static_cast<std::uint8_t>(v != 0); }
  const std::vector<std::vector<std::uint8_t>>& bits() const { return bits_; }

  // Entry count; a size proxy for table distinguishers, not the circuit size.
  long long size_meta() const;
  long long ones() const;

  std::string label;
  std::shared_ptr<const RnnGraph> graph;  // set when realized by a circuit

 private:
  int k_ = 1, n_ = 1, alphabet_ = 2;
  std::vector<std::vector<std::uint8_t>> bits_;
};

Distinguisher complement(const Distinguisher& d);

// coef[i-1][idx(s.w)] = pbar(s) q(w|s) - pbar(s.w); advantage = (1/n) sum bits*coef.
std::vector<std::vector<double>> advantage_coefficients(const TextDistribution& p, const LanguageModel& q, int k);

double advantage(const Distinguisher& d, const TextDistribution& p, const TextDistribution& q);
double advantage(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q);

// Unnormalized per-position contributions c_i, so that advantage = (1/n) sum_i c_i.
std::vector<double> position_contributions(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q);

struct OffsetEntry {
  int j;
  int w;
  double a;
};

struct AdvantageReport {
  double advantage = 0;
  std::vector<OffsetEntry> offsets;
  int best_offset = 0;
};

inline int offset_weight(int j, int n, int k) { return 1 + (n - 1 - j) / k; }

AdvantageReport offset_decomposition(const Distinguisher& d, const TextDistribution& p, const TextDistribution& q);
AdvantageReport offset_decomposition(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q);

double pinsker_bound(const TextDistribution& p, const TextDistribution& q, int k);

struct Family {
  enum class Kind { list, all_window, prefix1 };
  Kind kind = Kind::list;
  std::vector<Distinguisher> members;

  static Family of(std::vector<Distinguisher> m) { return {Kind::list, std::move(m)}; }
  static Family all_window() { return {Kind::all_window, {}}; }
  static Family prefix1() { return {Kind::prefix1, {}}; }
};

struct OracleResult {
  Distinguisher best;
  double advantage = 0;
};

OracleResult max_advantage_oracle(const TextDistribution& p, const TextDistribution& q, int k, const Family& family);
OracleResult max_advantage_oracle(const TextDistribution& p, const LanguageModel& q, int k, const Family& family);

// Position-independent predicates phi(previous token, clipped window). The previous
// token at i = 1 is the sentinel value alphabet.
struct Prefix1Keys {
  int k, n, alphabet;
  std::size_t window_offset(int len) const;  // start of windows of length len
  std::size_t count() const;
  std::size_t key(int prev, int len, std::size_t widx) const;
};
Distinguisher prefix1_distinguisher(int k, int n, int alphabet, const std::vector<std::uint8_t>& phi);
// Coefficients of the linear functional phi -> n * advantage.
std::vector<double> prefix1_coefficients(const TextDistribution& p, const LanguageModel& q, int k);

}  // namespace ntpboost
