#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ntpboost {

using Doc = std::vector<int>;

// The empty string. Kept apart from the advantage bound, which is also written epsilon.
inline const Doc kEmptyString{};

struct Error : std::runtime_error {
  std::string kind;
  std::string pointer;
  Error(std::string kind_, const std::string& msg, std::string pointer_ = "")
      : std::runtime_error(msg), kind(std::move(kind_)), pointer(std::move(pointer_)) {}
};

struct SizingError : Error {
  explicit SizingError(const std::string& msg) : Error("sizing", msg) {}
};

// Hard cap on dense enumeration, 2^20 unless NTPBOOST_MAX_ENUM is set.
std::size_t enum_cap();

// base^exp, throwing SizingError past the enumeration cap.
std::size_t checked_pow(int base, int exp);
std::size_t ipow(int base, int exp);

// Lexicographic index, first token most significant.
std::size_t doc_index(std::span<const int> x, int alphabet);
Doc doc_at(std::size_t idx, int alphabet, int len);
std::string doc_str(std::span<const int> x);

struct TextDistribution {
  int alphabet = 2;
  int n = 1;
  std::vector<double> probs;

  static TextDistribution uniform(int alphabet, int n);
  static TextDistribution point_mass(int alphabet, const Doc& x);
  double operator()(std::span<const int> x) const { return probs[doc_index(x, alphabet)]; }
  std::size_t size() const { return probs.size(); }
  void validate(double tol = 1e-12) const;
};

// Dense conditional table. Entry for prefix s of length l and token y lives in
// cond[l][index(s) * alphabet + y].
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(int alphabet, int n);  // uniform

  int alphabet() const { return alphabet_; }
  int n() const { return n_; }

  double operator()(std::span<const int> prefix, int y) const;
  double at(int len, std::size_t prefix_idx, int y) const {
    return cond_[len][prefix_idx * alphabet_ + y];
  }
  double& at(int len, std::size_t prefix_idx, int y) { return cond_[len][prefix_idx * alphabet_ + y]; }
  void set(std::span<const int> prefix, std::span<const double> dist);

  // Product of conditionals along w following s.
  double block(std::span<const int> s, std::span<const int> w) const;
  double min_conditional() const;
  void validate(double tol = 1e-12) const;

 private:
  int alphabet_ = 2;
  int n_ = 1;
  std::vector<std::vector<double>> cond_;
};

// Prefix marginal tables: m[l][index(s)] = sum over completions of s.
std::vector<std::vector<double>> prefix_marginals(const TextDistribution& t);

TextDistribution lm_to_text(const LanguageModel& lm, double tol = 1e-12);
LanguageModel text_to_lm(const TextDistribution& t);

double marginal(const TextDistribution& t, std::span<const int> s);
double block_conditional(const TextDistribution& t, std::span<const int> s, std::span<const int> z);

double kl(const TextDistribution& p, const TextDistribution& q);
double entropy(const TextDistribution& p);
double tv(const TextDistribution& p, const TextDistribution& q);
double next_token_loss(const TextDistribution& p, const LanguageModel& q);

struct DivergenceReport {
  double kl = 0, entropy_p = 0, loss_q = 0, tv = 0;
};
DivergenceReport divergence_report(const TextDistribution& p, const LanguageModel& q);

void check_compatible(const TextDistribution& p, const TextDistribution& q);

}  // namespace ntpboost
