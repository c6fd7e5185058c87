#pragma once

#include "ntpboost/construction.hpp"
#include "ntpboost/rnn.hpp"

namespace ntpboost {

using FixedPointFormat = BitsFormat;

// sign(x) * (min(x_I, 2^b_I) + 2^-b_F floor(x_F 2^b_F)) with x_I, x_F the integer and
// fractional parts of |x|. Sets *saturated when x_I > 2^b_I.
double quantize(double x, const BitsFormat& f, bool* saturated = nullptr);

int ceil_log2(double x);
// Integer bits needed to hold magnitudes up to max_abs without saturation.
int integer_bits_needed(double max_abs);

double product_error_bound(int m, double delta);
double fraction_error_bound(double x, double y, double delta, double ell);
double quantized_loss_gap(const TextDistribution& p, const LanguageModel& q, const LanguageModel& q_tilde, double delta,
                          double ell);

// Smallest boosted conditional, which should be at least ell / 3.
double boosted_min_conditional(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star);
bool boosted_lower_bound_check(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star, double ell);

struct QuantizedFormats {
  BitsFormat q;  // format of the base model
  BitsFormat d;  // format of the distinguisher circuit
  double ell = 0;  // lower bound on q's conditionals
};

// Smallest b_F with 2^-b_F <= alpha^2 ell^(k+1) / (1088 k^2) and b_F >= b_DF.
int minimal_fraction_bits(double alpha, double ell, int k, int b_DF);
int minimal_integer_bits(int b_DI, int k, int alphabet, long long T_D);

struct QuantizedBoostResult {
  RnnGraph graph;
  BitsFormat format;
  ConstructionReport report;
  double loss_drop_certificate = 0;  // alpha^2 / 8k
  double prob_lower_bound = 0;       // ell / 4
  double max_output_error = 0;       // 17 k 2^-b_F / ell^k
};

QuantizedBoostResult build_boosted_rnn_quantized(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k,
                                                 double alpha, int i0_star, bool complemented,
                                                 const QuantizedFormats& formats);

}  // namespace ntpboost
