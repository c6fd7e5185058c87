#include "ntpboost/fixedpoint.hpp"

#include <cmath>
#include <sstream>

#include "ntpboost/boosting.hpp"

namespace ntpboost {

double quantize(double x, const BitsFormat& f, bool* saturated) {
  // Clamping the whole magnitude at 2^b_I keeps the map monotone; keeping the fraction of a
  // saturated integer part would not be.
  double mag = std::fabs(x);
  double cap = std::ldexp(1.0, f.integer);
  bool sat = mag > cap;
  if (saturated) *saturated = sat;
  double scale = std::ldexp(1.0, f.fraction);
  double xi = std::floor(mag);
  double v = sat ? cap : xi + std::floor((mag - xi) * scale) / scale;
  return std::signbit(x) ? -v : v;
}

int ceil_log2(double x) {
  if (!(x > 0)) throw Error("domain", "log of a nonpositive value");
  int c = 0;
  while (std::ldexp(1.0, c) < x) ++c;
  while (c > -1074 && std::ldexp(1.0, c - 1) >= x) --c;
  return c;
}

int integer_bits_needed(double max_abs) {
  double xi = std::floor(std::fabs(max_abs));
  return xi <= 1 ? 0 : ceil_log2(xi);
}

double product_error_bound(int m, double delta) {
  if (m < 1 || !(delta > 0) || !(delta < 1.0 / m))
    throw Error("precondition", "product bound needs m >= 1 and 0 < delta < 1/m");
  return 2.0 * m * delta;
}

double fraction_error_bound(double x, double y, double delta, double ell) {
  auto unit = [](double v) { return v > 0 && v <= 1; };
  if (!unit(x) || !unit(y) || !unit(delta) || !unit(ell) || y < x || y < ell || !(ell > delta))
    throw Error("precondition", "fraction bound needs x <= y, y >= ell > delta, all in (0, 1]");
  return x / y + 2 * delta / (ell - delta);
}

double quantized_loss_gap(const TextDistribution& p, const LanguageModel& q, const LanguageModel& q_tilde, double delta,
                          double ell) {
  if (q.alphabet() != q_tilde.alphabet() || q.n() != q_tilde.n() || p.n != q.n() || p.alphabet != q.alphabet())
    throw Error("precondition", "models and distribution must share alphabet and length");
  if (!(delta > 0) || !(ell > delta)) throw Error("precondition", "loss gap needs 0 < delta < ell");
  const int A = q.alphabet();
  for (int l = 0; l < q.n(); ++l)
    for (std::size_t s = 0, ns = ipow(A, l); s < ns; ++s)
      for (int y = 0; y < A; ++y) {
        if (q.at(l, s, y) < ell) throw Error("precondition", "a conditional of q lies below ell");
        if (std::fabs(q.at(l, s, y) - q_tilde.at(l, s, y)) > delta)
          throw Error("precondition", "q and its quantized copy differ by more than delta");
      }
  return q.n() * delta / (ell - delta);
}

double boosted_min_conditional(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star) {
  return boosted_lm(q, d, alpha, i0_star).min_conditional();
}

bool boosted_lower_bound_check(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star, double ell) {
  return boosted_min_conditional(q, d, alpha, i0_star) >= ell / 3 - 1e-12;
}

int minimal_fraction_bits(double alpha, double ell, int k, int b_DF) {
  if (!(alpha > 0) || !(ell > 0) || k < 1) throw Error("precondition", "fraction bits need alpha > 0, ell > 0, k >= 1");
  double target = alpha * alpha * std::pow(ell, k + 1) / (1088.0 * k * k);
  int b = std::max(0, b_DF);
  while (std::ldexp(1.0, -b) > target) ++b;
  return b;
}

int minimal_integer_bits(int b_DI, int k, int alphabet, long long T_D) {
  return b_DI + ceil_log2(std::pow(static_cast<double>(alphabet), k)) + ceil_log2(static_cast<double>(k) * T_D) + 1;
}

QuantizedBoostResult build_boosted_rnn_quantized(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k,
                                                 double alpha, int i0_star, bool complemented,
                                                 const QuantizedFormats& formats) {
  const BitsFormat& b = formats.q;
  const BitsFormat& bd = formats.d;
  std::vector<std::string> failed;
  int need_int = minimal_integer_bits(bd.integer, k, alphabet, D.rnn_time);
  if (b.integer < need_int) {
    std::ostringstream os;
    os << "b_I >= b_DI + k log|alphabet| + log(k T_D) + 1 (" << b.integer << " < " << need_int << ")";
    failed.push_back(os.str());
  }
  if (b.fraction < bd.fraction) {
    std::ostringstream os;
    os << "b_F >= b_DF (" << b.fraction << " < " << bd.fraction << ")";
    failed.push_back(os.str());
  }
  if (!(formats.ell > 0) || formats.ell > 1.0 / alphabet) failed.push_back("0 < ell <= 1/|alphabet|");
  if (alpha > 0 && formats.ell > 0) {
    double target = alpha * alpha * std::pow(formats.ell, k + 1) / (1088.0 * k * k);
    if (std::ldexp(1.0, -b.fraction) > target) {
      std::ostringstream os;
      os << "2^-b_F <= alpha^2 ell^(k+1) / (1088 k^2) (" << std::ldexp(1.0, -b.fraction) << " > " << target << ")";
      failed.push_back(os.str());
    }
  }
  if (!failed.empty()) {
    std::string msg = "quantized boosting preconditions violated:";
    for (auto& f : failed) msg += " " + f + ";";
    throw Error("precondition", msg);
  }
  auto [g, rep] = build_boosted_rnn(Q, D, alphabet, k, alpha, i0_star, complemented);
  QuantizedBoostResult r;
  r.format = {b.integer + ceil_log2(static_cast<double>(g.rnn_time)), b.fraction};
  g.bits = r.format;
  r.graph = std::move(g);
  r.report = rep;
  r.loss_drop_certificate = alpha * alpha / (8.0 * k);
  r.prob_lower_bound = formats.ell / 4;
  r.max_output_error = 17.0 * k * std::ldexp(1.0, -b.fraction) / std::pow(formats.ell, k);
  return r;
}

}  // namespace ntpboost
