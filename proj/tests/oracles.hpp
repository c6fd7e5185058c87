#pragma once

// Brute-force reference computations shared by the tests. Each one enumerates documents
// directly and avoids the library's table code.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ntpboost/dist.hpp"
#include "ntpboost/distinguisher.hpp"

namespace oracle {

using ntpboost::Doc;

inline std::vector<Doc> all_docs(int A, int n) {
  std::vector<Doc> out;
  Doc x(n, 0);
  std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      out.push_back(x);
      return;
    }
    for (int y = 0; y < A; ++y) {
      x[i] = y;
      rec(i + 1);
    }
  };
  rec(0);
  return out;
}

inline bool agrees(const Doc& a, const Doc& b, int len) {
  for (int i = 0; i < len; ++i)
    if (a[i] != b[i]) return false;
  return true;
}

// Document list and probability vector in lexicographic order.
struct Table {
  int A, n;
  std::vector<Doc> docs;
  std::vector<double> pr;
};

inline Table table_of(const ntpboost::TextDistribution& t) { return {t.alphabet, t.n, all_docs(t.alphabet, t.n), t.probs}; }

inline double marginal(const Table& t, const Doc& s) {
  double m = 0;
  for (std::size_t d = 0; d < t.docs.size(); ++d)
    if (agrees(t.docs[d], s, static_cast<int>(s.size()))) m += t.pr[d];
  return m;
}

inline double conditional(const Table& t, const Doc& s, int y) {
  Doc sy = s;
  sy.push_back(y);
  return marginal(t, sy) / marginal(t, s);
}

inline double doc_prob(const ntpboost::LanguageModel& lm, const Doc& x) {
  double p = 1;
  for (int i = 0; i < lm.n(); ++i) p *= lm(std::span<const int>(x).first(i), x[i]);
  return p;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

inline double entropy(const std::vector<double>& p) {
  double s = 0;
  for (double v : p)
    if (v > 0) s -= v * std::log(v);
  return s;
}

// -(1/n) E_p sum_i log q(x_i | x_{:i}), conditionals from the model's document table.
inline double loss(const Table& p, const Table& q) {
  double s = 0;
  for (std::size_t d = 0; d < p.docs.size(); ++d) {
    if (p.pr[d] == 0) continue;
    for (int i = 0; i < p.n; ++i) {
      Doc pre(p.docs[d].begin(), p.docs[d].begin() + i);
      s -= p.pr[d] * std::log(conditional(q, pre, p.docs[d][i]));
    }
  }
  return s / p.n;
}

// Double enumeration over (y ~ p, x ~ q).
inline double advantage(const ntpboost::Distinguisher& d, const Table& p, const Table& q) {
  double total = 0;
  for (std::size_t yi = 0; yi < p.docs.size(); ++yi) {
    if (p.pr[yi] == 0) continue;
    const Doc& y = p.docs[yi];
    double inner = 0;
    for (int i = 1; i <= p.n; ++i) {
      double num = 0, den = 0;
      for (std::size_t xi = 0; xi < q.docs.size(); ++xi)
        if (agrees(q.docs[xi], y, i - 1)) {
          num += q.pr[xi] * d(i, q.docs[xi]);
          den += q.pr[xi];
        }
      inner += num / den - d(i, y);
    }
    total += p.pr[yi] * inner / p.n;
  }
  return total;
}

// Whole-document form of the block reweighting: q(x) times exp(-alpha d) / Z per block start.
inline std::vector<double> boosted(const Table& q, const ntpboost::Distinguisher& d, double alpha, int i0) {
  std::vector<double> out(q.pr.size());
  for (std::size_t xi = 0; xi < q.docs.size(); ++xi) {
    double w = q.pr[xi];
    for (int b = i0; b <= q.n - 1; b += d.k()) {
      double num = 0, den = 0;
      for (std::size_t zi = 0; zi < q.docs.size(); ++zi)
        if (agrees(q.docs[zi], q.docs[xi], b)) {
          num += q.pr[zi] * std::exp(-alpha * d(b + 1, q.docs[zi]));
          den += q.pr[zi];
        }
      w *= std::exp(-alpha * d(b + 1, q.docs[xi])) / (num / den);
    }
    out[xi] = w;
  }
  return out;
}

inline ntpboost::LanguageModel random_lm(int A, int n, std::mt19937_64& rng, double lo = 0.05) {
  ntpboost::LanguageModel lm(A, n);
  std::uniform_real_distribution<double> u(lo, 1.0);
  for (int l = 0; l < n; ++l)
    for (std::size_t s = 0, ns = ntpboost::ipow(A, l); s < ns; ++s) {
      std::vector<double> v(A);
      double t = 0;
      for (auto& x : v) t += (x = u(rng));
      for (int y = 0; y < A; ++y) lm.at(l, s, y) = v[y] / t;
    }
  return lm;
}

inline ntpboost::TextDistribution random_text(int A, int n, std::mt19937_64& rng) {
  ntpboost::TextDistribution t{A, n, {}};
  std::uniform_real_distribution<double> u(0.01, 1.0);
  double s = 0;
  for (std::size_t i = 0, m = ntpboost::ipow(A, n); i < m; ++i) s += t.probs.emplace_back(u(rng));
  for (auto& v : t.probs) v /= s;
  return t;
}

// Peaked documents: a few heavy documents over a light floor.
inline ntpboost::TextDistribution peaked_text(int A, int n, std::mt19937_64& rng) {
  ntpboost::TextDistribution t{A, n, {}};
  std::gamma_distribution<double> g(0.2, 1.0);
  double s = 0;
  for (std::size_t i = 0, m = ntpboost::ipow(A, n); i < m; ++i) s += t.probs.emplace_back(g(rng) + 1e-3);
  for (auto& v : t.probs) v /= s;
  return t;
}

inline double max_diff(const ntpboost::LanguageModel& a, const ntpboost::LanguageModel& b) {
  double e = 0;
  for (int l = 0; l < a.n(); ++l)
    for (std::size_t s = 0, ns = ntpboost::ipow(a.alphabet(), l); s < ns; ++s)
      for (int y = 0; y < a.alphabet(); ++y) e = std::max(e, std::fabs(a.at(l, s, y) - b.at(l, s, y)));
  return e;
}

// Bit coefficients by direct enumeration: n * advantage = sum over bits of bit * coef.
inline std::vector<std::vector<double>> naive_coefficients(const Table& p, const Table& q, int k) {
  std::vector<std::vector<double>> out(p.n);
  for (int i = 1; i <= p.n; ++i) {
    int len = ntpboost::window_len(i, k, p.n);
    out[i - 1].assign(ntpboost::ipow(p.A, len), 0.0);
    for (std::size_t yi = 0; yi < p.docs.size(); ++yi) {
      const Doc& y = p.docs[yi];
      double den = 0;
      for (std::size_t xi = 0; xi < q.docs.size(); ++xi)
        if (agrees(q.docs[xi], y, i - 1)) den += q.pr[xi];
      for (std::size_t xi = 0; xi < q.docs.size(); ++xi)
        if (agrees(q.docs[xi], y, i - 1))
          out[i - 1][ntpboost::doc_index(std::span<const int>(q.docs[xi]).first(len), p.A)] += p.pr[yi] * q.pr[xi] / den;
      out[i - 1][ntpboost::doc_index(std::span<const int>(y).first(len), p.A)] -= p.pr[yi];
    }
  }
  return out;
}

// Supremum of |advantage| over every per-position window predicate, by subset enumeration per position.
inline double exhaustive_sup(const Table& p, const Table& q, int k) {
  auto coef = naive_coefficients(p, q, k);
  double hi = 0, lo = 0;
  for (const auto& c : coef) {
    double mx = 0, mn = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << c.size()); ++mask) {
      double v = 0;
      for (std::size_t b = 0; b < c.size(); ++b)
        if (mask >> b & 1) v += c[b];
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    hi += mx;
    lo += mn;
  }
  return std::max(hi, -lo) / p.n;
}

}  // namespace oracle
