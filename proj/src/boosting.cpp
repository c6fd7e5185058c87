#include "ntpboost/boosting.hpp"

#include <algorithm>
#include <cmath>

namespace ntpboost {

std::vector<int> block_starts(int i0, int k, int n) {
  std::vector<int> r;
  for (int b = i0; b <= n - 1; b += k) r.push_back(b);
  return r;
}

int block_start_for(int i, int i0_star, int k) { return i0_star + k * ((i - 1 - i0_star) / k); }

double normalization_Z(const LanguageModel& q, const Distinguisher& d, double alpha, std::span<const int> s) {
  const int n = q.n(), A = q.alphabet();
  const int l = static_cast<int>(s.size());
  if (l >= n) throw Error("domain", "block start must leave at least one token");
  int m = std::min(d.k(), n - l);
  Doc x(s.begin(), s.end());
  x.resize(l + m);
  double z = 0;
  for (std::size_t w = 0, nw = ipow(A, m); w < nw; ++w) {
    Doc wd = doc_at(w, A, m);
    std::copy(wd.begin(), wd.end(), x.begin() + l);
    z += q.block(s, wd) * std::exp(-alpha * d(l + 1, x));
  }
  return z;
}

double normalization_Z(const TextDistribution& q, const Distinguisher& d, double alpha, std::span<const int> s) {
  if (marginal(q, s) <= 0) throw Error("undefined", "normalization at zero-marginal prefix " + doc_str(s));
  return normalization_Z(text_to_lm(q), d, alpha, s);
}

TextDistribution boosted_text(const LanguageModel& q, const Distinguisher& d, double alpha, int i0) {
  const int n = q.n(), A = q.alphabet(), k = d.k();
  TextDistribution base = lm_to_text(q);
  TextDistribution out = base;
  auto starts = block_starts(i0, k, n);
  // Z depends only on the prefix before each block start; cache per (start, prefix).
  std::vector<std::vector<double>> zcache(starts.size());
  for (std::size_t b = 0; b < starts.size(); ++b) zcache[b].assign(ipow(A, starts[b]), -1.0);
  for (std::size_t idx = 0; idx < out.probs.size(); ++idx) {
    if (base.probs[idx] == 0) continue;
    Doc x = doc_at(idx, A, n);
    double w = base.probs[idx];
    for (std::size_t b = 0; b < starts.size(); ++b) {
      int s0 = starts[b];
      std::span<const int> pre(x.data(), s0);
      double& z = zcache[b][doc_index(pre, A)];
      if (z < 0) z = normalization_Z(q, d, alpha, pre);
      w *= std::exp(-alpha * d(s0 + 1, x)) / z;
    }
    out.probs[idx] = w;
  }
  return out;
}

FG components_f_g(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star, int i,
                  std::span<const int> s, std::span<const int> x) {
  const int k = d.k(), n = q.n();
  int i0 = block_start_for(i, i0_star, k);
  int m = std::min(k, n - i0);
  if (static_cast<int>(s.size()) != m) throw Error("domain", "window has the wrong length");
  FG r;
  r.f1 = q.block(x.first(i0), s);
  Doc full(x.begin(), x.begin() + i0);
  full.insert(full.end(), s.begin(), s.end());
  r.f2 = std::exp(-alpha * d(i0 + 1, full));
  int match = 0;
  while (match < i - i0 && match < m && s[match] == x[i0 + match]) ++match;
  r.g1 = match >= i - i0;
  r.g2 = match >= i - i0 - 1;
  return r;
}

double boosted_next_token(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star,
                          std::span<const int> prefix, int token) {
  const int n = q.n(), A = q.alphabet(), k = d.k();
  int i = static_cast<int>(prefix.size()) + 1;
  if (i > n) throw Error("domain", "prefix too long");
  if (i <= i0_star) return q(prefix, token);
  Doc x(prefix.begin(), prefix.end());
  x.push_back(token);
  int i0 = block_start_for(i, i0_star, k);
  int m = std::min(k, n - i0);
  double num = 0, den = 0;
  for (std::size_t w = 0, nw = ipow(A, m); w < nw; ++w) {
    Doc s = doc_at(w, A, m);
    FG c = components_f_g(q, d, alpha, i0_star, i, s, x);
    num += c.f1 * c.f2 * c.g1;
    den += c.f1 * c.f2 * c.g2;
  }
  if (den <= 0) throw Error("undefined", "zero denominator in boosted conditional at prefix " + doc_str(prefix));
  return num / den;
}

double boosted_next_token(const TextDistribution& q, const Distinguisher& d, double alpha, int i0_star,
                          std::span<const int> prefix, int token) {
  return boosted_next_token(text_to_lm(q), d, alpha, i0_star, prefix, token);
}

LanguageModel boosted_lm(const LanguageModel& q, const Distinguisher& d, double alpha, int i0_star) {
  const int n = q.n(), A = q.alphabet();
  LanguageModel out(A, n);
  for (int l = 0; l < n; ++l)
    for (std::size_t s = 0, ns = ipow(A, l); s < ns; ++s) {
      Doc pre = doc_at(s, A, l);
      for (int y = 0; y < A; ++y) {
        double v;
        try {
          v = boosted_next_token(q, d, alpha, i0_star, pre, y);
        } catch (const Error&) {
          v = 1.0 / A;  // unreachable prefix under q
        }
        out.at(l, s, y) = v;
      }
    }
  return out;
}

BoostResult boost_text(const TextDistribution& p, const TextDistribution& q, const Distinguisher& d) {
  check_compatible(p, q);
  LanguageModel qlm = text_to_lm(q);
  AdvantageReport rep = offset_decomposition(d, p, qlm);
  BoostResult r;
  r.kl_before = kl(p, q);
  if (rep.advantage == 0) {
    r.q_boosted = q;
    r.lm_boosted = qlm;
    r.kl_after = r.kl_before;
    r.applied = d;
    return r;
  }
  Distinguisher used = d;
  if (rep.advantage < 0) {
    used = complement(d);
    rep = offset_decomposition(used, p, qlm);
    r.complemented = true;
  }
  r.alpha = rep.advantage;
  r.offset = rep.best_offset;
  r.q_boosted = boosted_text(qlm, used, r.alpha, r.offset);
  r.lm_boosted = boosted_lm(qlm, used, r.alpha, r.offset);
  r.kl_after = kl(p, r.q_boosted);
  r.guaranteed_drop = r.alpha * r.alpha * p.n / (4.0 * d.k());
  r.applied = std::move(used);
  return r;
}

}  // namespace ntpboost
