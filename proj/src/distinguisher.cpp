#include "ntpboost/distinguisher.hpp"

#include <algorithm>
#include <cmath>

namespace ntpboost {

namespace {

void check_shape(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q) {
  if (d.k() > p.n) throw Error("domain", "window length k exceeds document length n");
  if (d.n() != p.n || d.alphabet() != p.alphabet || q.n() != p.n || q.alphabet() != p.alphabet)
    throw Error("domain", "distinguisher, p and q differ in alphabet or length");
}

}  // namespace

Distinguisher::Distinguisher(int k, int n, int alphabet) : k_(k), n_(n), alphabet_(alphabet) {
  if (k < 1) throw Error("domain", "k must be positive");
  if (k > n) throw Error("domain", "window length k exceeds document length n");
  checked_pow(alphabet, n);
  bits_.resize(n);
  for (int i = 1; i <= n; ++i) bits_[i - 1].assign(ipow(alphabet, window_len(i, k, n)), 0);
}

Distinguisher Distinguisher::from_function(int k, int n, int alphabet,
                                           const std::function<int(int, std::span<const int>)>& f) {
  Distinguisher d(k, n, alphabet);
  for (int i = 1; i <= n; ++i) {
    int len = window_len(i, k, n);
    for (std::size_t w = 0; w < d.bits_[i - 1].size(); ++w) {
      Doc x = doc_at(w, alphabet, len);
      d.bits_[i - 1][w] = static_cast<std::uint8_t>(f(i, x) != 0);
    }
  }
  return d;
}

Distinguisher Distinguisher::random(int k, int n, int alphabet, std::mt19937_64& rng, double density) {
  Distinguisher d(k, n, alphabet);
  std::bernoulli_distribution coin(density);
  for (auto& row : d.bits_)
    for (auto& b : row) b = coin(rng) ? 1 : 0;
  d.label = "random-table";
  return d;
}

int Distinguisher::operator()(int i, std::span<const int> x) const {
  if (i < 1 || i > n_) throw Error("domain", "position out of range");
  int len = window_len(i, k_, n_);
  if (static_cast<int>(x.size()) < len) throw Error("domain", "string shorter than the window");
  return bits_[i - 1][doc_index(x.first(len), alphabet_)];
}

long long Distinguisher::size_meta() const {
  long long s = 0;
  for (auto& row : bits_) s += static_cast<long long>(row.size());
  return s;
}

long long Distinguisher::ones() const {
  long long s = 0;
  for (auto& row : bits_)
    for (auto b : row) s += b;
  return s;
}

Distinguisher complement(const Distinguisher& d) {
  Distinguisher c = Distinguisher::from_function(d.k(), d.n(), d.alphabet(),
                                                 [&](int i, std::span<const int> x) { return 1 - d(i, x); });
  c.label = d.label.empty() ? "complement" : "not " + d.label;
  return c;
}

std::vector<std::vector<double>> advantage_coefficients(const TextDistribution& p, const LanguageModel& q, int k) {
  const int n = p.n, A = p.alphabet;
  auto marg = prefix_marginals(p);
  std::vector<std::vector<double>> coef(n);
  for (int i = 1; i <= n; ++i) {
    int m = std::min(k, n - i + 1);
    int len = i - 1 + m;
    std::size_t ns = ipow(A, i - 1), nw = ipow(A, m);
    coef[i - 1].assign(ns * nw, 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
      double ps = marg[i - 1][s];
      for (std::size_t w = 0; w < nw; ++w) {
        std::size_t full = s * nw + w;
        double qk = 0;
        if (ps > 0) {
          Doc wd = doc_at(w, A, m);
          qk = 1.0;
          std::size_t idx = s;
          for (int t = 0; t < m; ++t) {
            qk *= q.at(i - 1 + t, idx, wd[t]);
            idx = idx * A + wd[t];
          }
        }
        coef[i - 1][full] = ps * qk - marg[len][full];
      }
    }
  }
  return coef;
}

std::vector<double> position_contributions(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q) {
  check_shape(d, p, q);
  auto coef = advantage_coefficients(p, q, d.k());
  std::vector<double> c(p.n, 0.0);
  for (int i = 1; i <= p.n; ++i)
    for (std::size_t w = 0; w < coef[i - 1].size(); ++w)
      if (d.bit(i, w)) c[i - 1] += coef[i - 1][w];
  return c;
}

double advantage(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q) {
  auto c = position_contributions(d, p, q);
  double s = 0;
  for (double v : c) s += v;
  return s / p.n;
}

double advantage(const Distinguisher& d, const TextDistribution& p, const TextDistribution& q) {
  check_compatible(p, q);
  return advantage(d, p, text_to_lm(q));
}

AdvantageReport offset_decomposition(const Distinguisher& d, const TextDistribution& p, const LanguageModel& q) {
  auto c = position_contributions(d, p, q);
  const int n = p.n, k = d.k();
  AdvantageReport r;
  for (double v : c) r.advantage += v;
  r.advantage /= n;
  double best = -INFINITY;
  for (int j = 0; j < k; ++j) {
    int w = offset_weight(j, n, k);
    double s = 0;
    for (int i0 = j; i0 <= n - 1; i0 += k) s += c[i0];  // block start i0 covers token i0+1
    double a = s / w;
    r.offsets.push_back({j, w, a});
    if (a > best) {
      best = a;
      r.best_offset = j;
    }
  }
  return r;
}

AdvantageReport offset_decomposition(const Distinguisher& d, const TextDistribution& p, const TextDistribution& q) {
  check_compatible(p, q);
  return offset_decomposition(d, p, text_to_lm(q));
}

double pinsker_bound(const TextDistribution& p, const TextDistribution& q, int k) {
  return std::sqrt(static_cast<double>(k) / (2.0 * p.n) * kl(p, q));
}

std::size_t Prefix1Keys::window_offset(int len) const {
  std::size_t off = 0;
  for (int l = 1; l < len; ++l) off += ipow(alphabet, l);
  return off;
}

std::size_t Prefix1Keys::count() const { return static_cast<std::size_t>(alphabet + 1) * window_offset(k + 1); }

std::size_t Prefix1Keys::key(int prev, int len, std::size_t widx) const {
  return static_cast<std::size_t>(prev) * window_offset(k + 1) + window_offset(len) + widx;
}

namespace {

// Splits a full-window index at position i into (previous token, clipped window index).
struct Prefix1Split {
  int prev;
  int len;
  std::size_t widx;
};

Prefix1Split split_prefix1(int i, std::size_t full, int k, int n, int A) {
  int m = std::min(k, n - i + 1);
  std::size_t nw = ipow(A, m);
  std::size_t s = full / nw;
  int prev = i == 1 ? A : static_cast<int>(s % A);
  return {prev, m, full % nw};
}

}  // namespace

Distinguisher prefix1_distinguisher(int k, int n, int alphabet, const std::vector<std::uint8_t>& phi) {
  Prefix1Keys keys{k, n, alphabet};
  if (phi.size() != keys.count()) throw Error("domain", "prefix table has the wrong number of entries");
  Distinguisher d(k, n, alphabet);
  for (int i = 1; i <= n; ++i)
    for (std::size_t w = 0; w < d.bits()[i - 1].size(); ++w) {
      auto sp = split_prefix1(i, w, k, n, alphabet);
      d.set_bit(i, w, phi[keys.key(sp.prev, sp.len, sp.widx)]);
    }
  d.label = "prefix1-table";
  return d;
}

std::vector<double> prefix1_coefficients(const TextDistribution& p, const LanguageModel& q, int k) {
  Prefix1Keys keys{k, p.n, p.alphabet};
  auto coef = advantage_coefficients(p, q, k);
  std::vector<double> agg(keys.count(), 0.0);
  for (int i = 1; i <= p.n; ++i)
    for (std::size_t w = 0; w < coef[i - 1].size(); ++w) {
      auto sp = split_prefix1(i, w, k, p.n, p.alphabet);
      agg[keys.key(sp.prev, sp.len, sp.widx)] += coef[i - 1][w];
    }
  return agg;
}

OracleResult max_advantage_oracle(const TextDistribution& p, const LanguageModel& q, int k, const Family& family) {
  if (k > p.n) throw Error("domain", "window length k exceeds document length n");
  OracleResult r;
  switch (family.kind) {
    case Family::Kind::list: {
      if (family.members.empty()) throw Error("domain", "empty distinguisher family");
      double best = -1;
      for (const auto& d : family.members) {
        double a = advantage(d, p, q);
        if (std::abs(a) > best) {
          best = std::abs(a);
          r.best = d;
          r.advantage = a;
        }
      }
      return r;
    }
    case Family::Kind::all_window: {
      // Advantage is linear in the bits and separates over (position, prefix) groups,
      // so the supremum is a per-group subset search.
      auto coef = advantage_coefficients(p, q, k);
      Distinguisher dpos(k, p.n, p.alphabet), dneg(k, p.n, p.alphabet);
      double tpos = 0, tneg = 0;
      for (int i = 1; i <= p.n; ++i) {
        std::size_t g = ipow(p.alphabet, std::min(k, p.n - i + 1));
        if (g >= 63 || (std::size_t{1} << g) > enum_cap())
          throw SizingError("subset enumeration over " + std::to_string(g) + " windows is infeasible");
        std::size_t groups = coef[i - 1].size() / g;
        for (std::size_t s = 0; s < groups; ++s) {
          const double* c = &coef[i - 1][s * g];
          double mx = 0, mn = 0;
          std::size_t amx = 0, amn = 0;
          for (std::size_t mask = 1; mask < (std::size_t{1} << g); ++mask) {
            double v = 0;
            for (std::size_t b = 0; b < g; ++b)
              if (mask >> b & 1) v += c[b];
            if (v > mx) mx = v, amx = mask;
            if (v < mn) mn = v, amn = mask;
          }
          tpos += mx;
          tneg += mn;
          for (std::size_t b = 0; b < g; ++b) {
            dpos.set_bit(i, s * g + b, amx >> b & 1);
            dneg.set_bit(i, s * g + b, amn >> b & 1);
          }
        }
      }
      r.best = tpos >= -tneg ? dpos : dneg;
      r.best.label = "window-subset";
      r.advantage = advantage(r.best, p, q);
      return r;
    }
    case Family::Kind::prefix1: {
      auto agg = prefix1_coefficients(p, q, k);
      std::vector<std::uint8_t> pos(agg.size()), neg(agg.size());
      double tpos = 0, tneg = 0;
      for (std::size_t j = 0; j < agg.size(); ++j) {
        if (agg[j] > 0) pos[j] = 1, tpos += agg[j];
        if (agg[j] < 0) neg[j] = 1, tneg += agg[j];
      }
      r.best = prefix1_distinguisher(k, p.n, p.alphabet, tpos >= -tneg ? pos : neg);
      r.advantage = advantage(r.best, p, q);
      return r;
    }
  }
  return r;
}

OracleResult max_advantage_oracle(const TextDistribution& p, const TextDistribution& q, int k, const Family& family) {
  check_compatible(p, q);
  return max_advantage_oracle(p, text_to_lm(q), k, family);
}

}  // namespace ntpboost
