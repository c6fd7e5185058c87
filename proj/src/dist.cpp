#include "ntpboost/dist.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

namespace ntpboost {

std::size_t enum_cap() {
  if (const char* env = std::getenv("NTPBOOST_MAX_ENUM")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::size_t{1} << 20;
}

std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

std::size_t checked_pow(int base, int exp) {
  if (base < 1 || exp < 0) throw SizingError("bad alphabet or length");
  const std::size_t cap = enum_cap();
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) {
    r *= static_cast<std::size_t>(base);
    if (r > cap)
      throw SizingError(std::to_string(base) + "^" + std::to_string(exp) + " exceeds enumeration cap " +
                        std::to_string(cap));
  }
  return r;
}

std::size_t doc_index(std::span<const int> x, int alphabet) {
  std::size_t idx = 0;
  for (int v : x) idx = idx * alphabet + static_cast<std::size_t>(v);
  return idx;
}

Doc doc_at(std::size_t idx, int alphabet, int len) {
  Doc x(len);
  for (int i = len - 1; i >= 0; --i) {
    x[i] = static_cast<int>(idx % alphabet);
    idx /= alphabet;
  }
  return x;
}

std::string doc_str(std::span<const int> x) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(x[i]);
  }
  return "[" + s + "]";
}

TextDistribution TextDistribution::uniform(int alphabet, int n) {
  std::size_t m = checked_pow(alphabet, n);
  return {alphabet, n, std::vector<double>(m, 1.0 / static_cast<double>(m))};
}

TextDistribution TextDistribution::point_mass(int alphabet, const Doc& x) {
  TextDistribution t{alphabet, static_cast<int>(x.size()), {}};
  t.probs.assign(checked_pow(alphabet, t.n), 0.0);
  t.probs[doc_index(x, alphabet)] = 1.0;
  return t;
}

void TextDistribution::validate(double tol) const {
  if (alphabet < 1) throw Error("schema", "alphabet size must be positive", "/alphabet_size");
  if (n < 1) throw Error("schema", "n must be positive", "/n");
  std::size_t m = checked_pow(alphabet, n);
  if (probs.size() != m)
    throw Error("schema", "expected " + std::to_string(m) + " probabilities, got " + std::to_string(probs.size()),
                "/probs");
  double s = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double v = probs[i];
    if (std::isnan(v) || v < 0)
      throw Error("value", "probability must be a nonnegative number", "/probs/" + std::to_string(i));
    s += v;
  }
  if (std::abs(s - 1.0) > tol) {
    std::ostringstream os;
    os.precision(17);
    os << "probabilities sum to " << s << ", not 1 within tolerance " << tol;
    throw Error("normalization", os.str(), "/probs");
  }
}

LanguageModel::LanguageModel(int alphabet, int n) : alphabet_(alphabet), n_(n) {
  checked_pow(alphabet, n);
  cond_.resize(n);
  for (int l = 0; l < n; ++l) cond_[l].assign(ipow(alphabet, l + 1), 1.0 / alphabet);
}

double LanguageModel::operator()(std::span<const int> prefix, int y) const {
  return at(static_cast<int>(prefix.size()), doc_index(prefix, alphabet_), y);
}

void LanguageModel::set(std::span<const int> prefix, std::span<const double> dist) {
  std::size_t base = doc_index(prefix, alphabet_) * alphabet_;
  for (int y = 0; y < alphabet_; ++y) cond_[prefix.size()][base + y] = dist[y];
}

double LanguageModel::block(std::span<const int> s, std::span<const int> w) const {
  std::size_t idx = doc_index(s, alphabet_);
  int len = static_cast<int>(s.size());
  double r = 1.0;
  for (int y : w) {
    r *= at(len, idx, y);
    idx = idx * alphabet_ + y;
    ++len;
  }
  return r;
}

double LanguageModel::min_conditional() const {
  double m = 1.0;
  for (auto& row : cond_)
    for (double v : row) m = std::min(m, v);
  return m;
}

void LanguageModel::validate(double tol) const {
  for (int l = 0; l < n_; ++l) {
    std::size_t np = ipow(alphabet_, l);
    for (std::size_t s = 0; s < np; ++s) {
      double sum = 0;
      for (int y = 0; y < alphabet_; ++y) {
        double v = at(l, s, y);
        if (std::isnan(v) || v < 0 || v > 1)
          throw Error("value", "conditional outside [0,1] at prefix " + doc_str(doc_at(s, alphabet_, l)));
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol)
        throw Error("normalization", "conditionals at prefix " + doc_str(doc_at(s, alphabet_, l)) +
                                         " do not sum to 1");
    }
  }
}

std::vector<std::vector<double>> prefix_marginals(const TextDistribution& t) {
  std::vector<std::vector<double>> m(t.n + 1);
  m[t.n] = t.probs;
  for (int l = t.n - 1; l >= 0; --l) {
    m[l].assign(ipow(t.alphabet, l), 0.0);
    for (std::size_t i = 0; i < m[l + 1].size(); ++i) m[l][i / t.alphabet] += m[l + 1][i];
  }
  return m;
}

TextDistribution lm_to_text(const LanguageModel& lm, double tol) {
  lm.validate(tol);
  TextDistribution t{lm.alphabet(), lm.n(), {1.0}};
  for (int l = 0; l < lm.n(); ++l) {
    std::vector<double> next(t.probs.size() * lm.alphabet());
    for (std::size_t s = 0; s < t.probs.size(); ++s)
      for (int y = 0; y < lm.alphabet(); ++y) next[s * lm.alphabet() + y] = t.probs[s] * lm.at(l, s, y);
    t.probs = std::move(next);
  }
  return t;
}

LanguageModel text_to_lm(const TextDistribution& t) {
  LanguageModel lm(t.alphabet, t.n);
  auto m = prefix_marginals(t);
  for (int l = 0; l < t.n; ++l)
    for (std::size_t s = 0; s < m[l].size(); ++s) {
      if (m[l][s] <= 0) continue;  // stays uniform
      for (int y = 0; y < t.alphabet; ++y) lm.at(l, s, y) = m[l + 1][s * t.alphabet + y] / m[l][s];
    }
  return lm;
}

double marginal(const TextDistribution& t, std::span<const int> s) {
  if (static_cast<int>(s.size()) > t.n) throw Error("domain", "prefix longer than document");
  std::size_t span = ipow(t.alphabet, t.n - static_cast<int>(s.size()));
  std::size_t lo = doc_index(s, t.alphabet) * span;
  double r = 0;
  for (std::size_t i = lo; i < lo + span; ++i) r += t.probs[i];
  return r;
}

double block_conditional(const TextDistribution& t, std::span<const int> s, std::span<const int> z) {
  if (s.size() + z.size() > static_cast<std::size_t>(t.n)) throw Error("domain", "block runs past the document");
  double ms = marginal(t, s);
  if (ms <= 0) throw Error("undefined", "conditional on zero-marginal prefix " + doc_str(s));
  Doc sz(s.begin(), s.end());
  sz.insert(sz.end(), z.begin(), z.end());
  return marginal(t, sz) / ms;
}

void check_compatible(const TextDistribution& p, const TextDistribution& q) {
  if (p.alphabet != q.alphabet || p.n != q.n)
    throw Error("domain", "distributions differ in alphabet or length");
}

double kl(const TextDistribution& p, const TextDistribution& q) {
  check_compatible(p, q);
  double r = 0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (p.probs[i] <= 0) continue;
    if (q.probs[i] <= 0)
      throw Error("support", "q assigns zero probability to document " + doc_str(doc_at(i, p.alphabet, p.n)) +
                                 " which has positive probability under p");
    r += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
  }
  return r;
}

double entropy(const TextDistribution& p) {
  double r = 0;
  for (double v : p.probs)
    if (v > 0) r -= v * std::log(v);
  return r;
}

double tv(const TextDistribution& p, const TextDistribution& q) {
  check_compatible(p, q);
  double r = 0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) r += std::abs(p.probs[i] - q.probs[i]);
  return 0.5 * r;
}

double next_token_loss(const TextDistribution& p, const LanguageModel& q) {
  if (p.alphabet != q.alphabet() || p.n != q.n()) throw Error("domain", "model and distribution differ in shape");
  // Walk the prefix tree weighted by p's marginals.
  auto m = prefix_marginals(p);
  double r = 0;
  for (int l = 0; l < p.n; ++l)
    for (std::size_t s = 0; s < m[l].size(); ++s) {
      if (m[l][s] <= 0) continue;
      for (int y = 0; y < p.alphabet; ++y) {
        double w = m[l + 1][s * p.alphabet + y];
        if (w <= 0) continue;
        double c = q.at(l, s, y);
        if (c <= 0) {
          throw Error("support", "model gives zero probability to token " + std::to_string(y) +
                                     " after prefix " + doc_str(doc_at(s, p.alphabet, l)));
        }
        r -= w * std::log(c);
      }
    }
  return r / p.n;
}

DivergenceReport divergence_report(const TextDistribution& p, const LanguageModel& q) {
  TextDistribution qt = lm_to_text(q);
  return {kl(p, qt), entropy(p), next_token_loss(p, q), tv(p, qt)};
}

}  // namespace ntpboost
