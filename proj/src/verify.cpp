#include "ntpboost/verify.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "ntpboost/boosting.hpp"
#include "ntpboost/construction.hpp"
#include "ntpboost/fixedpoint.hpp"
#include "ntpboost/io.hpp"

namespace ntpboost {

namespace {

// Naive oracles: direct enumeration over documents, independent of the table code.

std::vector<Doc> all_docs(int A, int n) {
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

bool same_prefix(const Doc& a, const Doc& b, int len) {
  for (int i = 0; i < len; ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double naive_marginal(const TextDistribution& t, const Doc& s, const std::vector<Doc>& docs) {
  double m = 0;
  for (std::size_t d = 0; d < docs.size(); ++d)
    if (same_prefix(docs[d], s, static_cast<int>(s.size()))) m += t.probs[d];
  return m;
}

double naive_prob(const LanguageModel& lm, const Doc& x) {
  double pr = 1;
  for (int i = 0; i < lm.n(); ++i) pr *= lm(std::span<const int>(x).first(i), x[i]);
  return pr;
}

double naive_kl(const TextDistribution& p, const TextDistribution& q) {
  double s = 0;
  for (std::size_t d = 0; d < p.probs.size(); ++d)
    if (p.probs[d] > 0) s += p.probs[d] * std::log(p.probs[d] / q.probs[d]);
  return s;
}

double naive_advantage(const Distinguisher& d, const TextDistribution& p, const TextDistribution& q) {
  const int n = p.n;
  auto docs = all_docs(p.alphabet, n);
  double total = 0;
  for (std::size_t yi = 0; yi < docs.size(); ++yi) {
    if (p.probs[yi] == 0) continue;
    const Doc& y = docs[yi];
    double inner = 0;
    for (int i = 1; i <= n; ++i) {
      double num = 0, den = 0;
      for (std::size_t xi = 0; xi < docs.size(); ++xi)
        if (same_prefix(docs[xi], y, i - 1)) {
          num += q.probs[xi] * d(i, docs[xi]);
          den += q.probs[xi];
        }
      inner += num / den - d(i, y);
    }
    total += p.probs[yi] * inner / n;
  }
  return total;
}

// q'(x) = q(x) prod over blocks of exp(-alpha d) / Z, with Z summed over documents.
TextDistribution naive_boosted(const TextDistribution& q, const Distinguisher& d, double alpha, int i0) {
  auto docs = all_docs(q.alphabet, q.n);
  TextDistribution out = q;
  for (std::size_t xi = 0; xi < docs.size(); ++xi) {
    double w = q.probs[xi];
    for (int b = i0; b <= q.n - 1; b += d.k()) {
      double num = 0, den = 0;
      for (std::size_t zi = 0; zi < docs.size(); ++zi)
        if (same_prefix(docs[zi], docs[xi], b)) {
          num += q.probs[zi] * std::exp(-alpha * d(b + 1, docs[zi]));
          den += q.probs[zi];
        }
      w *= std::exp(-alpha * d(b + 1, docs[xi])) / (num / den);
    }
    out.probs[xi] = w;
  }
  return out;
}

LanguageModel random_lm(int A, int n, std::mt19937_64& rng, double lo = 0.05) {
  LanguageModel lm(A, n);
  std::uniform_real_distribution<double> u(lo, 1.0);
  for (int l = 0; l < n; ++l)
    for (std::size_t s = 0, ns = ipow(A, l); s < ns; ++s) {
      std::vector<double> v(A);
      double t = 0;
      for (auto& x : v) t += (x = u(rng));
      for (int y = 0; y < A; ++y) lm.at(l, s, y) = v[y] / t;
    }
  return lm;
}

TextDistribution random_text(int A, int n, std::mt19937_64& rng) { return lm_to_text(random_lm(A, n, rng)); }

double lm_diff(const LanguageModel& a, const LanguageModel& b) {
  double e = 0;
  for (int l = 0; l < a.n(); ++l)
    for (std::size_t s = 0, ns = ipow(a.alphabet(), l); s < ns; ++s)
      for (int y = 0; y < a.alphabet(); ++y) e = std::max(e, std::fabs(a.at(l, s, y) - b.at(l, s, y)));
  return e;
}

struct Recorder {
  std::vector<CheckResult>& out;
  double tol;

  void run(const std::string& name, const std::function<void(CheckResult&)>& body) {
    CheckResult r;
    r.name = name;
    try {
      body(r);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(r);
  }
};

void expect_close(CheckResult& r, double got, double want, double tol, const std::string& what) {
  double e = std::fabs(got - want);
  r.max_error = std::max(r.max_error, e);
  ++r.cases;
  if (!(e <= tol) && r.passed) {
    r.passed = false;
    r.detail = what + ": got " + std::to_string(got) + ", expected " + std::to_string(want);
  }
}

void expect_true(CheckResult& r, bool ok, const std::string& what) {
  ++r.cases;
  if (!ok && r.passed) {
    r.passed = false;
    r.detail = what;
  }
}

}  // namespace

std::vector<CheckResult> run_oracle_suite(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  Recorder rec{out, opts.tolerance};
  const double tol = opts.tolerance;
  const int reps = opts.quick ? 5 : 20;
  std::mt19937_64 rng(opts.seed);

  rec.run("lm_to_text vs per-document product", [&](CheckResult& r) {
    for (int t = 0; t < reps; ++t) {
      auto lm = random_lm(2, 4, rng);
      auto text = lm_to_text(lm);
      auto docs = all_docs(2, 4);
      for (std::size_t d = 0; d < docs.size(); ++d) expect_close(r, text.probs[d], naive_prob(lm, docs[d]), tol, "prob");
    }
  });

  rec.run("text_to_lm vs marginal ratios", [&](CheckResult& r) {
    auto docs = all_docs(2, 3);
    for (int t = 0; t < reps; ++t) {
      auto text = random_text(2, 3, rng);
      auto lm = text_to_lm(text);
      for (int l = 0; l < 3; ++l)
        for (std::size_t s = 0; s < ipow(2, l); ++s) {
          Doc pre = doc_at(s, 2, l);
          for (int y = 0; y < 2; ++y) {
            Doc sy = pre;
            sy.push_back(y);
            expect_close(r, lm.at(l, s, y), naive_marginal(text, sy, docs) / naive_marginal(text, pre, docs), tol,
                         "conditional");
          }
        }
    }
  });

  rec.run("advantage vs double enumeration", [&](CheckResult& r) {
    for (int t = 0; t < reps; ++t) {
      auto p = random_text(2, 4, rng), q = random_text(2, 4, rng);
      auto d = Distinguisher::random(2, 4, 2, rng);
      expect_close(r, advantage(d, p, q), naive_advantage(d, p, q), tol, "advantage");
      auto rep = offset_decomposition(d, p, q);
      double recon = 0;
      for (auto& o : rep.offsets) recon += o.w * o.a / p.n;
      expect_close(r, recon, rep.advantage, 1e-10, "offset reconstruction");
    }
  });

  rec.run("boosting drop and consistency", [&](CheckResult& r) {
    for (int t = 0; t < reps; ++t) {
      int n = 3 + t % 4, k = 1 + t % std::min(3, n);
      auto p = random_text(2, n, rng), q = random_text(2, n, rng);
      auto d = Distinguisher::random(k, n, 2, rng);
      auto br = boost_text(p, q, d);
      auto naive = naive_boosted(q, br.applied, br.alpha, br.offset);
      for (std::size_t x = 0; x < naive.probs.size(); ++x)
        expect_close(r, br.q_boosted.probs[x], naive.probs[x], tol, "boosted probability");
      double kb = naive_kl(p, q), ka = naive_kl(p, naive);
      expect_true(r, ka <= kb - br.alpha * br.alpha * n / (4.0 * k) + 1e-9, "KL drop below the guarantee");
      auto prod = lm_to_text(br.lm_boosted);
      for (std::size_t x = 0; x < naive.probs.size(); ++x)
        expect_close(r, prod.probs[x], naive.probs[x], tol, "product of boosted conditionals");
    }
  });

  rec.run("boosted circuit vs analytic conditionals", [&](CheckResult& r) {
    const int cases = opts.quick ? 2 : 6;
    for (int t = 0; t < cases; ++t) {
      int n = 3 + t % 2, k = 1 + t % 2;
      auto lm = random_lm(2, n, rng);
      auto d = Distinguisher::random(k, n, 2, rng);
      std::uniform_real_distribution<double> ua(0.05, 0.5);
      double alpha = ua(rng);
      int i0 = static_cast<int>(rng() % k);
      auto Q = compile_language_model(lm);
      auto D = compile_table_distinguisher(d);
      auto [g, rep] = build_boosted_rnn(Q, D, 2, k, alpha, i0);
      expect_true(r, rep.formulas_match(), "size, hidden or time differs from the formulas");
      auto want = boosted_lm(lm, d, alpha, i0);
      double e = lm_diff(lm_from_graph(g, 2, n), want);
      expect_close(r, e, 0, tol, "efficient construction");
      auto gs = build_boosted_rnn_simple(Q, D, 2, k, alpha, i0);
      expect_close(r, lm_diff(lm_from_graph(gs, 2, n), want), 0, tol, "simple construction");
      std::mt19937_64 srng(opts.seed + t);
      auto sr = verify_hidden_sufficiency(g, 3, srng, 2, n);
      expect_true(r, sr.passed, "hidden sufficiency: " + sr.message);
    }
  });

  rec.run("Pinsker bound over all window predicates", [&](CheckResult& r) {
    for (int t = 0; t < reps; ++t) {
      auto p = random_text(2, 4, rng), q = random_text(2, 4, rng);
      for (int k = 1; k <= 2; ++k) {
        auto best = max_advantage_oracle(p, q, k, Family::all_window());
        expect_true(r, std::fabs(best.advantage) <= pinsker_bound(p, q, k) + 1e-12, "advantage above the bound");
      }
    }
  });

  rec.run("loss, KL and entropy identity", [&](CheckResult& r) {
    for (int t = 0; t < reps; ++t) {
      auto p = random_text(3, 3, rng);
      auto q = random_lm(3, 3, rng);
      expect_close(r, 3 * next_token_loss(p, q) - naive_kl(p, lm_to_text(q)), entropy(p), tol, "identity");
    }
  });

  rec.run("transition library on integer grids", [&](CheckResult& r) {
    for (int c = -3; c <= 3; ++c)
      for (int x = -5; x <= 5; ++x) {
        std::vector<double> v{double(x)};
        expect_true(r, eval_expr(tf::ind_eq(ex::ref(0), c), v) == (x == c), "indicator_eq");
        expect_true(r, eval_expr(tf::ind_le(ex::ref(0), c), v) == (x <= c), "indicator_le");
        expect_true(r, eval_expr(tf::ind_ge(ex::ref(0), c), v) == (x >= c), "indicator_ge");
      }
    for (int base = 2; base <= 3; ++base)
      for (int k = 1; k <= 3; ++k) {
        std::vector<ExprPtr> xs;
        for (int j = 0; j < k; ++j) xs.push_back(ex::ref(j));
        auto inc = tf::base_c_increment(xs, base);
        std::size_t total = ipow(base, k);
        for (std::size_t val = 0; val < total; ++val) {
          std::vector<double> digits(k);
          for (int j = 0, rem = static_cast<int>(val); j < k; ++j, rem /= base) digits[j] = rem % base;
          std::size_t want = (val + 1) % total;
          std::size_t got = 0;
          for (int j = k - 1; j >= 0; --j) got = got * base + static_cast<std::size_t>(eval_expr(inc[j], digits));
          expect_true(r, got == want, "base_c_increment");
        }
      }
  });

  rec.run("quantized boosting bounds", [&](CheckResult& r) {
    const double ell = 0.125;
    const int n = 3, k = 1;
    auto lm = random_lm(2, n, rng, 0.3);
    auto d = Distinguisher::random(k, n, 2, rng);
    auto p = random_text(2, n, rng);
    auto q = lm_to_text(lm);
    auto br = boost_text(p, q, d);
    if (br.alpha == 0) return;
    int bf = minimal_fraction_bits(br.alpha, ell, k, 0);
    QuantizedFormats fm{{40, bf}, {0, 0}, ell};
    auto Q = compile_language_model(lm);
    auto D = compile_table_distinguisher(br.applied);
    auto res = build_boosted_rnn_quantized(Q, D, 2, k, br.alpha, br.offset, false, fm);
    long long sat = 0;
    auto qq = lm_from_graph(res.graph, 2, n, res.format, &sat);
    expect_true(r, sat == 0, "saturation in a certified run");
    double err = lm_diff(qq, br.lm_boosted);
    expect_true(r, err <= res.max_output_error, "output error above the bound");
    r.max_error = err;
    expect_true(r, qq.min_conditional() >= ell / 4, "conditional below ell / 4");
    double drop = next_token_loss(p, lm) - next_token_loss(p, qq);
    expect_true(r, drop * n >= br.alpha * br.alpha * n / (8.0 * k) - 1e-9, "loss drop below alpha^2 n / 8k");
  });

  if (!opts.fixtures.empty()) {
    rec.run("bundled fixtures", [&](CheckResult& r) {
      auto p = text_from_json(load_json_file(opts.fixtures / "p.json"));
      auto q = text_from_json(load_json_file(opts.fixtures / "q.json"));
      auto d = distinguisher_from_json(load_json_file(opts.fixtures / "d.json"));
      auto exp = load_json_file(opts.fixtures / "expected.json");
      auto br = boost_text(p, q, d);
      expect_close(r, advantage(d, p, q), exp["advantage"].get<double>(), tol, "advantage");
      expect_close(r, br.kl_before, exp["kl_before"].get<double>(), tol, "kl_before");
      expect_close(r, br.kl_after, exp["kl_after"].get<double>(), tol, "kl_after");
      expect_true(r, br.offset == exp["offset"].get<int>(), "offset");
      auto probs = exp["q_boosted"].get<std::vector<double>>();
      for (std::size_t x = 0; x < probs.size(); ++x) expect_close(r, br.q_boosted.probs[x], probs[x], tol, "q_boosted");
    });
  }
  return out;
}

void write_fixture_expectations(const std::filesystem::path& fixtures) {
  auto p = text_from_json(load_json_file(fixtures / "p.json"));
  auto q = text_from_json(load_json_file(fixtures / "q.json"));
  auto d = distinguisher_from_json(load_json_file(fixtures / "d.json"));
  double a = naive_advantage(d, p, q);
  auto rep = offset_decomposition(d, p, q);
  Distinguisher used = a < 0 ? complement(d) : d;
  if (a < 0) rep = offset_decomposition(used, p, q);
  double alpha = std::fabs(a);
  auto qb = alpha == 0 ? q : naive_boosted(q, used, alpha, rep.best_offset);
  json j{{"advantage", a},
         {"offset", alpha == 0 ? 0 : rep.best_offset},
         {"alpha", alpha},
         {"kl_before", naive_kl(p, q)},
         {"kl_after", naive_kl(p, qb)},
         {"q_boosted", qb.probs}};
  write_atomic(fixtures / "expected.json", dump(j));
}

}  // namespace ntpboost
