// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "ntpboost/boosting.hpp"
#include "ntpboost/construction.hpp"
#include "ntpboost/fixedpoint.hpp"
#include "ntpboost/rnn.hpp"
#include "ntpboost/selfboost.hpp"
#include "oracles.hpp"

using namespace ntpboost;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

oracle::Table table_of_lm(const LanguageModel& lm) {
  oracle::Table t{lm.alphabet(), lm.n(), oracle::all_docs(lm.alphabet(), lm.n()), {}};
  for (const auto& x : t.docs) t.pr.push_back(oracle::doc_prob(lm, x));
  return t;
}

// Random instances shared by criteria 1 and 2.
struct BoostCase {
  TextDistribution p, q;
  Distinguisher d;
};

std::vector<BoostCase> boost_cases() {
  std::mt19937_64 rng(1001);
  std::vector<BoostCase> out;
  for (int r = 0; r < 200; ++r) {
    int n = 3 + r % 4;
    int k = 1 + (r / 4) % 3;
    auto p = oracle::random_text(2, n, rng);
    auto q = oracle::random_text(2, n, rng);
    out.push_back({p, q, Distinguisher::random(k, n, 2, rng)});
  }
  return out;
}

Outcome c1_kl_drop() {
  auto t0 = Clock::now();
  Outcome o;
  double worst = INFINITY, boost_err = 0;
  int cases = 0;
  for (const auto& c : boost_cases()) {
    auto r = boost_text(c.p, c.q, c.d);
    const int n = c.p.n, k = c.d.k();
    double before = oracle::kl(c.p.probs, c.q.probs), after = oracle::kl(c.p.probs, r.q_boosted.probs);
    double slack = before - r.alpha * r.alpha * n / (4.0 * k) + 1e-9 - after;
    worst = std::min(worst, slack);
    if (slack < 0) o.pass = false;
    auto want = oracle::boosted(oracle::table_of(c.q), r.applied, r.alpha, r.offset);
    for (std::size_t x = 0; x < want.size(); ++x) boost_err = std::max(boost_err, std::fabs(want[x] - r.q_boosted.probs[x]));
    ++cases;
  }
  if (boost_err > 1e-9) o.pass = false;
  double secs = seconds_since(t0);
  if (secs >= 30) o.pass = false;
  o.detail = std::to_string(cases) + " instances, min slack " + fmt(worst) + ", reweighting vs oracle " + fmt(boost_err) +
             ", " + fmt(secs) + " s (limit 30 s)";
  return o;
}

Outcome c2_ratio_form() {
  Outcome o;
  double err = 0;
  int cases = 0;
  for (const auto& c : boost_cases()) {
    auto r = boost_text(c.p, c.q, c.d);
    auto docs = oracle::all_docs(2, c.p.n);
    for (std::size_t x = 0; x < docs.size(); ++x) {
      double prod = 1;
      for (int i = 0; i < c.p.n; ++i)
        prod *= boosted_next_token(c.q, r.applied, r.alpha, r.offset, std::span<const int>(docs[x]).first(i), docs[x][i]);
      err = std::max(err, std::fabs(prod - r.q_boosted.probs[x]));
    }
    ++cases;
  }
  o.pass = err <= 1e-9;
  o.detail = std::to_string(cases) + " instances, max error " + fmt(err) + " (tolerance 1e-9)";
  return o;
}

struct CircuitCase {
  LanguageModel lm;
  Distinguisher d;
  double alpha;
  int i0;
  bool complemented;
};

CircuitCase circuit_case(std::mt19937_64& rng, int n, int k) {
  std::uniform_real_distribution<double> ua(0.05, 1.0);
  auto lm = oracle::random_lm(2, n, rng);
  auto d = Distinguisher::random(k, n, 2, rng);
  double alpha = ua(rng);
  int i0 = static_cast<int>(rng() % k);
  bool comp = rng() % 4 == 0;
  return {lm, d, alpha, i0, comp};
}

Outcome c3_compilation() {
  auto t0 = Clock::now();
  Outcome o;
  std::mt19937_64 rng(1003);
  double err = 0;
  int size_mismatch = 0;
  for (int r = 0; r < 50; ++r) {
    int n = 3 + r % 2;
    int k = 1 + (r / 2) % 3;
    auto c = circuit_case(rng, n, k);
    auto Q = compile_language_model(c.lm);
    auto D = compile_table_distinguisher(c.d);
    auto [g, rep] = build_boosted_rnn(Q, D, 2, k, c.alpha, c.i0, c.complemented);
    long long want_size = Q.size() + Q.hidden_size() + D.size() + D.hidden_size() + 7LL * k + 25;
    long long want_hidden = Q.hidden_size() + D.hidden_size() + 6LL * k + 17;
    long long want_time = (ipow(2, k) + 1) * k * (std::max(Q.rnn_time, D.rnn_time) + 4);
    if (g.size() != want_size || g.hidden_size() != want_hidden || g.rnn_time != want_time) ++size_mismatch;
    auto table = oracle::boosted(table_of_lm(c.lm), c.complemented ? complement(c.d) : c.d, c.alpha, c.i0);
    oracle::Table tb{2, n, oracle::all_docs(2, n), table};
    auto got = lm_from_graph(g, 2, n);
    for (int l = 0; l < n; ++l)
      for (const auto& x : oracle::all_docs(2, l))
        for (int y = 0; y < 2; ++y) err = std::max(err, std::fabs(got(x, y) - oracle::conditional(tb, x, y)));
  }
  double secs = seconds_since(t0);
  o.pass = err <= 1e-9 && size_mismatch == 0 && secs < 300;
  o.detail = "50 instances, max output error " + fmt(err) + " (tolerance 1e-9), " + std::to_string(size_mismatch) +
             " size/hidden/time mismatches, " + fmt(secs) + " s (limit 300 s)";
  return o;
}

Outcome c4_cross_construction() {
  Outcome o;
  std::mt19937_64 rng(1004);
  double err = 0;
  long long samples = 0;
  int shape = 0;
  for (int r = 0; r < 50; ++r) {
    int n = 3, k = 1 + r % 2;
    auto c = circuit_case(rng, n, k);
    auto Q = compile_language_model(c.lm);
    auto D = compile_table_distinguisher(c.d);
    auto a = build_boosted_rnn(Q, D, 2, k, c.alpha, c.i0, c.complemented).first;
    auto b = build_boosted_rnn_simple(Q, D, 2, k, c.alpha, c.i0, c.complemented);
    for (const auto& x : oracle::all_docs(2, n)) {
      auto ta = run(a, x), tb = run(b, x);
      if (ta.outputs.size() != tb.outputs.size()) {
        ++shape;
        continue;
      }
      for (std::size_t j = 0; j < ta.outputs.size(); ++j) {
        if (ta.outputs[j].first != tb.outputs[j].first) ++shape;
        err = std::max(err, std::fabs(ta.outputs[j].second - tb.outputs[j].second));
        ++samples;
      }
    }
  }
  o.pass = shape == 0 && err <= 1e-12;
  o.detail = "50 instances, " + std::to_string(samples) + " scheduled outputs, max difference " + fmt(err) +
             ", " + std::to_string(shape) + " schedule mismatches";
  return o;
}

Outcome c5_pinsker() {
  Outcome o;
  std::mt19937_64 rng(1005);
  double worst_ratio = 0;
  int violations = 0;
  for (int r = 0; r < 50; ++r) {
    const int n = 4, k = 1 + r % 2;
    auto p = r % 3 == 0 ? oracle::peaked_text(2, n, rng) : oracle::random_text(2, n, rng);
    auto q = oracle::random_text(2, n, rng);
    auto tp = oracle::table_of(p), tq = oracle::table_of(q);
    double sup = oracle::exhaustive_sup(tp, tq, k);
    double bound = std::sqrt(k / (2.0 * n) * oracle::kl(tp.pr, tq.pr));
    if (sup > bound + 1e-12) ++violations;
    worst_ratio = std::max(worst_ratio, sup / bound);
  }
  o.pass = violations == 0;
  o.detail = "50 pairs, largest sup-advantage / bound " + fmt(worst_ratio) + ", " + std::to_string(violations) + " violations";
  return o;
}

Outcome c6_identities() {
  Outcome o;
  std::mt19937_64 rng(1006);
  double err = 0;
  for (int r = 0; r < 100; ++r) {
    int A = 2 + r % 2, n = 2 + r % 4;
    if (A == 3 && n > 4) n = 4;
    auto p = oracle::random_text(A, n, rng);
    auto q = oracle::random_lm(A, n, rng);
    auto tp = oracle::table_of(p);
    double lib = n * next_token_loss(p, q) - kl(p, lm_to_text(q)) - entropy(p);
    double naive = n * oracle::loss(tp, table_of_lm(q)) - oracle::kl(tp.pr, table_of_lm(q).pr) - oracle::entropy(tp.pr);
    err = std::max({err, std::fabs(lib), std::fabs(naive)});
  }
  o.pass = err <= 1e-9;
  o.detail = "100 instances, max |n L - KL - H| " + fmt(err) + " (tolerance 1e-9)";
  return o;
}

Outcome c7_self_boosting() {
  auto t0 = Clock::now();
  Outcome o;
  std::mt19937_64 rng(1007);
  const double eps = 0.3;
  int runs = 0, outside = 0, two = 0, bad_round = 0, bad_adv = 0, bad_size = 0;
  auto check = [&](const SelfBoostSchedule& s, const TextDistribution& p, const SelfBoostTrace& tr) {
    ++runs;
    if (tr.total_boosts > s.round_bound()) ++bad_round;
    if (!(tr.final_advantage <= eps + 1e-9)) ++bad_adv;
    auto B = empirical_bad_set(s, p, Family::prefix1(), tr.j0 + 1, tr.j0 + 1);
    if (B.bad.empty()) {
      ++outside;
      if (tr.indices.size() == 2) ++two;
    }
    auto full = empirical_bad_set(s, p, Family::prefix1(), 1, std::max<long long>(tr.j0 + 2, 40));
    if (double(full.bad.size()) > bad_set_bound(full.losses.front(), s.drop_threshold())) ++bad_size;
  };
  for (int k = 1; k <= 2; ++k)
    for (int r = 0; r < 6; ++r) {
      auto p = oracle::peaked_text(2, 4, rng);
      auto s = make_schedule(Variant::plain, 2, k, 6, eps, 2);
      check(s, p, run_algorithm(s, p, Family::prefix1(), rng));
    }
  // Small fixed indices make the budgets bind, so some of them fall inside the bad set.
  for (int k = 1; k <= 2; ++k)
    for (long long j0 = 0; j0 < 12; ++j0) {
      auto p = oracle::peaked_text(2, 3, rng);
      auto s = make_schedule(Variant::plain, 1, k, 6, eps, 2);
      AlgorithmOptions opt;
      opt.j0 = j0;
      check(s, p, run_algorithm(s, p, Family::prefix1(), rng, opt));
    }
  double secs = seconds_since(t0);
  o.pass = bad_round == 0 && bad_adv == 0 && two == outside && bad_size == 0 && secs < 120;
  o.detail = std::to_string(runs) + " runs, " + std::to_string(bad_round) + " over the round bound, " +
             std::to_string(bad_adv) + " above epsilon, " + std::to_string(two) + "/" + std::to_string(outside) +
             " runs outside the bad set stopped after two indices, " + std::to_string(bad_size) +
             " bad sets above L/threshold, " + fmt(secs) + " s (limit 120 s)";
  return o;
}

Outcome c8_quantized() {
  Outcome o;
  std::mt19937_64 rng(1008);
  const double ell = 0.125;
  int built = 0, err_fail = 0, min_fail = 0, drop_fail = 0;
  long long sat_total = 0;
  double worst_err_ratio = 0;
  for (int r = 0; built < 8 && r < 100; ++r) {
    int n = 3 + r % 2, k = 1 + (r / 2) % 2;
    auto lm = oracle::random_lm(2, n, rng, 0.3);
    auto p = oracle::peaked_text(2, n, rng);
    auto br = boost_text(p, lm_to_text(lm), Distinguisher::random(k, n, 2, rng));
    if (br.alpha <= 0) continue;
    auto Q = compile_language_model(lm);
    auto D = compile_table_distinguisher(br.applied);
    int bf = minimal_fraction_bits(br.alpha, ell, k, 0);
    int bi = std::max(minimal_integer_bits(0, k, 2, D.rnn_time), integer_bits_needed(double(ipow(2, n + 1))));
    auto res = build_boosted_rnn_quantized(Q, D, 2, k, br.alpha, br.offset, false, {{bi, bf}, {0, 0}, ell});
    long long sat = 0;
    auto qq = lm_from_graph(res.graph, 2, n, res.format, &sat);
    sat_total += sat;
    double err = oracle::max_diff(qq, br.lm_boosted);
    double bound = 17.0 * k * std::ldexp(1.0, -bf) / std::pow(ell, k);
    worst_err_ratio = std::max(worst_err_ratio, err / bound);
    if (err > bound) ++err_fail;
    if (qq.min_conditional() < ell / 4) ++min_fail;
    auto tp = oracle::table_of(p);
    double drop = oracle::kl(tp.pr, table_of_lm(lm).pr) - oracle::kl(tp.pr, table_of_lm(qq).pr);
    if (drop < br.alpha * br.alpha * n / (8.0 * k) - 1e-9) ++drop_fail;
    ++built;
  }

  std::uniform_real_distribution<double> u(0, 1);
  int fuzz_fail = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    int m = 1 + static_cast<int>(rng() % 8);
    double delta = u(rng) / m * 0.999 + 1e-12;
    double px = 1, py = 1;
    for (int j = 0; j < m; ++j) {
      double x = u(rng), y = std::clamp(x + (2 * u(rng) - 1) * delta, 0.0, 1.0);
      px *= x;
      py *= y;
    }
    if (std::fabs(px - py) > product_error_bound(m, delta)) ++fuzz_fail;
  }
  for (int rep = 0; rep < 10000; ++rep) {
    double l = 0.01 + 0.99 * u(rng);
    double delta = l * (0.001 + 0.998 * u(rng));
    double y = l + (1 - l) * u(rng), x = std::max(1e-9, y * u(rng));
    double xt = std::max(0.0, x + (2 * u(rng) - 1) * delta), yt = y + (2 * u(rng) - 1) * delta;
    double bound = fraction_error_bound(x, y, delta, l) * (1 + 1e-14);
    if ((x + delta) / (y - delta) > bound || xt / yt > bound) ++fuzz_fail;
  }
  auto docs = oracle::all_docs(2, 3);
  for (int rep = 0; rep < 10000; ++rep) {
    auto q = oracle::random_lm(2, 3, rng, 0.2);
    double l = q.min_conditional();
    double delta = l * (0.01 + 0.98 * u(rng));
    LanguageModel qt = q;
    for (int len = 0; len < 3; ++len)
      for (std::size_t s = 0; s < ipow(2, len); ++s)
        for (int y = 0; y < 2; ++y) qt.at(len, s, y) = q.at(len, s, y) + (2 * u(rng) - 1) * delta;
    auto p = oracle::random_text(2, 3, rng);
    double gap = 0;
    for (std::size_t d = 0; d < docs.size(); ++d)
      gap += p.probs[d] * std::log(oracle::doc_prob(q, docs[d]) / oracle::doc_prob(qt, docs[d]));
    if (gap > quantized_loss_gap(p, q, qt, delta, l) + 1e-12) ++fuzz_fail;
  }

  o.pass = built == 8 && err_fail == 0 && min_fail == 0 && drop_fail == 0 && sat_total == 0 && fuzz_fail == 0;
  o.detail = std::to_string(built) + " quantized circuits, worst error / bound " + fmt(worst_err_ratio) + ", " +
             std::to_string(min_fail) + " below ell/4, " + std::to_string(drop_fail) + " short drops, " +
             std::to_string(sat_total) + " saturations, " + std::to_string(fuzz_fail) + " of 30000 fuzz cases failed";
  return o;
}

Outcome c9_transitions() {
  Outcome o;
  long long checks = 0, wrong = 0;
  auto expect = [&](double got, double want) {
    ++checks;
    if (got != want) ++wrong;
  };
  for (int cc = -6; cc <= 6; ++cc)
    for (int x = -8; x <= 8; ++x) {
      std::vector<double> v{double(x)};
      expect(eval_expr(build_transition(TransitionKind::indicator_eq, {.c = double(cc)})[0], v), x == cc);
      expect(eval_expr(build_transition(TransitionKind::indicator_le, {.c = double(cc)})[0], v), x <= cc);
      expect(eval_expr(build_transition(TransitionKind::indicator_ge, {.c = double(cc)})[0], v), x >= cc);
      for (auto cmp : {tf::Cmp::eq, tf::Cmp::le, tf::Cmp::ge}) {
        bool hold = cmp == tf::Cmp::eq ? x == cc : cmp == tf::Cmp::le ? x <= cc : x >= cc;
        auto e = build_transition(TransitionKind::if_else, {.c = double(cc), .cmp = cmp})[0];
        expect(eval_expr(e, std::vector<double>{double(x), 7.5, -3.25}), hold ? 7.5 : -3.25);
      }
    }
  for (int w = 1; w <= 6; ++w) {
    auto orr = build_transition(TransitionKind::or_, {.width = w})[0];
    auto andd = build_transition(TransitionKind::and_, {.width = w})[0];
    for (int mask = 0; mask < (1 << w); ++mask) {
      std::vector<double> v(w);
      for (int j = 0; j < w; ++j) v[j] = mask >> j & 1;
      expect(eval_expr(orr, v), mask != 0);
      expect(eval_expr(andd, v), mask == (1 << w) - 1);
    }
  }
  auto nt = build_transition(TransitionKind::not_, {})[0];
  expect(eval_expr(nt, std::vector<double>{0}), 1);
  expect(eval_expr(nt, std::vector<double>{1}), 0);
  for (int base = 2; base <= 3; ++base)
    for (int k = 1; k <= 4; ++k) {
      auto inc = build_transition(TransitionKind::base_c_increment, {.c = double(base), .width = k});
      std::size_t total = ipow(base, k);
      for (std::size_t val = 0; val < total; ++val) {
        std::vector<double> digits(k);
        std::size_t rem = val;
        for (int j = 0; j < k; ++j, rem /= base) digits[j] = double(rem % base);
        std::size_t next = (val + 1) % total;
        for (int j = 0; j < k; ++j, next /= base) expect(eval_expr(inc[j], digits), double(next % base));
      }
    }
  for (double alpha : {-2.0, -0.7, 0.0, 0.3, 1.0, 3.5}) {
    auto e = build_transition(TransitionKind::exp_binary, {.alpha = alpha})[0];
    expect(eval_expr(e, std::vector<double>{0}), 1);
    expect(eval_expr(e, std::vector<double>{1}), std::exp(alpha));
  }
  o.pass = wrong == 0;
  o.detail = std::to_string(checks) + " exact comparisons, " + std::to_string(wrong) + " mismatches";
  return o;
}

Outcome c10_scrubbing() {
  Outcome o;
  std::mt19937_64 rng(1010);
  std::vector<std::pair<std::string, RnnGraph>> graphs;
  graphs.emplace_back("uniform", uniform_model(2));
  for (int k = 1; k <= 2; ++k) {
    auto c = circuit_case(rng, 3, k);
    auto Q = compile_language_model(c.lm);
    auto D = compile_table_distinguisher(c.d);
    std::string tag = " k=" + std::to_string(k);
    graphs.emplace_back("lm" + tag, Q);
    graphs.emplace_back("table" + tag, D);
    graphs.emplace_back("sync" + tag, build_sync_enumerator(Q, 2, k, c.i0, 6));
    graphs.emplace_back("f1" + tag, build_f1(Q, 2, k, c.i0, 6));
    graphs.emplace_back("f2" + tag, build_f2(D, 2, k, c.i0, c.alpha, 6, c.complemented));
    graphs.emplace_back("g" + tag, build_g(2, k, c.i0, 6));
    auto boosted = build_boosted_rnn(Q, D, 2, k, c.alpha, c.i0, c.complemented).first;
    graphs.emplace_back("boosted" + tag, boosted);
    graphs.emplace_back("simple" + tag, build_boosted_rnn_simple(Q, D, 2, k, c.alpha, c.i0, c.complemented));
    auto d2 = Distinguisher::random(k, 3, 2, rng);
    graphs.emplace_back("nested" + tag, build_boosted_rnn(boosted, compile_table_distinguisher(d2), 2, k, 0.3, 0).first);
  }
  int failed = 0;
  std::string first;
  for (auto& [name, g] : graphs) {
    auto rep = verify_hidden_sufficiency(g, 20, rng, 2, 4);
    if (!rep.passed) {
      ++failed;
      if (first.empty()) first = ", first failure " + name + ": " + rep.message;
    }
  }
  o.pass = failed == 0;
  o.detail = std::to_string(graphs.size()) + " graphs x 20 streams, " + std::to_string(failed) + " failed" + first;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"boosting drops KL by alpha^2 n / 4k", c1_kl_drop},
      {"ratio form reproduces the boosted distribution", c2_ratio_form},
      {"boosted circuit outputs and size formulas", c3_compilation},
      {"efficient and simple constructions agree", c4_cross_construction},
      {"exhaustive advantage within the Pinsker bound", c5_pinsker},
      {"loss, KL and entropy identity", c6_identities},
      {"self-boosting loop", c7_self_boosting},
      {"quantized boosting bounds", c8_quantized},
      {"transition library", c9_transitions},
      {"hidden-set scrubbing", c10_scrubbing},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
