#include "ntpboost/selfboost.hpp"

#include <cmath>
#include <limits>

#include "ntpboost/boosting.hpp"
#include "ntpboost/construction.hpp"

namespace ntpboost {

namespace {

// Sizes of a compiled table distinguisher.
constexpr long long kTableSize = 5, kTableHidden = 3, kTableTime = 2;

ModelCost boosted_cost(const ModelCost& c, int alphabet, int k) {
  ModelCost r;
  r.size = c.size + c.hidden + kTableSize + kTableHidden + 7LL * k + 25;
  r.hidden = c.hidden + kTableHidden + 6LL * k + 17;
  r.time = (std::pow(static_cast<double>(alphabet), k) + 1) * k * (std::max(c.time, double(kTableTime)) + 4);
  return r;
}

double lm_max_diff(const LanguageModel& a, const LanguageModel& b) {
  double e = 0;
  const int A = a.alphabet();
  for (int l = 0; l < a.n(); ++l)
    for (std::size_t s = 0, ns = ipow(A, l); s < ns; ++s)
      for (int y = 0; y < A; ++y) e = std::max(e, std::fabs(a.at(l, s, y) - b.at(l, s, y)));
  return e;
}

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "bits") return Variant::bits;
  throw Error("schema", "unknown variant '" + s + "'", "/variant");
}

std::string to_string(Variant v) { return v == Variant::plain ? "plain" : "bits"; }

double SelfBoostSchedule::N(long long i) const { return 17.0 * (d_bound + k) * double(i) * double(i); }
double SelfBoostSchedule::H(long long i) const { return 12.0 * (d_bound + k) * double(i); }

double SelfBoostSchedule::log2_T(long long i) const {
  return double(i - 1) * std::log2(8.0 * k * std::pow(double(alphabet), k)) + std::log2(double(tau));
}

double SelfBoostSchedule::T(long long i) const {
  double l = log2_T(i);
  if (l >= 1024) return std::numeric_limits<double>::infinity();
  return std::pow(8.0 * k * std::pow(double(alphabet), k), double(i - 1)) * double(tau);
}

long long SelfBoostSchedule::bits(long long i) const {
  double la = std::log2(double(alphabet));
  double v = 3.0 * k * la * double(i) * double(i) + double(i) * std::log2(double(tau)) +
             772.0 * (double(k) * k / (epsilon * epsilon) * la + std::log2(1.0 / epsilon));
  return b_D + static_cast<long long>(std::ceil(v));
}

double SelfBoostSchedule::ell(long long i) const { return 0.99 / (alphabet * std::pow(4.0, double(i - 1))); }

double SelfBoostSchedule::drop_threshold() const {
  return epsilon * epsilon / ((variant == Variant::plain ? 4.0 : 8.0) * k);
}

std::pair<long long, long long> SelfBoostSchedule::j0_range() const {
  double base = k * std::log(double(alphabet)) / (epsilon * epsilon);
  double lo = (variant == Variant::plain ? 4.0 : 16.0) * base;
  double hi = (variant == Variant::plain ? 44.0 : 176.0) * base;
  return {static_cast<long long>(std::ceil(lo)), static_cast<long long>(std::floor(hi))};
}

double SelfBoostSchedule::round_bound() const {
  return (variant == Variant::plain ? 4.0 : 16.0) * k * std::log(double(alphabet)) / (epsilon * epsilon) + 1;
}

SelfBoostSchedule make_schedule(Variant variant, int d_bound, int k, long long tau, double epsilon, int alphabet,
                                int b_D) {
  if (!(epsilon > 0 && epsilon <= 1)) throw Error("domain", "epsilon must lie in (0, 1]", "/epsilon");
  if (d_bound < 1 || k < 1 || tau < 1 || alphabet < 1) throw Error("domain", "schedule parameters must be positive");
  SelfBoostSchedule s;
  s.variant = variant;
  s.d_bound = d_bound;
  s.k = k;
  s.tau = tau;
  s.epsilon = epsilon;
  s.alphabet = alphabet;
  s.b_D = b_D;
  return s;
}

long long sample_j0(const SelfBoostSchedule& s, std::mt19937_64& rng) {
  auto [lo, hi] = s.j0_range();
  if (hi < lo) throw Error("domain", "empty range for j0");
  return std::uniform_int_distribution<long long>(lo, hi)(rng);
}

long long sample_j0(int k, int alphabet, double epsilon, std::mt19937_64& rng, Variant variant) {
  return sample_j0(make_schedule(variant, 1, k, 1, epsilon, alphabet), rng);
}

double bad_set_bound(double L1, double epsilon) {
  if (L1 < 0 || !(epsilon > 0)) throw Error("domain", "bad set bound needs L1 >= 0 and epsilon > 0");
  return L1 / epsilon;
}

ModelState uniform_state(int alphabet, int n, bool with_graph) {
  ModelState s;
  s.lm = LanguageModel(alphabet, n);
  s.text = lm_to_text(s.lm);
  RnnGraph g = uniform_model(alphabet);
  s.cost = {g.size(), g.hidden_size(), double(g.rnn_time)};
  if (with_graph) s.graph = std::move(g);
  return s;
}

MinimizeResult minimize_loss_constrained(const TextDistribution& p, ModelState start, double N, double H, double T,
                                         const Family& family, double epsilon, int k, const CompileOptions& compile,
                                         long long schedule_index) {
  MinimizeResult res;
  res.state = std::move(start);
  ModelState& st = res.state;
  const int A = p.alphabet;
  while (true) {
    OracleResult orc = max_advantage_oracle(p, st.lm, k, family);
    res.final_advantage = std::fabs(orc.advantage);
    if (res.final_advantage <= epsilon) break;
    ModelCost next = boosted_cost(st.cost, A, k);
    if (!next.fits(N, H, T)) {
      res.budget_exhausted = true;
      break;
    }
    BoostResult br = boost_text(p, st.text, orc.best);
    BoostRecord rec;
    rec.schedule_index = schedule_index;
    rec.alpha = br.alpha;
    rec.offset = br.offset;
    rec.complemented = br.complemented;
    rec.kl_before = br.kl_before;
    rec.kl_after = br.kl_after;
    rec.guaranteed_drop = br.guaranteed_drop;
    rec.cost = next;

    if (st.graph) {
      double tree = 0;
      for (int l = 1; l <= p.n; ++l) tree += std::pow(double(A), l);
      if (next.time * tree * double(next.size) > compile.step_budget) {
        res.notes.push_back("compilation stopped at index " + std::to_string(schedule_index) + ": time " +
                            std::to_string(next.time) + " exceeds the simulation budget");
        st.graph.reset();
      } else {
        RnnGraph D = compile_table_distinguisher(br.applied);
        auto [g, rep] = build_boosted_rnn(*st.graph, D, A, k, br.alpha, br.offset);
        if (rep.built_size != next.size || rep.built_hidden != next.hidden || double(rep.built_time) != next.time)
          throw Error("invariant", "compiled model sizes disagree with the schedule accounting");
        double err = lm_max_diff(lm_from_graph(g, A, p.n), br.lm_boosted);
        if (err > compile.tolerance)
          throw Error("equivalence", "compiled model differs from the analytic model by " + std::to_string(err));
        st.graph = std::move(g);
      }
    }
    st.lm = std::move(br.lm_boosted);
    st.text = std::move(br.q_boosted);
    st.cost = next;
    rec.loss_after = next_token_loss(p, st.lm);
    res.boosts.push_back(rec);
  }
  return res;
}

SelfBoostTrace run_algorithm(const SelfBoostSchedule& sched, const TextDistribution& p, const Family& family,
                             std::mt19937_64& rng, const AlgorithmOptions& opts) {
  if (sched.alphabet != p.alphabet) throw Error("domain", "schedule alphabet differs from the distribution's");
  SelfBoostTrace tr;
  tr.schedule = sched;
  tr.j0 = opts.j0 ? *opts.j0 : sample_j0(sched, rng);
  tr.notes.push_back("loss minimization realized by boosting with the strongest family member");
  ModelState state = uniform_state(p.alphabet, p.n, opts.compile.enabled);
  ModelState prev;
  double prev_loss = 0;
  const double thr = sched.drop_threshold();
  for (long long i = tr.j0 + 1;; ++i) {
    MinimizeResult mr = minimize_loss_constrained(p, state, sched.N(i), sched.H(i), sched.T(i), family,
                                                  sched.epsilon, sched.k, opts.compile, i);
    IndexRecord rec;
    rec.index = i;
    rec.N = sched.N(i);
    rec.H = sched.H(i);
    rec.T = sched.T(i);
    rec.log2_T = sched.log2_T(i);
    if (sched.variant == Variant::bits) {
      rec.bits = sched.bits(i);
      rec.ell = sched.ell(i);
    }
    rec.cost = mr.state.cost;
    rec.loss = next_token_loss(p, mr.state.lm);
    rec.kl = kl(p, mr.state.text);
    rec.advantage = mr.final_advantage;
    rec.boosts = static_cast<int>(mr.boosts.size());
    rec.budget_exhausted = mr.budget_exhausted;
    tr.indices.push_back(rec);
    tr.boosts.insert(tr.boosts.end(), mr.boosts.begin(), mr.boosts.end());
    tr.notes.insert(tr.notes.end(), mr.notes.begin(), mr.notes.end());

    if (i >= tr.j0 + 2 && prev_loss - rec.loss < thr) {
      tr.termination = "loss_plateau";
      tr.returned_index = i - 1;
      break;
    }
    prev = std::move(mr.state);
    prev_loss = rec.loss;
    state = prev;
    if (i - tr.j0 >= opts.max_indices) {
      tr.termination = "index_limit";
      tr.returned_index = i;
      break;
    }
  }
  tr.model = prev.lm;
  tr.final_loss = next_token_loss(p, prev.lm);
  tr.final_kl = kl(p, prev.text);
  tr.final_advantage = std::fabs(max_advantage_oracle(p, prev.lm, sched.k, family).advantage);
  tr.pinsker = pinsker_bound(p, prev.text, sched.k);
  for (auto& b : tr.boosts)
    if (b.schedule_index <= tr.returned_index) ++tr.total_boosts;
  return tr;
}

BadSetReport empirical_bad_set(const SelfBoostSchedule& sched, const TextDistribution& p, const Family& family,
                               long long lo, long long hi) {
  // The boosting sequence does not depend on the budget, so the minimizer at index j stops at
  // the longest prefix of the unconstrained sequence that fits j's budget.
  const double inf = std::numeric_limits<double>::infinity();
  ModelState s0 = uniform_state(p.alphabet, p.n, false);
  double L0 = next_token_loss(p, s0.lm);
  MinimizeResult full = minimize_loss_constrained(p, s0, inf, inf, inf, family, sched.epsilon, sched.k);
  BadSetReport rep;
  rep.lo = lo;
  rep.hi = hi;
  for (long long j = lo; j <= hi + 1; ++j) {
    double L = L0;
    for (auto& b : full.boosts) {
      if (!b.cost.fits(sched.N(j), sched.H(j), sched.T(j))) break;
      L = b.loss_after;
    }
    rep.losses.push_back(L);
  }
  for (long long j = lo; j <= hi; ++j)
    if (rep.losses[j + 1 - lo] < rep.losses[j - lo] - sched.drop_threshold()) rep.bad.push_back(j);
  return rep;
}

}  // namespace ntpboost
