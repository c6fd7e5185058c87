#include "ntpboost/construction.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ntpboost {

namespace {

using ex::mul;
using ex::one_minus;
using ex::ref;

ExprPtr EQ(int id, double c) { return tf::ind_eq(ref(id), c); }
ExprPtr LE(int id, double c) { return tf::ind_le(ref(id), c); }
ExprPtr GE(int id, double c) { return tf::ind_ge(ref(id), c); }

ExprPtr prod3(ExprPtr a, ExprPtr b, ExprPtr c) { return ex::prod({std::move(a), std::move(b), std::move(c)}); }

// Holds unless the gate fires: gate * f + (1 - gate) * self.
ExprPtr gated(ExprPtr gate, ExprPtr f, int self) {
  return ex::add(mul(gate, std::move(f)), mul(one_minus(gate), ref(self)));
}

// Code of a string: code(empty) = 0, code(s.y) = code(s) |A| + y + 1.
double code_of(std::span<const int> s, int A) {
  double c = 0;
  for (int y : s) c = c * A + y + 1;
  return c;
}

double code_of_zeros(int len, int A) {
  double c = 0;
  for (int i = 0; i < len; ++i) c = c * A + 1;
  return c;
}

struct Layout {
  int A, k, i0;
  long long tau, N, T;
  long long enum_end() const { return N * k * tau; }  // last step of the enumeration phase
};

Layout make_layout(int alphabet, int k, int i0_star, long long tau) {
  if (alphabet < 2) throw Error("domain", "enumeration needs an alphabet of size at least 2");
  if (k < 1) throw Error("domain", "k must be positive");
  if (i0_star < 0 || i0_star > k - 1) throw Error("domain", "offset must lie in [0, k-1]");
  if (tau < 4) throw Error("domain", "tau must be at least 4");
  long long N = enumeration_count(alphabet, k);
  return {alphabet, k, i0_star, tau, N, (N + 1) * k * tau};
}

struct Counters {
  int vin = -1, w0 = -1, u0 = -1, w = -1, u = -1, vc = -1, ve = -1;
  std::vector<int> y, ze;
  std::vector<int> hidden() const {
    std::vector<int> h{w0, u0, w, u};
    if (vc >= 0) h.push_back(vc);
    h.insert(h.end(), y.begin(), y.end());
    h.insert(h.end(), ze.begin(), ze.end());
    h.push_back(ve);
    return h;
  }
};

// Step counters, token storage Y and the enumerator E.
Counters add_counters(RnnGraph& g, const Layout& L, int vin, const std::string& pre, bool with_vc) {
  Counters C;
  C.vin = vin;
  const double T = static_cast<double>(L.T), tau = static_cast<double>(L.tau), k = L.k;
  C.w0 = g.add_node(pre + "w0", T);
  C.u0 = g.add_node(pre + "u0", L.k - L.i0);
  C.w = g.add_node(pre + "w", tau);
  C.u = g.add_node(pre + "u", 1);
  if (with_vc) C.vc = g.add_node(pre + "vc", 0);
  for (int j = 1; j <= L.k; ++j) C.y.push_back(g.add_node(pre + "y" + std::to_string(j), 0));
  for (int j = 1; j <= L.k; ++j) C.ze.push_back(g.add_node(pre + "ze" + std::to_string(j), 0));
  C.ve = g.add_node(pre + "ve", 0);

  auto loop_end = EQ(C.w0, T);
  g.set_expr(C.w0, ex::lin(1, {{1, ref(C.w0)}, {-T, loop_end}}));
  g.set_expr(C.u0, ex::add(ref(C.u0), mul(loop_end, ex::lin(1, {{-k, EQ(C.u0, k)}}))));
  g.set_expr(C.w, ex::lin(1, {{1, ref(C.w)}, {-tau, EQ(C.w, tau)}}));
  g.set_expr(C.u, ex::add(ref(C.u), mul(EQ(C.w, tau - 1), ex::lin(1, {{-k, EQ(C.u, k)}}))));
  if (with_vc) g.set_expr(C.vc, ex::add(ref(C.vc), mul(loop_end, LE(C.vc, L.i0))));

  auto clear = mul(loop_end, EQ(C.u0, k));
  for (int j = 1; j <= L.k; ++j) {
    int y = C.y[j - 1];
    auto load = mul(EQ(C.w0, 1), EQ(C.u0, j));
    g.set_expr(y, mul(one_minus(clear), ex::add(mul(load, ref(vin)), mul(one_minus(load), ref(y)))));
  }
  std::vector<ExprPtr> digits;
  for (int z : C.ze) digits.push_back(ref(z));
  auto next = tf::base_c_increment(digits, L.A);
  auto inc = mul(EQ(C.w, tau - 1), EQ(C.u, k));
  for (int j = 0; j < L.k; ++j) {
    int z = C.ze[j];
    g.set_expr(z, mul(one_minus(loop_end), ex::add(mul(inc, next[j]), mul(one_minus(inc), ref(z)))));
  }
  // Token r of the current string is digit k+1-r.
  std::vector<ExprPtr> pick;
  for (int r = 1; r <= L.k; ++r) pick.push_back(mul(EQ(C.u, r), ref(C.ze[L.k - r])));
  g.set_expr(C.ve, mul(LE(C.w0, static_cast<double>(L.enum_end() - 1)), ex::sum_of(pick)));
  return C;
}

struct Embedded {
  Counters C;
  std::map<int, int> H, Ht, R;
  ExprPtr out;  // Q's output as seen by the surrounding circuit
  std::vector<int> hidden;
};

// Lays out the enumerator around Q: anchor copy H of the state set, working copy Ht, and
// copies R of the remaining nodes. With full_copy the state set is every non-input node.
Embedded embed_enumerated(RnnGraph& g, const RnnGraph& Q, const Layout& L, const std::string& pre, bool full_copy) {
  Q.validate();
  if (L.tau < Q.rnn_time + 2) throw Error("domain", "tau must be at least the circuit time plus 2");
  Embedded E;
  std::map<int, int> inputs;
  for (int in : Q.input_ids) inputs[in] = g.add_input(pre + "in:" + Q.nodes[in].name);
  int vin = Q.input_ids.empty() ? g.add_input(pre + "in") : inputs[Q.input_ids[0]];
  E.C = add_counters(g, L, vin, pre, true);
  const Counters& C = E.C;

  std::vector<int> state, rest;
  for (int v = 0; v < Q.size(); ++v) {
    if (Q.is_input(v)) continue;
    (full_copy || Q.is_hidden(v) ? state : rest).push_back(v);
  }
  for (int h : state) E.H[h] = g.add_node(pre + "H:" + Q.nodes[h].name, Q.nodes[h].init);
  for (int h : state) E.Ht[h] = g.add_node(pre + "Ht:" + Q.nodes[h].name, Q.nodes[h].init);
  for (int r : rest) E.R[r] = g.add_node(pre + "R:" + Q.nodes[r].name, Q.nodes[r].init);

  const double TQ = static_cast<double>(Q.rnn_time), tau = static_cast<double>(L.tau);
  auto c1 = LE(C.vc, L.i0);
  auto nc1 = one_minus(c1);
  auto runslot = LE(C.w, TQ);
  auto gateA = mul(c1, LE(C.w0, TQ));
  auto gateC = ex::prod({nc1, EQ(C.u0, L.k), GE(C.w0, static_cast<double>(L.enum_end())), runslot});
  auto gateH = ex::add(gateA, gateC);
  auto load = mul(EQ(C.w, tau), EQ(C.u, 1));
  auto run2 = prod3(nc1, LE(C.w0, static_cast<double>(L.enum_end() - 1)), runslot);
  auto runR = ex::add(gateA, run2);

  std::vector<ExprPtr> stored;
  for (int r = 1; r <= L.k; ++r) stored.push_back(mul(EQ(C.u, r), ref(C.y[r - 1])));
  auto inH = ex::add(mul(c1, ref(vin)), mul(nc1, ex::sum_of(stored)));
  auto inR = ex::add(mul(c1, ref(vin)), mul(nc1, ref(C.ve)));
  auto sel = [&](int h) { return ex::add(mul(c1, ref(E.H.at(h))), mul(nc1, ref(E.Ht.at(h)))); };

  for (int h : state) {
    const ExprPtr& f = Q.nodes[h].expr;
    auto fa = substitute(f, [&](int id) { return Q.is_input(id) ? inH : ref(E.H.at(id)); });
    g.set_expr(E.H[h], gated(gateH, fa, E.H[h]));
    auto fb = substitute(f, [&](int id) { return Q.is_input(id) ? ref(C.ve) : ref(E.Ht.at(id)); });
    g.set_expr(E.Ht[h], ex::sum_of({mul(load, ref(E.H[h])), mul(run2, fb),
                                     mul(ex::lin(1, {{-1, load}, {-1, run2}}), ref(E.Ht[h]))}));
  }
  for (int r : rest) {
    auto fr = substitute(Q.nodes[r].expr, [&](int id) -> ExprPtr {
      if (Q.is_input(id)) return inR;
      if (E.R.count(id)) return ref(E.R.at(id));
      return sel(id);
    });
    g.set_expr(E.R[r], gated(runR, fr, E.R[r]));
  }
  E.out = E.R.count(Q.output_id) ? ref(E.R.at(Q.output_id)) : sel(Q.output_id);
  E.hidden = C.hidden();
  for (int h : state) E.hidden.push_back(E.H[h]);
  return E;
}

void finish(RnnGraph& g, const Layout& L, long long period, long long offset, const std::string& kind, int depth_from) {
  g.rnn_time = L.T;
  g.schedule = {kind, period, offset};
  g.max_depth = std::max(64, depth_from + 24);
}

int max_depth_of(const RnnGraph& Q) { return Q.max_depth; }

RnnGraph f1_impl(const RnnGraph& Q, const Layout& L, const std::string& pre, bool full_copy, int* vc_out,
                 Counters* counters) {
  RnnGraph g;
  Embedded E = embed_enumerated(g, Q, L, pre, full_copy);
  const Counters& C = E.C;
  const double tau = static_cast<double>(L.tau), T = static_cast<double>(L.T);
  int v = g.add_node(pre + "vout", 1);
  auto c1 = LE(C.vc, L.i0);
  auto rst = mul(EQ(C.w, tau), EQ(C.u, 1));
  auto cp = mul(c1, EQ(C.w0, T - 2));
  auto mul2 = mul(one_minus(c1), EQ(C.w, tau - 2));
  g.set_expr(v, ex::sum_of({rst, mul(cp, E.out), prod3(mul2, ref(v), E.out),
                            mul(ex::lin(1, {{-1, rst}, {-1, cp}, {-1, mul2}}), ref(v))}));
  g.output_id = v;
  g.hidden_ids = E.hidden;
  finish(g, L, L.k * L.tau, 1, "enum_string", max_depth_of(Q));
  if (vc_out) *vc_out = C.vc;
  if (counters) *counters = C;
  return g;
}

RnnGraph f2_impl(const RnnGraph& D, const Layout& L, double alpha, bool complemented, const std::string& pre,
                 bool full_copy) {
  RnnGraph g;
  Embedded E = embed_enumerated(g, D, L, pre, full_copy);
  int v = g.add_node(pre + "vout", 1);
  double ea = std::exp(-alpha);
  // d = 0 gives exp(0) normally, exp(-alpha) when complemented.
  double at0 = complemented ? ea : 1.0, at1 = complemented ? 1.0 : ea;
  g.set_expr(v, ex::lin(at1, {{at0 - at1, tf::ind_eq(E.out, 0)}}));
  g.output_id = v;
  g.hidden_ids = E.hidden;
  finish(g, L, L.k * L.tau, 1, "enum_string", max_depth_of(D));
  return g;
}

RnnGraph g_impl(const Layout& L, const std::string& pre) {
  RnnGraph g;
  int vin = g.add_input(pre + "in");
  Counters C = add_counters(g, L, vin, pre, false);
  const int k = L.k;
  std::vector<int> W;
  for (int l = 1; l <= k; ++l) {
    int w = g.add_node(pre + "W" + std::to_string(l), 0);
    g.set_expr(w, tf::ind_eq(ex::sub(ref(C.y[l - 1]), ref(C.ze[k - l])), 0));
    W.push_back(w);
  }
  int v1 = g.add_node(pre + "g1", 0), v2 = g.add_node(pre + "g2", 0);
  auto upd = prod3(EQ(C.w, 3), EQ(C.u, 1), LE(C.w0, static_cast<double>(L.enum_end())));
  ex::Terms m1{{-1, ref(C.u0)}}, m2{{-1, ref(C.u0)}};
  for (int l = 1; l <= k; ++l) {
    m1.emplace_back(1, mul(ref(W[l - 1]), GE(C.u0, l)));
    m2.emplace_back(1, mul(ref(W[l - 1]), GE(C.u0, l + 1)));
  }
  g.set_expr(v1, gated(upd, tf::ind_eq(ex::lin(0, m1), 0), v1));
  g.set_expr(v2, gated(upd, tf::ind_eq(ex::lin(1, m2), 0), v2));
  g.output_id = v1;
  g.designated = {{"g1", v1}, {"g2", v2}};
  g.hidden_ids = C.hidden();
  finish(g, L, L.k * L.tau, 1, "enum_string", 0);
  return g;
}

// Appends every node of src to dst with ids shifted; returns the shift.
int append_graph(RnnGraph& dst, const RnnGraph& src) {
  const int off = dst.size();
  for (auto& nd : src.nodes) {
    RnnNode c = nd;
    if (c.expr) c.expr = remap(c.expr, [&](int id) { return id + off; });
    dst.nodes.push_back(std::move(c));
  }
  for (int v : src.input_ids) dst.input_ids.push_back(v + off);
  for (int v : src.hidden_ids) dst.hidden_ids.push_back(v + off);
  return off;
}

std::pair<RnnGraph, ConstructionReport> assemble(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k,
                                                 double alpha, int i0_star, bool complemented, bool full_copy) {
  Q.validate();
  D.validate();
  long long tau = std::max(Q.rnn_time, D.rnn_time) + 4;
  Layout L = make_layout(alphabet, k, i0_star, tau);
  int vc = -1;
  Counters C1;
  RnnGraph f1 = f1_impl(Q, L, "f1/", full_copy, &vc, &C1);
  RnnGraph f2 = f2_impl(D, L, alpha, complemented, "f2/", full_copy);
  RnnGraph o = g_impl(L, "g/");

  RnnGraph g;
  append_graph(g, f1);
  int off2 = append_graph(g, f2);
  int off3 = append_graph(g, o);
  int u1 = f1.output_id, u2 = f2.output_id + off2;
  int v1 = o.designated.at("g1") + off3, v2 = o.designated.at("g2") + off3;

  const double T = static_cast<double>(L.T), tau_d = static_cast<double>(L.tau);
  int w1 = g.add_node("w1", 0), w2 = g.add_node("w2", 0), vout = g.add_node("vout", 1.0 / alphabet);
  auto loop_end = EQ(C1.w0, T);
  auto acc = prod3(EQ(C1.w, tau_d - 1), EQ(C1.u, k), LE(C1.w0, static_cast<double>(L.enum_end())));
  g.set_expr(w1, mul(one_minus(loop_end), ex::add(ref(w1), ex::prod({acc, ref(u1), ref(u2), ref(v1)}))));
  g.set_expr(w2, mul(one_minus(loop_end), ex::add(ref(w2), ex::prod({acc, ref(u1), ref(u2), ref(v2)}))));
  auto c1 = LE(vc, i0_star);
  auto sel = EQ(C1.w0, T - 1);
  auto ratio_gate = mul(sel, one_minus(c1));
  auto guard = ex::recip(ex::lin(1, {{1, ref(w2)}, {-1, ratio_gate}}));
  g.set_expr(vout, ex::sum_of({prod3(sel, c1, ref(u1)), prod3(ratio_gate, ref(w1), guard),
                               mul(one_minus(sel), ref(vout))}));
  g.output_id = vout;
  g.rnn_time = L.T;
  g.schedule = {"per_token", L.T, 0};
  g.max_depth = std::max({f1.max_depth, f2.max_depth, o.max_depth});
  g.validate();

  ConstructionReport rep;
  rep.built_size = g.size();
  rep.built_hidden = g.hidden_size();
  rep.built_time = g.rnn_time;
  rep.formula_size = Q.size() + Q.hidden_size() + D.size() + D.hidden_size() + 7LL * k + 25;
  rep.formula_hidden = Q.hidden_size() + D.hidden_size() + 6LL * k + 17;
  rep.formula_time = boosted_time(Q.rnn_time, D.rnn_time, alphabet, k);
  return {std::move(g), rep};
}

}  // namespace

long long enumeration_count(int alphabet, int k) {
  long long N = 1;
  for (int i = 0; i < k; ++i) {
    N *= alphabet;
    if (N > kMaxEnumStrings)
      throw SizingError("enumerating " + std::to_string(alphabet) + "^" + std::to_string(k) +
                        " strings exceeds the construction limit " + std::to_string(kMaxEnumStrings));
  }
  return N;
}

long long loop_time(int alphabet, int k, long long tau) { return (enumeration_count(alphabet, k) + 1) * k * tau; }

long long boosted_time(long long T_Q, long long T_D, int alphabet, int k) {
  return loop_time(alphabet, k, std::max(T_Q, T_D) + 4);
}

RnnGraph uniform_model(int alphabet) {
  RnnGraph g;
  g.add_input("in");
  int o = g.add_node("o", 1.0 / alphabet, ex::c(1.0 / alphabet));
  g.hidden_ids = {o};
  g.output_id = o;
  g.rnn_time = 1;
  g.schedule = {"per_token", 1, 0};
  return g;
}

RnnGraph compile_language_model(const LanguageModel& lm) {
  const int A = lm.alphabet(), n = lm.n();
  if (A < 2) throw Error("domain", "compiled models need an alphabet of size at least 2");
  const long long T = 2;
  RnnGraph g;
  int in = g.add_input("in");
  int ph = g.add_node("ph", 0), c = g.add_node("c", 0), o = g.add_node("o", 0);
  double Cn = code_of_zeros(n, A);
  auto rd = EQ(ph, T - 1);
  g.set_expr(ph, ex::lin(1, {{1, ref(ph)}, {-static_cast<double>(T), EQ(ph, T - 1)}}));
  auto grow = ex::lin(1, {{static_cast<double>(A - 1), ref(c)}, {1, ref(in)}});
  g.set_expr(c, ex::add(ref(c), prod3(rd, one_minus(GE(c, Cn)), grow)));
  std::vector<ExprPtr> terms;
  for (int l = 0; l < n; ++l)
    for (std::size_t s = 0, ns = ipow(A, l); s < ns; ++s) {
      ex::Terms by_token;
      for (int y = 0; y < A; ++y) by_token.emplace_back(lm.at(l, s, y), tf::ind_eq(ref(in), y));
      terms.push_back(mul(EQ(c, code_of(doc_at(s, A, l), A)), ex::lin(0, by_token)));
    }
  terms.push_back(ex::scale(1.0 / A, GE(c, Cn)));
  g.set_expr(o, gated(rd, ex::sum_of(terms), o));
  g.hidden_ids = {ph, c};
  g.output_id = o;
  g.rnn_time = T;
  g.schedule = {"per_token", T, 0};
  g.validate();
  return g;
}

RnnGraph compile_table_distinguisher(const Distinguisher& d) {
  const int A = d.alphabet(), n = d.n(), k = d.k();
  if (A < 2) throw Error("domain", "compiled circuits need an alphabet of size at least 2");
  const long long T = 2;
  RnnGraph g;
  int in = g.add_input("in");
  int ph = g.add_node("ph", 0), cnt = g.add_node("cnt", 0), c = g.add_node("c", 0), o = g.add_node("o", 0);
  auto rd = EQ(ph, T - 1);
  g.set_expr(ph, ex::lin(1, {{1, ref(ph)}, {-static_cast<double>(T), EQ(ph, T - 1)}}));
  g.set_expr(cnt, ex::add(ref(cnt), mul(rd, one_minus(GE(cnt, n + k)))));
  auto grow = ex::lin(1, {{static_cast<double>(A - 1), ref(c)}, {1, ref(in)}});
  g.set_expr(c, ex::add(ref(c), prod3(rd, one_minus(GE(cnt, n)), grow)));
  std::vector<ExprPtr> terms;
  for (int m = k; m <= n + k - 1; ++m) {
    int i = m - k + 1;
    int len = window_len(i, k, n);
    auto at_m = EQ(cnt, m - 1);
    if (m <= n) {
      for (std::size_t s = 0, ns = ipow(A, len - 1); s < ns; ++s) {
        ex::Terms by_token;
        for (int y = 0; y < A; ++y)
          if (d.bit(i, s * A + y)) by_token.emplace_back(1.0, tf::ind_eq(ref(in), y));
        if (by_token.empty()) continue;
        terms.push_back(prod3(at_m, EQ(c, code_of(doc_at(s, A, len - 1), A)), ex::lin(0, by_token)));
      }
    } else {
      for (std::size_t w = 0, nw = ipow(A, len); w < nw; ++w)
        if (d.bit(i, w)) terms.push_back(mul(at_m, EQ(c, code_of(doc_at(w, A, len), A))));
    }
  }
  g.set_expr(o, gated(rd, terms.empty() ? ex::c(0) : ex::sum_of(terms), o));
  g.hidden_ids = {ph, cnt, c};
  g.output_id = o;
  g.rnn_time = T;
  g.schedule = {"per_token", T, 0};
  g.validate();
  return g;
}

RnnGraph build_sync_enumerator(const RnnGraph& Q, int alphabet, int k, int i0_star, long long tau) {
  Layout L = make_layout(alphabet, k, i0_star, tau);
  RnnGraph g;
  Embedded E = embed_enumerated(g, Q, L, "", false);
  // The enumerated value lives on a node: the R copy of the output, or the working copy.
  g.output_id = E.R.count(Q.output_id) ? E.R.at(Q.output_id) : E.Ht.at(Q.output_id);
  g.hidden_ids = E.hidden;
  finish(g, L, L.tau, 1, "enum_slot", Q.max_depth);
  g.validate();
  return g;
}

RnnGraph build_f1(const RnnGraph& Q, int alphabet, int k, int i0_star, long long tau) {
  if (tau < Q.rnn_time + 4) throw Error("domain", "tau must be at least the circuit time plus 4");
  RnnGraph g = f1_impl(Q, make_layout(alphabet, k, i0_star, tau), "", false, nullptr, nullptr);
  g.validate();
  return g;
}

RnnGraph build_f2(const RnnGraph& D, int alphabet, int k, int i0_star, double alpha, long long tau,
                  bool complemented) {
  RnnGraph g = f2_impl(D, make_layout(alphabet, k, i0_star, tau), alpha, complemented, "", false);
  g.validate();
  return g;
}

RnnGraph build_g(int alphabet, int k, int i0_star, long long tau) {
  RnnGraph g = g_impl(make_layout(alphabet, k, i0_star, tau), "");
  g.validate();
  return g;
}

std::pair<RnnGraph, ConstructionReport> build_boosted_rnn(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k,
                                                          double alpha, int i0_star, bool complemented) {
  return assemble(Q, D, alphabet, k, alpha, i0_star, complemented, false);
}

RnnGraph build_boosted_rnn_simple(const RnnGraph& Q, const RnnGraph& D, int alphabet, int k, double alpha,
                                  int i0_star, bool complemented) {
  return assemble(Q, D, alphabet, k, alpha, i0_star, complemented, true).first;
}

}  // namespace ntpboost
