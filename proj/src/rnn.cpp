#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <unordered_map>

#include "ntpboost/fixedpoint.hpp"
#include "ntpboost/rnn.hpp"

namespace ntpboost {

int RnnGraph::add_input(const std::string& name) {
  nodes.push_back({name, 0.0, nullptr});
  input_ids.push_back(size() - 1);
  return size() - 1;
}

int RnnGraph::add_node(const std::string& name, double init, ExprPtr expr) {
  nodes.push_back({name, init, std::move(expr)});
  return size() - 1;
}

bool RnnGraph::is_input(int id) const { return std::find(input_ids.begin(), input_ids.end(), id) != input_ids.end(); }
bool RnnGraph::is_hidden(int id) const {
  return std::find(hidden_ids.begin(), hidden_ids.end(), id) != hidden_ids.end();
}

std::vector<std::pair<int, int>> RnnGraph::edges() const {
  std::vector<std::pair<int, int>> e;
  for (int v = 0; v < size(); ++v) {
    if (!nodes[v].expr) continue;
    std::vector<int> refs;
    expr_refs(nodes[v].expr, refs);
    for (int r : refs) e.emplace_back(r, v);
  }
  return e;
}

namespace {

std::string node_label(const RnnGraph& g, int id) {
  std::string s = "node " + std::to_string(id);
  if (id >= 0 && id < g.size() && !g.nodes[id].name.empty()) s += " (" + g.nodes[id].name + ")";
  return s;
}

}  // namespace

void RnnGraph::validate() const {
  const int N = size();
  if (N == 0) throw Error("invariant", "graph has no nodes", "/nodes");
  if (rnn_time < 1) throw Error("invariant", "rnn_time must be positive", "/rnn_time");
  if (schedule.period < 1) throw Error("invariant", "schedule period must be positive", "/schedule/period");
  if (output_id < 0 || output_id >= N) throw Error("invariant", "output node out of range", "/output_id");
  std::vector<char> in(N, 0), hid(N, 0);
  for (std::size_t j = 0; j < input_ids.size(); ++j) {
    int v = input_ids[j];
    if (v < 0 || v >= N || in[v]) throw Error("invariant", "bad input id", "/input_ids/" + std::to_string(j));
    in[v] = 1;
  }
  for (std::size_t j = 0; j < hidden_ids.size(); ++j) {
    int v = hidden_ids[j];
    if (v < 0 || v >= N || hid[v] || in[v])
      throw Error("invariant", "bad hidden id " + std::to_string(v), "/hidden_ids/" + std::to_string(j));
    hid[v] = 1;
  }
  if (allowed_in && static_cast<int>(allowed_in->size()) != N)
    throw Error("invariant", "declared neighbour lists do not cover every node", "/allowed_in");
  for (int v = 0; v < N; ++v) {
    std::string ptr = "/nodes/" + std::to_string(v) + "/expr";
    if (in[v]) {
      if (nodes[v].expr) throw Error("invariant", "input " + node_label(*this, v) + " has a transition", ptr);
      continue;
    }
    if (!nodes[v].expr) throw Error("invariant", node_label(*this, v) + " has no transition", ptr);
    std::vector<int> refs;
    expr_refs(nodes[v].expr, refs);
    for (int r : refs) {
      if (r < 0 || r >= N) throw Error("invariant", node_label(*this, v) + " reads missing node " + std::to_string(r), ptr);
      if (hid[v] && !hid[r] && !in[r])
        throw Error("invariant",
                    "hidden " + node_label(*this, v) + " reads non-hidden " + node_label(*this, r) + " (edge " +
                        std::to_string(r) + " -> " + std::to_string(v) + ")",
                    ptr);
      if (allowed_in) {
        auto& a = (*allowed_in)[v];
        if (std::find(a.begin(), a.end(), r) == a.end())
          throw Error("invariant", node_label(*this, v) + " reads " + node_label(*this, r) + " without an edge", ptr);
      }
    }
    int d = expr_depth(nodes[v].expr);
    if (d > max_depth)
      throw Error("invariant",
                  node_label(*this, v) + " has depth " + std::to_string(d) + " above bound " + std::to_string(max_depth),
                  ptr);
  }
  for (auto& gd : guards)
    if (gd.node < 0 || gd.node >= N) throw Error("invariant", "guard on missing node", "/guards");
  for (int r : reset_on_input)
    if (r < 0 || r >= N || in[r] || hid[r]) throw Error("invariant", "bad reset node", "/reset_on_input");
}

Program::Program(const RnnGraph& g) : g_(&g) {
  result_.assign(g.size(), -1);
  std::unordered_map<const Expr*, int> memo;
  std::unordered_map<std::string, int> cse;
  int owner = -1;
  std::function<int(const Expr*)> emit = [&](const Expr* e) -> int {
    auto it = memo.find(e);
    if (it != memo.end()) return it->second;
    std::vector<std::pair<int, double>> ops;
    for (std::size_t j = 0; j < e->args.size(); ++j)
      ops.emplace_back(emit(e->args[j].get()), e->op == Expr::Op::prod ? 1.0 : e->weights[j]);
    std::string key(1 + sizeof(double) + sizeof(int) + ops.size() * (sizeof(int) + sizeof(double)), '\0');
    char* p = key.data();
    *p++ = static_cast<char>(e->op);
    std::memcpy(p, &e->value, sizeof(double));
    p += sizeof(double);
    std::memcpy(p, &e->node, sizeof(int));
    p += sizeof(int);
    for (auto& [s, w] : ops) {
      std::memcpy(p, &s, sizeof(int));
      p += sizeof(int);
      std::memcpy(p, &w, sizeof(double));
      p += sizeof(double);
    }
    auto ct = cse.find(key);
    int slot;
    if (ct != cse.end()) {
      slot = ct->second;
    } else {
      slot = static_cast<int>(code_.size());
      code_.push_back({e->op, e->value, e->node, static_cast<int>(operands_.size()), static_cast<int>(ops.size()), owner});
      operands_.insert(operands_.end(), ops.begin(), ops.end());
      cse.emplace(std::move(key), slot);
    }
    return memo[e] = slot;
  };
  for (int v = 0; v < g.size(); ++v) {
    if (!g.nodes[v].expr) continue;
    owner = v;
    result_[v] = emit(g.nodes[v].expr.get());
  }
  slots_.resize(code_.size());
}

void Program::step(const std::vector<double>& prev, std::vector<double>& next, long long t) const {
  double* sl = slots_.data();
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& in = code_[i];
    const auto* op = operands_.data() + in.first;
    double v;
    switch (in.op) {
      case Expr::Op::constant:
        v = in.value;
        break;
      case Expr::Op::node:
        v = prev[in.node];
        break;
      case Expr::Op::prod:
        v = 1.0;
        for (int j = 0; j < in.count; ++j) {
          double x = sl[op[j].first];
          if (x == 0) {
            v = 0;
            break;
          }
          v *= x;
        }
        break;
      default:
        v = in.value;
        for (int j = 0; j < in.count; ++j) v += op[j].second * sl[op[j].first];
        if (in.op == Expr::Op::relu) {
          v = v > 0 ? v : 0.0;
        } else if (in.op == Expr::Op::recip) {
          if (v == 0)
            throw Error("recip_zero",
                        "reciprocal of zero in " + node_label(*g_, in.owner) + " at step " + std::to_string(t));
          v = 1.0 / v;
        }
    }
    sl[i] = v;
  }
  for (int v = 0; v < g_->size(); ++v)
    next[v] = result_[v] >= 0 ? sl[result_[v]] : prev[v];
}

namespace {

std::vector<double> initial_state(const RnnGraph& g) {
  std::vector<double> s(g.size());
  for (int v = 0; v < g.size(); ++v) s[v] = g.nodes[v].init;
  return s;
}

// Runs steps t0+1 .. t1, feeding the stream. Returns the state at t1.
void advance(const RnnGraph& g, const Program& prog, std::vector<double>& state, std::vector<double>& scratch,
             long long t0, long long t1, const std::function<int(long long)>& token_at, const RunOptions& opts,
             ExecutionTrace* tr, long long* next_sample) {
  const long long T = g.rnn_time;
  for (long long t = t0 + 1; t <= t1; ++t) {
    // Stateless nodes forget the previous token's values when the next token arrives.
    if (t > 1 && (t - 1) % T == 0)
      for (int r : g.reset_on_input) state[r] = 0;
    prog.step(state, scratch, t);
    int tok = token_at((t - 1) / T);
    for (int in : g.input_ids) scratch[in] = tok;
    if (opts.quantize) {
      for (auto& v : scratch) {
        bool sat = false;
        v = quantize(v, *opts.quantize, &sat);
        if (sat && tr) ++tr->saturation_events;
      }
    }
    for (auto& gd : g.guards) {
      double v = scratch[gd.node];
      if (std::find(gd.allowed.begin(), gd.allowed.end(), v) == gd.allowed.end())
        throw Error("controller", node_label(g, gd.node) + " took disallowed value " + std::to_string(v) +
                                      " at step " + std::to_string(t));
    }
    if (opts.hook) opts.hook(t, scratch);
    std::swap(state, scratch);
    if (tr) {
      tr->pointer.push_back((t - 1) / T + 1);
      if (opts.keep_values) tr->values.push_back(state);
      if (next_sample && t == *next_sample) {
        tr->outputs.emplace_back(t, state[g.output_id]);
        *next_sample += g.schedule.period;
      }
    }
  }
}

}  // namespace

ExecutionTrace run(const RnnGraph& g, std::span<const int> stream, long long total_steps, const RunOptions& opts) {
  const long long T = g.rnn_time;
  long long avail = static_cast<long long>(stream.size()) * T;
  if (total_steps < 0) total_steps = avail;
  if (total_steps > avail) throw Error("domain", "input stream too short for the requested steps");
  Program prog(g);
  ExecutionTrace tr;
  std::vector<double> state = initial_state(g), scratch(g.size());
  if (opts.keep_values) tr.values.push_back(state);
  long long next_sample = g.schedule.period - g.schedule.offset;
  while (next_sample < 1) next_sample += g.schedule.period;
  advance(g, prog, state, scratch, 0, total_steps, [&](long long p) { return stream[p]; }, opts, &tr, &next_sample);
  tr.steps = total_steps;
  tr.final_state = state;
  return tr;
}

std::vector<double> token_outputs(const RnnGraph& g, std::span<const int> stream, std::optional<BitsFormat> quantize_fmt,
                                  long long* saturation) {
  std::vector<double> out;
  RunOptions opts;
  opts.quantize = quantize_fmt;
  opts.keep_values = false;
  const long long T = g.rnn_time;
  opts.hook = [&](long long t, std::vector<double>& s) {
    if (t % T == 0) out.push_back(s[g.output_id]);
  };
  auto tr = run(g, stream, -1, opts);
  if (saturation) *saturation += tr.saturation_events;
  return out;
}

LanguageModel lm_from_graph(const RnnGraph& g, int alphabet, int n, std::optional<BitsFormat> quantize_fmt,
                            long long* saturation) {
  LanguageModel lm(alphabet, n);
  Program prog(g);
  RunOptions opts;
  opts.quantize = quantize_fmt;
  opts.keep_values = false;
  const long long T = g.rnn_time;
  ExecutionTrace tr;
  // Depth-first over the prefix tree, reusing the state at each token boundary.
  std::function<void(std::vector<double>&, Doc&, std::size_t)> dfs = [&](std::vector<double>& state, Doc& x,
                                                                          std::size_t idx) {
    int l = static_cast<int>(x.size());
    if (l == n) return;
    for (int y = 0; y < alphabet; ++y) {
      std::vector<double> s = state, scratch(g.size());
      advance(g, prog, s, scratch, l * T, (l + 1) * T, [&](long long) { return y; }, opts, &tr, nullptr);
      lm.at(l, idx, y) = s[g.output_id];
      x.push_back(y);
      dfs(s, x, idx * alphabet + y);
      x.pop_back();
    }
  };
  std::vector<double> s0 = initial_state(g);
  Doc x;
  dfs(s0, x, 0);
  if (saturation) *saturation += tr.saturation_events;
  return lm;
}

Distinguisher distinguisher_from_graph(const RnnGraph& g, int k, int n, int alphabet) {
  Distinguisher d(k, n, alphabet);
  std::vector<std::vector<int>> seen(n);
  for (int i = 1; i <= n; ++i) seen[i - 1].assign(d.bits()[i - 1].size(), -1);
  for (std::size_t idx = 0, nd = ipow(alphabet, n); idx < nd; ++idx) {
    Doc x = doc_at(idx, alphabet, n);
    Doc stream = x;
    stream.resize(n + k - 1, 0);
    auto outs = token_outputs(g, stream);
    for (int i = 1; i <= n; ++i) {
      double v = outs[i + k - 2];
      if (v != 0 && v != 1)
        throw Error("invariant", "distinguisher circuit output " + std::to_string(v) + " is not a bit");
      std::size_t w = doc_index(std::span<const int>(x).first(window_len(i, k, n)), alphabet);
      int b = static_cast<int>(v);
      if (seen[i - 1][w] >= 0 && seen[i - 1][w] != b)
        throw Error("invariant", "circuit output at position " + std::to_string(i) + " reads past its window");
      seen[i - 1][w] = b;
      d.set_bit(i, w, b);
    }
  }
  d.graph = std::make_shared<RnnGraph>(g);
  d.label = "rnn";
  return d;
}

SufficiencyReport verify_hidden_sufficiency(const RnnGraph& g, int trials, std::mt19937_64& rng, int alphabet,
                                            int stream_len, double tol) {
  SufficiencyReport rep;
  const long long T = g.rnn_time;
  std::uniform_int_distribution<int> tok(0, alphabet - 1);
  std::uniform_int_distribution<int> cutd(1, std::max(1, stream_len - 1));
  std::uniform_real_distribution<double> garbage(-4.0, 4.0);
  std::vector<int> scrub;
  for (int v = 0; v < g.size(); ++v)
    if (!g.is_input(v) && !g.is_hidden(v)) scrub.push_back(v);
  for (int trial = 0; trial < trials; ++trial) {
    Doc stream(stream_len);
    for (auto& x : stream) x = tok(rng);
    long long cut = cutd(rng) * T;
    RunOptions base;
    base.keep_values = false;
    auto ref = run(g, stream, -1, base);
    RunOptions dirty = base;
    std::vector<double> noise(scrub.size());
    for (auto& z : noise) z = garbage(rng);
    dirty.hook = [&](long long t, std::vector<double>& s) {
      if (t == cut)
        for (std::size_t j = 0; j < scrub.size(); ++j) s[scrub[j]] = noise[j];
    };
    ++rep.trials;
    ExecutionTrace got;
    try {
      got = run(g, stream, -1, dirty);
    } catch (const Error& e) {
      rep.passed = false;
      rep.failing_trial = trial;
      rep.cut_time = cut;
      rep.message = std::string("scrubbed run failed: ") + e.what();
      return rep;
    }
    for (std::size_t j = 0; j < ref.outputs.size(); ++j) {
      auto [t, a] = ref.outputs[j];
      if (t <= cut) continue;
      double b = got.outputs[j].second;
      if (!(std::abs(a - b) <= tol)) {
        rep.passed = false;
        rep.failing_trial = trial;
        rep.cut_time = cut;
        rep.diverging_time = t;
        rep.expected = a;
        rep.got = b;
        rep.message = "output diverges at step " + std::to_string(t) + " after scrubbing at step " + std::to_string(cut);
        return rep;
      }
    }
  }
  return rep;
}

RnnGraph gated_augment(const RnnGraph& q, const std::vector<int>& targets, const RnnGraph& controller,
                       const std::map<int, int>& external_source) {
  RnnGraph g = q;
  const int off = q.size();
  for (auto& nd : controller.nodes) {
    RnnNode c = nd;
    if (c.expr) c.expr = remap(c.expr, [&](int id) { return id + off; });
    c.name = "ctl/" + c.name;
    g.nodes.push_back(c);
  }
  for (int in : controller.input_ids) g.input_ids.push_back(in + off);
  for (int h : controller.hidden_ids) g.hidden_ids.push_back(h + off);
  auto ctl = ex::ref(controller.output_id + off);
  for (int s : targets) {
    if (!q.nodes.at(s).expr) throw Error("domain", "cannot gate an input node");
    auto it = external_source.find(s);
    if (it == external_source.end()) throw Error("domain", "no external source for gated node " + std::to_string(s));
    auto load = tf::ind_eq(ctl, 0), runs = tf::ind_eq(ctl, 1), hold = tf::ind_eq(ctl, 2);
    g.set_expr(s, ex::sum_of({ex::mul(load, ex::ref(it->second)), ex::mul(runs, q.nodes[s].expr),
                              ex::mul(hold, ex::ref(s))}));
  }
  g.guards.push_back({controller.output_id + off, {0.0, 1.0, 2.0}});
  return g;
}

RnnGraph universal_graph(int N, int H) {
  if (H < 1 || H >= N) throw Error("domain", "hidden block must satisfy 1 <= H < N");
  RnnGraph g;
  g.add_input("in");
  std::vector<int> hidden, rest;
  for (int j = 0; j < H; ++j) hidden.push_back(g.add_node("h" + std::to_string(j + 1), 0, ex::c(0)));
  for (int j = 0; j < N - H - 1; ++j) rest.push_back(g.add_node("r" + std::to_string(j + 1), 0, ex::c(0)));
  std::vector<std::vector<int>> adj(N);
  for (int h : hidden) {
    adj[h].push_back(0);
    for (int h2 : hidden) adj[h].push_back(h2);
  }
  for (int r : rest) {
    for (int h : hidden) adj[r].push_back(h);
    for (int r2 : rest) adj[r].push_back(r2);
  }
  g.allowed_in = adj;
  g.hidden_ids = hidden;
  g.reset_on_input = rest;
  g.output_id = rest.empty() ? hidden.back() : rest.back();
  return g;
}

RnnGraph embed_in_universal(const RnnGraph& u, const RnnGraph& g) {
  if (g.input_ids.size() != 1) throw Error("domain", "embedding expects exactly one input node");
  std::vector<int> uh = u.hidden_ids, ur = u.reset_on_input;
  std::vector<int> map(g.size(), -1);
  map[g.input_ids[0]] = u.input_ids.at(0);
  std::size_t hi = 0, ri = 0;
  for (int h : g.hidden_ids) {
    if (hi >= uh.size()) throw Error("domain", "not enough hidden slots");
    map[h] = uh[hi++];
  }
  for (int v = 0; v < g.size(); ++v) {
    if (map[v] >= 0) continue;
    if (ri >= ur.size()) throw Error("domain", "not enough stateless slots");
    map[v] = ur[ri++];
  }
  RnnGraph e = u;
  for (int v = 0; v < g.size(); ++v) {
    if (!g.nodes[v].expr) continue;
    e.nodes[map[v]].expr = remap(g.nodes[v].expr, [&](int id) { return map[id]; });
    e.nodes[map[v]].init = g.nodes[v].init;
    e.nodes[map[v]].name = g.nodes[v].name;
  }
  e.output_id = map[g.output_id];
  e.rnn_time = g.rnn_time;
  e.schedule = g.schedule;
  e.validate();
  return e;
}

}  // namespace ntpboost
