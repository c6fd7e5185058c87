#include "ntpboost/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace ntpboost {

namespace {

const json& field(const json& j, const std::string& key, const std::string& base = "") {
  if (!j.is_object()) throw Error("schema", "expected an object", base.empty() ? "/" : base);
  auto it = j.find(key);
  if (it == j.end()) throw Error("schema", "missing field '" + key + "'", base + "/" + key);
  return *it;
}

template <class T>
T get_as(const json& j, const std::string& key, const std::string& base = "") {
  const json& v = field(j, key, base);
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw Error("schema", "field '" + key + "' has the wrong type", base + "/" + key);
  }
}

int get_int(const json& j, const std::string& key, const std::string& base = "") {
  const json& v = field(j, key, base);
  if (!v.is_number_integer()) throw Error("schema", "field '" + key + "' must be an integer", base + "/" + key);
  return v.get<int>();
}

double get_number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw Error("value", "expected a number", ptr);
  return v.get<double>();
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json to_json(const TextDistribution& t) { return {{"alphabet_size", t.alphabet}, {"n", t.n}, {"probs", t.probs}}; }

TextDistribution text_from_json(const json& j, double tol) {
  TextDistribution t;
  t.alphabet = get_int(j, "alphabet_size");
  t.n = get_int(j, "n");
  const json& probs = field(j, "probs");
  if (!probs.is_array()) throw Error("schema", "probs must be an array", "/probs");
  t.probs.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) t.probs.push_back(get_number(probs[i], "/probs/" + std::to_string(i)));
  t.validate(tol);
  return t;
}

json to_json(const LanguageModel& lm) {
  json rows = json::array();
  const int A = lm.alphabet();
  for (int l = 0; l < lm.n(); ++l) {
    json row = json::array();
    for (std::size_t s = 0, ns = ipow(A, l); s < ns; ++s)
      for (int y = 0; y < A; ++y) row.push_back(lm.at(l, s, y));
    rows.push_back(std::move(row));
  }
  return {{"kind", "lm"}, {"alphabet_size", A}, {"n", lm.n()}, {"conditionals", rows}};
}

LanguageModel lm_from_json(const json& j, double tol) {
  int A = get_int(j, "alphabet_size"), n = get_int(j, "n");
  if (A < 1) throw Error("schema", "alphabet size must be positive", "/alphabet_size");
  if (n < 1) throw Error("schema", "n must be positive", "/n");
  LanguageModel lm(A, n);
  const json& rows = field(j, "conditionals");
  if (!rows.is_array() || static_cast<int>(rows.size()) != n)
    throw Error("schema", "conditionals must hold one row per prefix length", "/conditionals");
  for (int l = 0; l < n; ++l) {
    std::string base = "/conditionals/" + std::to_string(l);
    std::size_t ns = ipow(A, l);
    if (!rows[l].is_array() || rows[l].size() != ns * A)
      throw Error("schema", "row must hold " + std::to_string(ns * A) + " entries", base);
    for (std::size_t s = 0; s < ns; ++s) {
      double sum = 0;
      for (int y = 0; y < A; ++y) {
        std::string ptr = base + "/" + std::to_string(s * A + y);
        double v = get_number(rows[l][s * A + y], ptr);
        if (std::isnan(v) || v < 0 || v > 1) throw Error("value", "conditional outside [0, 1]", ptr);
        lm.at(l, s, y) = v;
        sum += v;
      }
      if (std::abs(sum - 1) > tol)
        throw Error("normalization",
                    "conditionals sum to " + fmt_double(sum) + ", not 1 within tolerance " + fmt_double(tol),
                    base + "/" + std::to_string(s * A));
    }
  }
  return lm;
}

json to_json(const RnnGraph& g) {
  json nodes = json::array();
  for (int v = 0; v < g.size(); ++v) {
    const auto& nd = g.nodes[v];
    nodes.push_back({{"id", v},
                     {"name", nd.name},
                     {"init", nd.init},
                     {"expr", nd.expr ? json(to_sexpr(nd.expr)) : json(nullptr)}});
  }
  json j{{"nodes", nodes},
         {"input_ids", g.input_ids},
         {"hidden_ids", g.hidden_ids},
         {"output_id", g.output_id},
         {"rnn_time", g.rnn_time},
         {"schedule", {{"kind", g.schedule.kind}, {"period", g.schedule.period}, {"offset", g.schedule.offset}}},
         {"max_depth", g.max_depth}};
  if (g.bits) j["bits"] = {{"integer", g.bits->integer}, {"fraction", g.bits->fraction}};
  if (!g.reset_on_input.empty()) j["reset_on_input"] = g.reset_on_input;
  if (!g.designated.empty()) j["designated"] = g.designated;
  if (!g.guards.empty()) {
    json gs = json::array();
    for (auto& gd : g.guards) gs.push_back({{"node", gd.node}, {"allowed", gd.allowed}});
    j["guards"] = gs;
  }
  if (g.allowed_in) j["allowed_in"] = *g.allowed_in;
  return j;
}

RnnGraph graph_from_json(const json& j) {
  RnnGraph g;
  const json& nodes = field(j, "nodes");
  if (!nodes.is_array()) throw Error("schema", "nodes must be an array", "/nodes");
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    std::string base = "/nodes/" + std::to_string(v);
    const json& nd = nodes[v];
    if (nd.contains("id") && nd["id"] != static_cast<int>(v))
      throw Error("schema", "node ids must be 0, 1, ... in order", base + "/id");
    RnnNode node;
    node.name = nd.value("name", "v" + std::to_string(v));
    if (nd.contains("init")) node.init = get_number(nd["init"], base + "/init");
    if (nd.contains("expr") && !nd["expr"].is_null()) {
      if (!nd["expr"].is_string()) throw Error("schema", "expr must be an s-expression string", base + "/expr");
      try {
        node.expr = parse_sexpr(nd["expr"].get<std::string>());
      } catch (const Error& e) {
        throw Error(e.kind, e.what(), base + "/expr");
      }
    }
    g.nodes.push_back(std::move(node));
  }
  g.input_ids = get_as<std::vector<int>>(j, "input_ids");
  g.hidden_ids = get_as<std::vector<int>>(j, "hidden_ids");
  g.output_id = get_int(j, "output_id");
  g.rnn_time = get_as<long long>(j, "rnn_time");
  if (g.rnn_time < 1) throw Error("schema", "rnn_time must be positive", "/rnn_time");
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    g.schedule.kind = s.value("kind", "per_token");
    g.schedule.period = s.value("period", g.rnn_time);
    g.schedule.offset = s.value("offset", 0LL);
  } else {
    g.schedule = {"per_token", g.rnn_time, 0};
  }
  if (j.contains("max_depth")) g.max_depth = get_int(j, "max_depth");
  if (j.contains("bits")) g.bits = BitsFormat{get_int(j["bits"], "integer", "/bits"), get_int(j["bits"], "fraction", "/bits")};
  if (j.contains("reset_on_input")) g.reset_on_input = get_as<std::vector<int>>(j, "reset_on_input");
  if (j.contains("designated")) g.designated = get_as<std::map<std::string, int>>(j, "designated");
  if (j.contains("guards"))
    for (std::size_t i = 0; i < j["guards"].size(); ++i) {
      std::string base = "/guards/" + std::to_string(i);
      g.guards.push_back({get_int(j["guards"][i], "node", base), get_as<std::vector<double>>(j["guards"][i], "allowed", base)});
    }
  if (j.contains("allowed_in")) g.allowed_in = get_as<std::vector<std::vector<int>>>(j, "allowed_in");
  for (int in : g.input_ids)
    if (in < 0 || in >= g.size()) throw Error("schema", "input id out of range", "/input_ids");
  g.validate();
  return g;
}

json to_json(const Distinguisher& d) {
  if (d.graph)
    return {{"kind", "rnn"}, {"k", d.k()}, {"n", d.n()}, {"alphabet_size", d.alphabet()}, {"graph", to_json(*d.graph)}};
  json entries = json::array();
  for (int i = 1; i <= d.n(); ++i) {
    int len = window_len(i, d.k(), d.n());
    for (std::size_t w = 0; w < d.bits()[i - 1].size(); ++w)
      if (d.bit(i, w)) entries.push_back({{"i", i}, {"x", doc_at(w, d.alphabet(), len)}});
  }
  json j{{"kind", "table"}, {"k", d.k()}, {"n", d.n()}, {"alphabet_size", d.alphabet()}, {"entries", entries}};
  if (!d.label.empty()) j["label"] = d.label;
  return j;
}

Distinguisher distinguisher_from_json(const json& j, std::optional<int> n_fb, std::optional<int> a_fb) {
  std::string kind = get_as<std::string>(j, "kind");
  int k = get_int(j, "k");
  int n = j.contains("n") ? get_int(j, "n") : n_fb.value_or(-1);
  int A = j.contains("alphabet_size") ? get_int(j, "alphabet_size") : a_fb.value_or(-1);
  if (n < 1) throw Error("schema", "document length n is required", "/n");
  if (A < 1) throw Error("schema", "alphabet size is required", "/alphabet_size");
  if (kind == "rnn") {
    RnnGraph g;
    try {
      g = graph_from_json(field(j, "graph"));
    } catch (const Error& e) {
      throw Error(e.kind, e.what(), "/graph" + e.pointer);
    }
    return distinguisher_from_graph(g, k, n, A);
  }
  if (kind != "table") throw Error("schema", "distinguisher kind must be 'table' or 'rnn'", "/kind");
  Distinguisher d(k, n, A);
  d.label = j.value("label", "");
  const json& entries = field(j, "entries");
  if (!entries.is_array()) throw Error("schema", "entries must be an array", "/entries");
  for (std::size_t e = 0; e < entries.size(); ++e) {
    std::string base = "/entries/" + std::to_string(e);
    int i = get_int(entries[e], "i", base);
    if (i < 1 || i > n) throw Error("value", "position out of range", base + "/i");
    auto x = get_as<std::vector<int>>(entries[e], "x", base);
    if (static_cast<int>(x.size()) != window_len(i, k, n))
      throw Error("value", "window must hold x_1..x_" + std::to_string(window_len(i, k, n)), base + "/x");
    for (int t : x)
      if (t < 0 || t >= A) throw Error("value", "token out of range", base + "/x");
    int bit = entries[e].value("bit", 1);
    if (bit != 0 && bit != 1) throw Error("value", "bit must be 0 or 1", base + "/bit");
    d.set_bit(i, doc_index(x, A), bit);
  }
  return d;
}

json to_json(const BoostResult& r) {
  return {{"offset", r.offset},
          {"alpha", r.alpha},
          {"kl_before", r.kl_before},
          {"kl_after", r.kl_after},
          {"guaranteed_drop", r.guaranteed_drop},
          {"complemented", r.complemented}};
}

json to_json(const ConstructionReport& r) {
  return {{"built_size", r.built_size},       {"built_hidden", r.built_hidden},
          {"built_time", r.built_time},       {"formula_size", r.formula_size},
          {"formula_hidden", r.formula_hidden}, {"formula_time", r.formula_time},
          {"equivalence_checked", r.equivalence_checked}, {"formulas_match", r.formulas_match()}};
}

json to_json(const SelfBoostTrace& t) {
  const auto& s = t.schedule;
  json sched{{"variant", to_string(s.variant)}, {"d_bound", s.d_bound}, {"k", s.k},      {"tau", s.tau},
             {"epsilon", s.epsilon},           {"alphabet_size", s.alphabet}, {"b_D", s.b_D},
             {"drop_threshold", s.drop_threshold()}, {"round_bound", s.round_bound()}};
  json idx = json::array();
  for (auto& r : t.indices) {
    json o{{"index", r.index},       {"N_i", r.N},           {"H_i", r.H},
           {"T_i", finite_or_null(r.T)}, {"log2_T_i", r.log2_T}, {"size", r.cost.size},
           {"hidden", r.cost.hidden}, {"time", finite_or_null(r.cost.time)}, {"loss", r.loss},
           {"kl", r.kl},             {"advantage", r.advantage}, {"boosts", r.boosts},
           {"budget_exhausted", r.budget_exhausted}};
    if (s.variant == Variant::bits) {
      o["b_i"] = r.bits;
      o["ell_i"] = r.ell;
    }
    idx.push_back(o);
  }
  json boosts = json::array();
  for (auto& b : t.boosts)
    boosts.push_back({{"index", b.schedule_index},
                      {"alpha", b.alpha},
                      {"offset", b.offset},
                      {"complemented", b.complemented},
                      {"kl_before", b.kl_before},
                      {"kl_after", b.kl_after},
                      {"guaranteed_drop", b.guaranteed_drop},
                      {"loss_after", b.loss_after}});
  return {{"schedule", sched},
          {"j0", t.j0},
          {"indices", idx},
          {"boosts", boosts},
          {"termination", t.termination},
          {"returned_index", t.returned_index},
          {"indices_visited", t.indices.size()},
          {"total_boosts", t.total_boosts},
          {"final_loss", t.final_loss},
          {"final_kl", t.final_kl},
          {"final_advantage", t.final_advantage},
          {"pinsker_bound", t.pinsker},
          {"notes", t.notes},
          {"model", to_json(t.model)}};
}

std::string rounds_csv(const SelfBoostTrace& t) {
  std::ostringstream os;
  os.precision(17);
  os << "round,N_i,H_i,T_i,L_i,KL,alpha\n";
  for (auto& r : t.indices) {
    // alpha of the last boost applied at this index, 0 when none
    double alpha = 0;
    for (auto& b : t.boosts)
      if (b.schedule_index == r.index) alpha = b.alpha;
    os << r.index << ',' << r.N << ',' << r.H << ',';
    if (std::isfinite(r.T))
      os << r.T;
    else
      os << "inf";
    os << ',' << r.loss << ',' << r.kl << ',' << alpha << '\n';
  }
  return os.str();
}

SelfBoostConfig selfboost_config_from_json(const json& j) {
  SelfBoostConfig c;
  c.variant = variant_from_string(j.value("variant", "plain"));
  c.epsilon = get_as<double>(j, "epsilon");
  if (!(c.epsilon > 0 && c.epsilon <= 1)) throw Error("value", "epsilon must lie in (0, 1]", "/epsilon");
  c.k = get_int(j, "k");
  if (j.contains("tau")) c.tau = get_as<long long>(j, "tau");
  if (j.contains("d_bound")) c.d_bound = get_int(j, "d_bound");
  if (j.contains("b_D")) c.b_D = get_int(j, "b_D");
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  c.distribution_file = get_as<std::string>(j, "distribution_file");
  c.family_file = j.value("family_file", "");
  c.compile = j.value("compile", false);
  if (j.contains("j0")) c.j0 = get_as<long long>(j, "j0");
  return c;
}

Family family_from_json(const json& j, int n, int alphabet) {
  std::string kind = get_as<std::string>(j, "kind");
  if (kind == "all_window") return Family::all_window();
  if (kind == "prefix1") return Family::prefix1();
  if (kind != "list") throw Error("schema", "family kind must be list, all_window or prefix1", "/kind");
  const json& m = field(j, "members");
  std::vector<Distinguisher> members;
  for (std::size_t i = 0; i < m.size(); ++i) {
    try {
      members.push_back(distinguisher_from_json(m[i], n, alphabet));
    } catch (const Error& e) {
      throw Error(e.kind, e.what(), "/members/" + std::to_string(i) + e.pointer);
    }
  }
  return Family::of(std::move(members));
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("parse", path.string() + ": " + e.what());
  }
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("io", "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json error_json(const Error& e) {
  json j{{"error", e.kind}, {"message", e.what()}};
  if (!e.pointer.empty()) j["pointer"] = e.pointer;
  return j;
}

}  // namespace ntpboost
