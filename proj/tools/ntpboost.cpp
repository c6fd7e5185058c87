#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

#include "ntpboost/boosting.hpp"
#include "ntpboost/construction.hpp"
#include "ntpboost/fixedpoint.hpp"
#include "ntpboost/io.hpp"
#include "ntpboost/selfboost.hpp"
#include "ntpboost/verify.hpp"

using namespace ntpboost;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string out = "out";
  double tolerance = 1e-9;
  bool quantized = false;
  bool compile = false;
};

TextDistribution load_text(const std::string& path) {
  json j = load_json_file(path);
  if (j.value("kind", "") == "lm") return lm_to_text(lm_from_json(j));
  return text_from_json(j);
}

void emit(const fs::path& path, const json& j) { write_atomic(path, dump(j)); }

std::vector<int> parse_stream(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

// Q may be a graph or a language model; D a distinguisher file.
RnnGraph load_model_graph(const json& j, int* alphabet, int* n) {
  if (j.value("kind", "") == "lm") {
    LanguageModel lm = lm_from_json(j);
    *alphabet = lm.alphabet();
    *n = lm.n();
    return compile_language_model(lm);
  }
  return graph_from_json(j);
}

int cmd_boost(const Common& c, const std::string& p_file, const std::string& q_file, const std::string& d_file) {
  TextDistribution p = load_text(p_file), q = load_text(q_file);
  Distinguisher d = distinguisher_from_json(load_json_file(d_file), p.n, p.alphabet);
  BoostResult r = boost_text(p, q, d);
  fs::path out(c.out);
  json res = to_json(r);
  emit(out / "q_boosted.json", to_json(r.q_boosted));
  emit(out / "lm_boosted.json", to_json(r.lm_boosted));
  if (c.compile) {
    RnnGraph Q = compile_language_model(text_to_lm(q));
    RnnGraph D = r.applied.graph ? *r.applied.graph : compile_table_distinguisher(r.applied);
    auto [g, rep] = build_boosted_rnn(Q, D, p.alphabet, d.k(), r.alpha, r.offset);
    double err = 0;
    LanguageModel got = lm_from_graph(g, p.alphabet, p.n);
    for (int l = 0; l < p.n; ++l)
      for (std::size_t s = 0; s < ipow(p.alphabet, l); ++s)
        for (int y = 0; y < p.alphabet; ++y) err = std::max(err, std::fabs(got.at(l, s, y) - r.lm_boosted.at(l, s, y)));
    rep.equivalence_checked = err <= c.tolerance;
    emit(out / "q_prime.json", to_json(g));
    res["construction"] = to_json(rep);
    res["construction"]["max_output_error"] = err;
    if (!rep.equivalence_checked) throw Error("equivalence", "compiled model differs from the boosted model");
  }
  emit(out / "boost.json", res);
  std::cout << dump(res);
  return 0;
}

int cmd_construct(const Common& c, const std::string& q_file, const std::string& d_file, std::optional<double> alpha,
                  std::optional<int> offset, bool complemented, std::optional<int> alphabet_opt, bool simple,
                  std::optional<std::string> p_file) {
  int A = alphabet_opt.value_or(0), n = 0;
  RnnGraph Q = load_model_graph(load_json_file(q_file), &A, &n);
  if (A < 2) throw Error("usage", "--alphabet is required when the model is a graph");
  json dj = load_json_file(d_file);
  Distinguisher d;
  RnnGraph D;
  int k;
  if (dj.value("kind", "") == "rnn" && !p_file) {
    D = graph_from_json(dj.at("graph"));
    k = dj.at("k").get<int>();
  } else {
    d = distinguisher_from_json(dj, n > 0 ? std::optional<int>(n) : std::nullopt, A);
    k = d.k();
    D = d.graph ? *d.graph : compile_table_distinguisher(d);
  }
  if (p_file) {
    TextDistribution p = load_text(*p_file);
    LanguageModel qlm = lm_from_graph(Q, A, p.n);
    auto rep = offset_decomposition(d, p, qlm);
    complemented = rep.advantage < 0;
    if (complemented) rep = offset_decomposition(complement(d), p, qlm);
    alpha = rep.advantage;
    offset = rep.best_offset;
  }
  if (!alpha || !offset) throw Error("usage", "--alpha and --offset are required unless --p is given");
  fs::path out(c.out);
  json res;
  if (simple) {
    RnnGraph g = build_boosted_rnn_simple(Q, D, A, k, *alpha, *offset, complemented);
    emit(out / "q_prime.json", to_json(g));
    res = {{"size", g.size()}, {"hidden", g.hidden_size()}, {"time", g.rnn_time}};
  } else {
    auto [g, rep] = build_boosted_rnn(Q, D, A, k, *alpha, *offset, complemented);
    emit(out / "q_prime.json", to_json(g));
    res = to_json(rep);
  }
  res["alpha"] = *alpha;
  res["offset"] = *offset;
  res["complemented"] = complemented;
  emit(out / "construction.json", res);
  std::cout << dump(res);
  return 0;
}

int cmd_simulate(const Common& c, const std::string& g_file, const std::string& stream_s, int prefixes, int alphabet,
                 const std::string& bits_s) {
  RnnGraph g = graph_from_json(load_json_file(g_file));
  std::optional<BitsFormat> fmt;
  if (c.quantized) {
    if (!bits_s.empty()) {
      auto v = parse_stream(bits_s);
      if (v.size() != 2) throw Error("usage", "--bits takes INTEGER,FRACTION");
      fmt = BitsFormat{v[0], v[1]};
    } else if (g.bits) {
      fmt = g.bits;
    } else {
      throw Error("usage", "--quantized needs a bits block in the graph or --bits");
    }
  }
  json res;
  long long sat = 0;
  if (prefixes > 0) {
    if (alphabet < 1) throw Error("usage", "--prefixes needs --alphabet");
    LanguageModel lm = lm_from_graph(g, alphabet, prefixes, fmt, &sat);
    res["lm"] = to_json(lm);
  } else {
    auto stream = parse_stream(stream_s);
    if (stream.empty()) throw Error("usage", "give --stream or --prefixes");
    RunOptions ro;
    ro.quantize = fmt;
    ro.keep_values = false;
    auto tr = run(g, stream, -1, ro);
    sat = tr.saturation_events;
    json outs = json::array();
    for (auto& [t, v] : tr.outputs) outs.push_back({{"t", t}, {"value", v}});
    res["outputs"] = outs;
    res["token_outputs"] = token_outputs(g, stream, fmt);
    res["steps"] = tr.steps;
  }
  res["saturation_events"] = sat;
  if (fmt) res["bits"] = {{"integer", fmt->integer}, {"fraction", fmt->fraction}};
  emit(fs::path(c.out) / "simulate.json", res);
  std::cout << dump(res);
  return 0;
}

int cmd_selfboost(const Common& c, const std::string& cfg_file, bool seed_given) {
  SelfBoostConfig cfg;
  json cj = load_json_file(cfg_file);
  cfg = selfboost_config_from_json(cj);
  fs::path base = fs::path(cfg_file).parent_path();
  auto resolve = [&](const std::string& f) { return fs::path(f).is_absolute() ? fs::path(f) : base / f; };
  TextDistribution p = load_text(resolve(cfg.distribution_file).string());
  Family fam = cfg.family_file.empty() ? Family::prefix1()
                                       : family_from_json(load_json_file(resolve(cfg.family_file)), p.n, p.alphabet);
  auto sched = make_schedule(cfg.variant, cfg.d_bound, cfg.k, cfg.tau, cfg.epsilon, p.alphabet, cfg.b_D);
  std::mt19937_64 rng(seed_given ? c.seed : cfg.seed);
  AlgorithmOptions ao;
  ao.compile.enabled = cfg.compile || c.compile;
  ao.compile.tolerance = c.tolerance;
  ao.j0 = cfg.j0;
  SelfBoostTrace tr = run_algorithm(sched, p, fam, rng, ao);
  fs::path out(c.out);
  json tj = to_json(tr);
  tj["seed"] = seed_given ? c.seed : cfg.seed;
  emit(out / "selfboost.json", tj);
  write_atomic(out / "rounds.csv", rounds_csv(tr));
  json summary{{"j0", tr.j0},
               {"termination", tr.termination},
               {"returned_index", tr.returned_index},
               {"indices_visited", tr.indices.size()},
               {"total_boosts", tr.total_boosts},
               {"final_advantage", tr.final_advantage},
               {"final_loss", tr.final_loss}};
  std::cout << dump(summary);
  return 0;
}

int cmd_verify(const Common& c, const std::string& fixtures, bool quick, bool regenerate) {
  if (regenerate) write_fixture_expectations(fixtures);
  VerifyOptions vo;
  vo.seed = c.seed;
  vo.tolerance = c.tolerance;
  vo.fixtures = fixtures;
  vo.quick = quick;
  auto rows = run_oracle_suite(vo);
  json matrix = json::array();
  bool ok = true;
  for (auto& r : rows) {
    matrix.push_back(
        {{"check", r.name}, {"passed", r.passed}, {"cases", r.cases}, {"max_error", r.max_error}, {"detail", r.detail}});
    ok = ok && r.passed;
  }
  json res{{"seed", c.seed}, {"tolerance", c.tolerance}, {"all_passed", ok}, {"checks", matrix}};
  emit(fs::path(c.out) / "verify.json", res);
  for (auto& r : rows) std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases)\n";
  return ok ? 0 : 1;
}

int cmd_report(const Common& c, const std::string& trace_file) {
  json t = load_json_file(trace_file);
  fs::path out(c.out);
  std::ostringstream idx;
  idx.precision(17);
  idx << "index,size,hidden,log2_T_i,loss,kl,advantage,boosts\n";
  for (auto& r : t.at("indices"))
    idx << r.at("index").get<long long>() << ',' << r.at("size").get<long long>() << ','
        << r.at("hidden").get<long long>() << ',' << r.at("log2_T_i").get<double>() << ','
        << r.at("loss").get<double>() << ',' << r.at("kl").get<double>() << ','
        << r.at("advantage").get<double>() << ',' << r.at("boosts").get<int>() << '\n';
  std::ostringstream bs;
  bs.precision(17);
  bs << "boost,index,alpha,offset,kl_before,kl_after,guaranteed_drop\n";
  int b = 0;
  for (auto& r : t.at("boosts"))
    bs << ++b << ',' << r.at("index").get<long long>() << ',' << r.at("alpha").get<double>() << ','
       << r.at("offset").get<int>() << ',' << r.at("kl_before").get<double>() << ','
       << r.at("kl_after").get<double>() << ',' << r.at("guaranteed_drop").get<double>() << '\n';
  write_atomic(out / "indices.csv", idx.str());
  write_atomic(out / "boosts.csv", bs.str());
  json summary{{"boosts", b}, {"termination", t.at("termination")}, {"final_advantage", t.at("final_advantage")}};
  std::cout << dump(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distinguisher-driven boosting of language models"};
  app.require_subcommand(1);
  Common c;
  bool seed_given = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "Random seed")->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--tolerance", c.tolerance, "Comparison tolerance, at least the 1e-9 default")
        ->check(CLI::Range(1e-9, std::numeric_limits<double>::max()));
    sub->add_flag("--quantized", c.quantized, "Run in fixed point");
    sub->add_flag("--compile", c.compile, "Compile models into circuits");
  };

  std::string p_file, q_file, d_file, g_file, cfg_file, stream, bits, trace, fixtures = "fixtures";
  std::optional<double> alpha;
  std::optional<int> offset, alphabet_opt;
  std::optional<std::string> p_opt;
  bool complemented = false, simple = false, quick = false, regenerate = false;
  int prefixes = 0, alphabet = 0;

  auto* boost = app.add_subcommand("boost", "Boost q against a distinguisher");
  add_common(boost);
  boost->add_option("--p", p_file, "Target distribution")->required();
  boost->add_option("--q", q_file, "Model distribution or language model")->required();
  boost->add_option("--d", d_file, "Distinguisher")->required();

  auto* construct = app.add_subcommand("construct", "Build the boosted circuit");
  add_common(construct);
  construct->add_option("--q", q_file, "Model graph or language model")->required();
  construct->add_option("--d", d_file, "Distinguisher")->required();
  construct->add_option("--alpha", alpha, "Boosting coefficient");
  construct->add_option("--offset", offset, "Block offset");
  construct->add_option("--alphabet", alphabet_opt, "Alphabet size for graph models");
  construct->add_option("--p", p_opt, "Target distribution; derives alpha and the offset");
  construct->add_flag("--complemented", complemented, "Use the complemented predicate");
  construct->add_flag("--simple", simple, "Doubling construction");

  auto* simulate = app.add_subcommand("simulate", "Run a circuit");
  add_common(simulate);
  simulate->add_option("--graph", g_file, "Circuit file")->required();
  simulate->add_option("--stream", stream, "Comma-separated tokens");
  simulate->add_option("--prefixes", prefixes, "Read off conditionals for all prefixes of this length");
  simulate->add_option("--alphabet", alphabet, "Alphabet size for --prefixes");
  simulate->add_option("--bits", bits, "INTEGER,FRACTION format for --quantized");

  auto* selfboost = app.add_subcommand("selfboost", "Run the size-schedule loss minimization");
  add_common(selfboost);
  selfboost->add_option("--config", cfg_file, "Configuration file")->required();

  auto* verify = app.add_subcommand("verify", "Run the oracle suite");
  add_common(verify);
  verify->add_option("--fixtures", fixtures, "Fixture directory");
  verify->add_flag("--quick", quick, "Fewer random instances");
  verify->add_flag("--regenerate-fixtures", regenerate, "Recompute fixture expectations first");

  auto* report = app.add_subcommand("report", "Emit CSV tables from a selfboost trace");
  add_common(report);
  report->add_option("--trace", trace, "selfboost.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*boost) return cmd_boost(c, p_file, q_file, d_file);
    if (*construct) return cmd_construct(c, q_file, d_file, alpha, offset, complemented, alphabet_opt, simple, p_opt);
    if (*simulate) return cmd_simulate(c, g_file, stream, prefixes, alphabet, bits);
    if (*selfboost) return cmd_selfboost(c, cfg_file, seed_given);
    if (*verify) return cmd_verify(c, fixtures, quick, regenerate);
    if (*report) return cmd_report(c, trace);
  } catch (const Error& e) {
    std::cerr << error_json(e).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  }
  return 0;
}
