#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ntpboost/boosting.hpp"
#include "ntpboost/construction.hpp"
#include "ntpboost/fixedpoint.hpp"
#include "ntpboost/io.hpp"
#include "ntpboost/verify.hpp"

namespace py = pybind11;
using namespace ntpboost;

namespace {

TextDistribution text_of(const std::string& s) {
  json j = json::parse(s);
  if (j.value("kind", "") == "lm") return lm_to_text(lm_from_json(j));
  return text_from_json(j);
}

std::string boost_json(const std::string& p_s, const std::string& q_s, const std::string& d_s) {
  TextDistribution p = text_of(p_s), q = text_of(q_s);
  Distinguisher d = distinguisher_from_json(json::parse(d_s), p.n, p.alphabet);
  BoostResult r = boost_text(p, q, d);
  json j = to_json(r);
  j["q_boosted"] = to_json(r.q_boosted);
  j["lm_boosted"] = to_json(r.lm_boosted);
  return j.dump();
}

std::string construct_json(const std::string& lm_s, const std::string& d_s, double alpha, int offset,
                           bool complemented) {
  LanguageModel lm = lm_from_json(json::parse(lm_s));
  Distinguisher d = distinguisher_from_json(json::parse(d_s), lm.n(), lm.alphabet());
  auto [g, rep] = build_boosted_rnn(compile_language_model(lm), compile_table_distinguisher(d), lm.alphabet(), d.k(),
                                    alpha, offset, complemented);
  return json{{"graph", to_json(g)}, {"report", to_json(rep)}}.dump();
}

std::string prefixes_json(const std::string& g_s, int alphabet, int n) {
  return to_json(lm_from_graph(graph_from_json(json::parse(g_s)), alphabet, n)).dump();
}

std::string verify_json(std::uint64_t seed, bool quick) {
  VerifyOptions vo;
  vo.seed = seed;
  vo.quick = quick;
  json rows = json::array();
  for (auto& r : run_oracle_suite(vo))
    rows.push_back({{"check", r.name}, {"passed", r.passed}, {"cases", r.cases}, {"detail", r.detail}});
  return rows.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact boosting of small language models";
  py::register_exception<Error>(m, "NtpError", PyExc_ValueError);
  m.def("kl", [](const std::string& p, const std::string& q) { return kl(text_of(p), text_of(q)); });
  m.def("tv", [](const std::string& p, const std::string& q) { return tv(text_of(p), text_of(q)); });
  m.def("entropy", [](const std::string& p) { return entropy(text_of(p)); });
  m.def("next_token_loss", [](const std::string& p, const std::string& lm) {
    return next_token_loss(text_of(p), lm_from_json(json::parse(lm)));
  });
  m.def("boost", &boost_json, py::arg("p"), py::arg("q"), py::arg("d"));
  m.def("construct", &construct_json, py::arg("lm"), py::arg("d"), py::arg("alpha"), py::arg("offset"),
        py::arg("complemented") = false);
  m.def("simulate_prefixes", &prefixes_json, py::arg("graph"), py::arg("alphabet"), py::arg("n"));
  m.def("verify", &verify_json, py::arg("seed") = 1, py::arg("quick") = true);
  m.def("quantize", [](double x, int integer, int fraction) { return quantize(x, BitsFormat{integer, fraction}); });
}
