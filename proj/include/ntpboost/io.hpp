#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "ntpboost/boosting.hpp"
#include "ntpboost/construction.hpp"
#include "ntpboost/dist.hpp"
#include "ntpboost/distinguisher.hpp"
#include "ntpboost/rnn.hpp"
#include "ntpboost/selfboost.hpp"

namespace ntpboost {

using json = nlohmann::json;

inline constexpr double kLoadTolerance = 1e-9;

nlohmann::json to_json(const TextDistribution& t);
TextDistribution text_from_json(const nlohmann::json& j, double tol = kLoadTolerance);

nlohmann::json to_json(const LanguageModel& lm);
LanguageModel lm_from_json(const nlohmann::json& j, double tol = kLoadTolerance);

nlohmann::json to_json(const RnnGraph& g);
RnnGraph graph_from_json(const nlohmann::json& j);

// Table distinguishers list only their 1-entries; n and the alphabet size come from the file
// or from the supplied fallbacks.
nlohmann::json to_json(const Distinguisher& d);
Distinguisher distinguisher_from_json(const nlohmann::json& j, std::optional<int> n = std::nullopt,
                                      std::optional<int> alphabet = std::nullopt);

nlohmann::json to_json(const BoostResult& r);
nlohmann::json to_json(const ConstructionReport& r);
nlohmann::json to_json(const SelfBoostTrace& t);
std::string rounds_csv(const SelfBoostTrace& t);

struct SelfBoostConfig {
  Variant variant = Variant::plain;
  double epsilon = 0.3;
  int k = 1;
  long long tau = 6;
  int d_bound = 5;
  int b_D = 0;
  std::uint64_t seed = 0;
  std::string distribution_file;
  std::string family_file;  // empty: 1-prefix table family
  bool compile = false;
  std::optional<long long> j0;
};
SelfBoostConfig selfboost_config_from_json(const nlohmann::json& j);

// Family file: {"kind": "list", "members": [...]} or {"kind": "all_window" | "prefix1"}.
Family family_from_json(const nlohmann::json& j, int n, int alphabet);

nlohmann::json load_json_file(const std::filesystem::path& path);
// Writes through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string dump(const nlohmann::json& j);

// Serialized error object for the CLI error stream.
nlohmann::json error_json(const Error& e);

}  // namespace ntpboost
