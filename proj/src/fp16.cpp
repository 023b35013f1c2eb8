#include "tbnet/fp16.hpp"

#include <nlohmann/json.hpp>

namespace tbnet {

using json = nlohmann::json;

std::string divergence_to_json(const DivergenceReport& r) {
  json j{{"max_abs_logit_diff", r.max_abs_logit_diff},
         {"mean_abs_diff", r.mean_abs_diff},
         {"argmax_agreement", r.argmax_agreement},
         {"sample_count", r.sample_count}};
  return j.dump(2) + "\n";
}

DivergenceReport divergence_from_json(const std::string& text) {
  const json j = json::parse(text);
  DivergenceReport r;
  r.max_abs_logit_diff = j.at("max_abs_logit_diff").get<double>();
  r.mean_abs_diff = j.at("mean_abs_diff").get<double>();
  r.argmax_agreement = j.at("argmax_agreement").get<double>();
  r.sample_count = j.at("sample_count").get<int>();
  return r;
}

}  // namespace tbnet
