#include "mssp/metrics.hpp"

#include <json.hpp>

namespace mssp {

EvalReport report_from_counts(std::uint64_t tp, std::uint64_t tn, std::uint64_t fa, std::uint64_t ma,
                              const EvalOptions& options) {
  EvalReport r{tp, tn, fa, ma};
  const double total = static_cast<double>(r.total());
  if (total == 0.0) throw EvaluationError("evaluate: no pixels to evaluate");
  const double changed = static_cast<double>(tp + ma);
  const double unchanged = static_cast<double>(tn + fa);
  r.pfa = unchanged > 0.0 ? static_cast<double>(fa) / unchanged : 0.0;
  const double ma_base = options.pma_over_unchanged ? unchanged : changed;
  r.pma = ma_base > 0.0 ? static_cast<double>(ma) / ma_base : 0.0;
  r.accuracy = static_cast<double>(tp + tn) / total;
  const double pred_changed = static_cast<double>(tp + fa);
  const double pred_unchanged = static_cast<double>(tn + ma);
  const double chance = (changed * pred_changed + unchanged * pred_unchanged) / (total * total);
  r.kappa = chance >= 1.0 ? 0.0 : (r.accuracy - chance) / (1.0 - chance);
  return r;
}

EvalReport evaluate(const Mask& prediction, const Mask& reference, const Mask* exclude,
                    const EvalOptions& options) {
  if (!prediction.same_shape(reference)) throw ShapeError("evaluate: prediction and reference dims differ");
  if (exclude && !exclude->same_shape(reference)) throw ShapeError("evaluate: exclusion mask dims differ");
  require_binary(prediction, "prediction");
  require_binary(reference, "reference");
  if (exclude) require_binary(*exclude, "exclusion mask");
  // counts[ref][pred]
  std::uint64_t counts[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (exclude && (*exclude)[i]) continue;
    ++counts[reference[i]][prediction[i]];
  }
  return report_from_counts(counts[1][1], counts[0][0], counts[0][1], counts[1][0], options);
}

std::string to_json(const EvalReport& r, int indent) {
  nlohmann::ordered_json j;
  j["tp"] = r.tp;
  j["tn"] = r.tn;
  j["fa"] = r.fa;
  j["ma"] = r.ma;
  j["pfa"] = r.pfa;
  j["pma"] = r.pma;
  j["accuracy"] = r.accuracy;
  j["kappa"] = r.kappa;
  return j.dump(indent);
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.tp = j.at("tp").get<std::uint64_t>();
    r.tn = j.at("tn").get<std::uint64_t>();
    r.fa = j.at("fa").get<std::uint64_t>();
    r.ma = j.at("ma").get<std::uint64_t>();
    r.pfa = j.at("pfa").get<double>();
    r.pma = j.at("pma").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.kappa = j.at("kappa").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed evaluation report: ") + e.what());
  }
}

}  // namespace mssp
