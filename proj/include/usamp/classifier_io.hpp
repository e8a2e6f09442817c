#ifndef USAMP_CLASSIFIER_IO_HPP
#define USAMP_CLASSIFIER_IO_HPP

// JSON export of a trained classifier. Doubles are written in shortest
// round-trip form, so a reloaded classifier reproduces every posterior
// bit-for-bit.

#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "usamp/classifier.hpp"
#include "usamp/error.hpp"
#include "usamp/rng.hpp"

namespace usamp {

inline constexpr const char* kClassifierFormat = "usamp-classifier/1";

inline const char* to_string(ScoreMode m) {
  return m == ScoreMode::occurrences ? "occurrences" : "presence";
}

inline ScoreMode score_mode_from_string(const std::string& s) {
  if (s == "occurrences") return ScoreMode::occurrences;
  if (s == "presence") return ScoreMode::presence;
  throw data_error("unknown score mode '" + s + "'");
}

inline nlohmann::json to_json(const LossMatrix& l) {
  return {{"l11", l.l11}, {"l12", l.l12}, {"l21", l.l21}, {"l22", l.l22}};
}

inline LossMatrix loss_from_json(const nlohmann::json& j) {
  LossMatrix l;
  l.l11 = j.at("l11").get<double>();
  l.l12 = j.at("l12").get<double>();
  l.l21 = j.at("l21").get<double>();
  l.l22 = j.at("l22").get<double>();
  return l;
}

inline nlohmann::json export_classifier(const Classifier& clf) {
  nlohmann::json features = nlohmann::json::array();
  // features.selected is a std::set, so the output is sorted by feature.
  for (const auto& f : clf.features.selected) {
    const FeatureCount c = clf.table.counts.at(f);
    features.push_back({{"feature", f},
                        {"log_ratio", clf.table.at(f)},
                        {"c_pos", c.positive},
                        {"c_neg", c.negative}});
  }
  nlohmann::json required = nlohmann::json::array();
  for (const auto& f : clf.features.required) required.push_back(f);

  nlohmann::json j;
  j["format"] = kClassifierFormat;
  j["score_mode"] = to_string(clf.mode);
  j["selection_fraction"] = clf.features.fraction;
  j["logistic"] = {{"a", clf.logistic.intercept}, {"b", clf.logistic.slope}};
  j["loss"] = to_json(clf.loss);
  j["counts"] = {{"positive_tokens", clf.table.counts.positive_tokens},
                 {"negative_tokens", clf.table.counts.negative_tokens},
                 {"distinct_features", clf.distinct_candidates}};
  j["required"] = std::move(required);
  j["features"] = std::move(features);
  return j;
}

inline Classifier import_classifier(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kClassifierFormat) {
      throw data_error("classifier document has unsupported format tag");
    }
    Classifier clf;
    clf.mode = score_mode_from_string(j.at("score_mode").get<std::string>());
    clf.features.fraction = j.at("selection_fraction").get<double>();
    clf.logistic.intercept = j.at("logistic").at("a").get<double>();
    clf.logistic.slope = j.at("logistic").at("b").get<double>();
    clf.loss = loss_from_json(j.at("loss"));
    const auto& counts = j.at("counts");
    clf.table.counts.positive_tokens = counts.at("positive_tokens").get<std::uint64_t>();
    clf.table.counts.negative_tokens = counts.at("negative_tokens").get<std::uint64_t>();
    clf.distinct_candidates = counts.at("distinct_features").get<std::uint64_t>();
    for (const auto& f : j.at("required")) clf.features.required.insert(f.get<std::string>());
    for (const auto& entry : j.at("features")) {
      const auto name = entry.at("feature").get<std::string>();
      clf.features.selected.insert(name);
      clf.table.log_ratio[name] = entry.at("log_ratio").get<double>();
      clf.table.counts.per_feature[name] =
          FeatureCount{entry.at("c_pos").get<std::uint64_t>(),
                       entry.at("c_neg").get<std::uint64_t>()};
    }
    return clf;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed classifier document: ") + e.what());
  }
}

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Content hash of the export document; identifies classifier snapshots.
inline std::string classifier_hash(const Classifier& clf) {
  return to_hex(fnv1a64(export_classifier(clf).dump()));
}

}  // namespace usamp

#endif  // USAMP_CLASSIFIER_IO_HPP
