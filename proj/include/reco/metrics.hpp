#pragma once

#include <map>
#include <vector>

#include <json.hpp>

#include "reco/data.hpp"

namespace reco {

struct EvalRecord {
  int length = 0;
  bool label_reliable = false;
  Problem label_problem = Problem::none;
  bool pred_reliable = false;
  bool pred_scene = false;
  bool pred_threshold = false;
};

// Reliable chains are the positive class. The unreliable-class view is also
// reported. Problem diagnosis counts an unreliable instance as correct when
// exactly the labeled problem's flag is set.
struct MetricsReport {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
  double precision_unreliable = 0.0, recall_unreliable = 0.0, f1_unreliable = 0.0;
  std::map<int, long> per_length_correct;
  std::map<int, long> per_length_total;
  std::map<int, double> per_length_accuracy;
  long diag_correct = 0, diag_total = 0;
  double problem_diagnosis_accuracy = 0.0;

  static MetricsReport compute(const std::vector<EvalRecord>& records) {
    MetricsReport r;
    for (const auto& rec : records) {
      const bool correct = rec.pred_reliable == rec.label_reliable;
      if (rec.label_reliable && rec.pred_reliable) ++r.tp;
      if (!rec.label_reliable && rec.pred_reliable) ++r.fp;
      if (rec.label_reliable && !rec.pred_reliable) ++r.fn;
      if (!rec.label_reliable && !rec.pred_reliable) ++r.tn;
      r.per_length_total[rec.length] += 1;
      if (correct) r.per_length_correct[rec.length] += 1;
      if (!rec.label_reliable) {
        ++r.diag_total;
        const bool want_scene = rec.label_problem == Problem::scene;
        if (rec.pred_scene == want_scene && rec.pred_threshold == !want_scene) ++r.diag_correct;
      }
    }
    const long n = r.tp + r.fp + r.fn + r.tn;
    r.accuracy = n ? static_cast<double>(r.tp + r.tn) / static_cast<double>(n) : 0.0;
    r.precision = (r.tp + r.fp) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
    r.recall = (r.tp + r.fn) ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
    r.f1 = (r.precision + r.recall > 0.0) ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    r.precision_unreliable = (r.tn + r.fn) ? static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fn) : 0.0;
    r.recall_unreliable = (r.tn + r.fp) ? static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp) : 0.0;
    r.f1_unreliable = (r.precision_unreliable + r.recall_unreliable > 0.0)
                          ? 2.0 * r.precision_unreliable * r.recall_unreliable /
                                (r.precision_unreliable + r.recall_unreliable)
                          : 0.0;
    for (const auto& [len, total] : r.per_length_total)
      r.per_length_accuracy[len] = static_cast<double>(r.per_length_correct[len]) / static_cast<double>(total);
    r.problem_diagnosis_accuracy =
        r.diag_total ? static_cast<double>(r.diag_correct) / static_cast<double>(r.diag_total) : 0.0;
    return r;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f1"] = f1;
    j["precision_unreliable"] = precision_unreliable;
    j["recall_unreliable"] = recall_unreliable;
    j["f1_unreliable"] = f1_unreliable;
    j["confusion"] = {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}};
    nlohmann::ordered_json per;
    for (const auto& [len, acc] : per_length_accuracy) {
      per[std::to_string(len)] = {{"accuracy", acc},
                                  {"correct", per_length_correct.at(len)},
                                  {"total", per_length_total.at(len)}};
    }
    j["per_length"] = per;
    j["problem_diagnosis"] = {{"accuracy", problem_diagnosis_accuracy},
                              {"correct", diag_correct},
                              {"total", diag_total}};
    return j;
  }
};

}  // namespace reco
