#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>

#include "json.hpp"

#include "mtldoc/types.hpp"

namespace mtldoc {

struct ClassCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  bool operator==(const ClassCounts&) const = default;
};

// One-vs-rest counts of every class, derived from multi-class decisions.
struct ConfusionCounts {
  std::map<ClassId, ClassCounts> per_class;
  std::int64_t n_examples = 0;
};

ConfusionCounts confusion_counts(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                                 const std::set<ClassId>& classes);

/// F1 of the pooled precision and recall; 0 when both are 0.
double micro_f1(const ConfusionCounts& counts);

struct MacroScores {
  double map = 0.0;
  double mar = 0.0;
  double maf1 = 0.0;  // mean of per-class F1, not F1 of (map, mar)
};

/// Unweighted class means. A class with an empty denominator scores 0.
MacroScores macro_prf1(const ConfusionCounts& counts);

/// Matthews coefficient of one class; 0 when any marginal is empty.
double mcc(const ClassCounts& c);

struct MccScores {
  std::map<ClassId, double> per_class;
  double average = 0.0;
};

MccScores amcc(const ConfusionCounts& counts);

struct EvalReport {
  double micro_f1 = 0.0;
  double map = 0.0;
  double mar = 0.0;
  double maf1 = 0.0;
  double amcc = 0.0;
  std::map<ClassId, double> per_class_mcc;
  ConfusionCounts counts;
};

EvalReport evaluate(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                    const std::set<ClassId>& classes);
EvalReport evaluate(const ConfusionCounts& counts);

nlohmann::json to_json(const EvalReport& report);

/// `model,k,distribution,run,micro_f1,map,mar,maf1,amcc`
std::string csv_header();
std::string csv_row(const EvalReport& report, const std::string& model, int k, const std::string& distribution,
                    int run);

}  // namespace mtldoc
