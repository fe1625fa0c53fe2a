#include "mtldoc/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "mtldoc/error.hpp"

namespace mtldoc {

ConfusionCounts confusion_counts(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                                 const std::set<ClassId>& classes) {
  if (predictions.size() != truth.size()) throw Error("prediction and truth lengths differ");
  ConfusionCounts out;
  out.n_examples = static_cast<std::int64_t>(truth.size());
  for (ClassId c : classes) out.per_class[c] = {};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!classes.contains(truth[i])) throw Error("unknown true label " + std::to_string(truth[i]));
    if (!classes.contains(predictions[i])) throw Error("unknown predicted label " + std::to_string(predictions[i]));
    if (predictions[i] == truth[i]) {
      ++out.per_class[truth[i]].tp;
    } else {
      ++out.per_class[predictions[i]].fp;
      ++out.per_class[truth[i]].fn;
    }
  }
  for (auto& [c, k] : out.per_class) k.tn = out.n_examples - k.tp - k.fp - k.fn;
  return out;
}

namespace {
double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }
}  // namespace

double micro_f1(const ConfusionCounts& counts) {
  double tp = 0, fp = 0, fn = 0;
  for (const auto& [c, k] : counts.per_class) {
    tp += static_cast<double>(k.tp);
    fp += static_cast<double>(k.fp);
    fn += static_cast<double>(k.fn);
  }
  return f1(ratio(tp, tp + fp), ratio(tp, tp + fn));
}

MacroScores macro_prf1(const ConfusionCounts& counts) {
  MacroScores out;
  if (counts.per_class.empty()) return out;
  for (const auto& [c, k] : counts.per_class) {
    const double p = ratio(static_cast<double>(k.tp), static_cast<double>(k.tp + k.fp));
    const double r = ratio(static_cast<double>(k.tp), static_cast<double>(k.tp + k.fn));
    out.map += p;
    out.mar += r;
    out.maf1 += f1(p, r);
  }
  const double n = static_cast<double>(counts.per_class.size());
  out.map /= n;
  out.mar /= n;
  out.maf1 /= n;
  return out;
}

double mcc(const ClassCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a == 0.0 || b == 0.0 || d == 0.0 || e == 0.0) return 0.0;
  return (tp * tn - fp * fn) / (std::sqrt(a) * std::sqrt(b) * std::sqrt(d) * std::sqrt(e));
}

MccScores amcc(const ConfusionCounts& counts) {
  MccScores out;
  for (const auto& [c, k] : counts.per_class) {
    out.per_class[c] = mcc(k);
    out.average += out.per_class[c];
  }
  if (!counts.per_class.empty()) out.average /= static_cast<double>(counts.per_class.size());
  return out;
}

EvalReport evaluate(const ConfusionCounts& counts) {
  EvalReport r;
  r.counts = counts;
  r.micro_f1 = micro_f1(counts);
  const MacroScores m = macro_prf1(counts);
  r.map = m.map;
  r.mar = m.mar;
  r.maf1 = m.maf1;
  MccScores mc = amcc(counts);
  r.amcc = mc.average;
  r.per_class_mcc = std::move(mc.per_class);
  return r;
}

EvalReport evaluate(std::span<const ClassId> predictions, std::span<const ClassId> truth,
                    const std::set<ClassId>& classes) {
  return evaluate(confusion_counts(predictions, truth, classes));
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [c, k] : report.counts.per_class) {
    classes[std::to_string(c)] = {
        {"tp", k.tp}, {"fp", k.fp}, {"tn", k.tn}, {"fn", k.fn}, {"mcc", report.per_class_mcc.at(c)}};
  }
  return {{"micro_f1", report.micro_f1}, {"map", report.map},     {"mar", report.mar},
          {"maf1", report.maf1},         {"amcc", report.amcc},   {"n_examples", report.counts.n_examples},
          {"classes", classes}};
}

std::string csv_header() { return "model,k,distribution,run,micro_f1,map,mar,maf1,amcc"; }

std::string csv_row(const EvalReport& r, const std::string& model, int k, const std::string& distribution,
                    int run) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",%d,", k);
  std::string out = model + buf + distribution;
  std::snprintf(buf, sizeof buf, ",%d,%.6f,%.6f,%.6f,%.6f,%.6f", run, r.micro_f1, r.map, r.mar, r.maf1, r.amcc);
  return out + buf;
}

}  // namespace mtldoc
