#include "mtldoc/model_io.hpp"

#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace mtldoc {

namespace {
constexpr const char* kFormat = "mtldoc-model/1";
}

void save_model(std::ostream& out, const TrainedModel& model) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["regime"] = to_string(model.regime);
  j["k"] = model.k;
  j["dimension"] = model.dimension;
  j["lambda1"] = model.config.lambda1;
  j["lambda2"] = model.config.lambda2;
  j["lambda3"] = model.config.lambda3;
  j["seed"] = model.config.seed;
  j["optimizer"] = {{"step_size", model.config.step_size},
                    {"max_iters", model.config.max_iters},
                    {"tol", model.config.tol}};
  j["neighbor_maps"] = nlohmann::json::array();
  for (const NeighborMap& m : model.neighbor_maps) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [c, list] : m.entries) {
      nlohmann::json nbs = nlohmann::json::array();
      for (const Neighbor& nb : list) nbs.push_back({nb.class_id, nb.similarity});
      entries.push_back({{"class_id", c}, {"neighbors", nbs}});
    }
    j["neighbor_maps"].push_back({{"source", to_string(m.source)}, {"k", m.k}, {"entries", entries}});
  }
  j["columns"] = nlohmann::json::array();
  const auto& w = model.theta.weights();
  for (Eigen::Index c = 0; c < model.theta.size(); ++c) {
    const TaskId& id = model.theta.ids()[static_cast<std::size_t>(c)];
    std::vector<double> weights(w.col(c).data(), w.col(c).data() + w.rows());
    nlohmann::json col = {{"task_id", to_string(id)}, {"weights", weights}};
    if (const auto it = model.per_task_train_seconds.find(id); it != model.per_task_train_seconds.end()) {
      col["train_seconds"] = it->second;
    }
    j["columns"].push_back(std::move(col));
  }
  out << j.dump() << '\n';
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  save_model(out, model);
}

TrainedModel load_model(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw Error("unsupported model format");
    TrainedModel m;
    m.regime = parse_regime(j.at("regime").get<std::string>());
    m.k = j.at("k").get<int>();
    m.dimension = j.at("dimension").get<FeatureId>();
    m.config.lambda1 = j.at("lambda1").get<double>();
    m.config.lambda2 = j.at("lambda2").get<double>();
    m.config.lambda3 = j.at("lambda3").get<double>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    const auto& opt = j.at("optimizer");
    m.config.step_size = opt.at("step_size").get<double>();
    m.config.max_iters = opt.at("max_iters").get<int>();
    m.config.tol = opt.at("tol").get<double>();
    for (const auto& jm : j.at("neighbor_maps")) {
      NeighborMap nm;
      nm.source = parse_source(jm.at("source").get<std::string>());
      nm.k = jm.at("k").get<int>();
      for (const auto& e : jm.at("entries")) {
        auto& list = nm.entries[e.at("class_id").get<ClassId>()];
        for (const auto& nb : e.at("neighbors")) list.push_back({nb.at(0).get<ClassId>(), nb.at(1).get<double>()});
      }
      m.neighbor_maps.push_back(std::move(nm));
    }
    const auto& cols = j.at("columns");
    std::vector<TaskId> ids;
    Eigen::MatrixXd w(static_cast<Eigen::Index>(m.dimension) + 1, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const TaskId id = parse_task_id(cols[c].at("task_id").get<std::string>());
      const auto weights = cols[c].at("weights").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(weights.size()) != w.rows()) throw Error("column length does not match dimension");
      w.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(weights.data(), w.rows());
      if (cols[c].contains("train_seconds")) m.per_task_train_seconds[id] = cols[c]["train_seconds"].get<double>();
      ids.push_back(id);
    }
    m.theta = ModelMatrix(std::move(ids), std::move(w));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_model(in);
}

void export_model_csv(std::ostream& out, const ModelMatrix& theta) {
  out << "task_id,feature_id,weight\n";
  char buf[64];
  const auto& w = theta.weights();
  for (Eigen::Index c = 0; c < theta.size(); ++c) {
    const std::string id = to_string(theta.ids()[static_cast<std::size_t>(c)]);
    for (Eigen::Index f = 0; f < w.rows(); ++f) {
      if (w(f, c) == 0.0) continue;
      std::snprintf(buf, sizeof buf, ",%td,%.17g\n", static_cast<std::ptrdiff_t>(f), w(f, c));
      out << id << buf;
    }
  }
}

}  // namespace mtldoc
