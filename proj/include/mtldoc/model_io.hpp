#pragma once

#include <filesystem>
#include <iosfwd>

#include "mtldoc/learners.hpp"

namespace mtldoc {

// Portable model file: a JSON document with a header (format, regime, k,
// dimension, lambdas, optimizer settings, seed), the neighbor maps, and one
// dense weight array per column. Doubles round-trip exactly.
void save_model(std::ostream& out, const TrainedModel& model);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(std::istream& in);
TrainedModel load_model(const std::filesystem::path& path);

/// `task_id,feature_id,weight`, one row per non-zero weight; the bias row
/// uses feature_id = dimension.
void export_model_csv(std::ostream& out, const ModelMatrix& theta);

}  // namespace mtldoc
