#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtldoc/sparse_vector.hpp"
#include "mtldoc/types.hpp"

namespace mtldoc {

struct Example {
  SparseVector features;
  ClassId class_id = 0;
};

/// A labeled corpus from one source. Immutable once built. Every example
/// remembers its line index in the originally parsed file (`origin`), so
/// subsets can be written back out as manifests.
class Dataset {
 public:
  Dataset() = default;

  /// `dimension` is raised to 1 + the largest feature id if smaller.
  Dataset(Source source, std::vector<Example> examples, FeatureId dimension = 0,
          std::vector<std::size_t> origin = {});

  Source source() const { return source_; }
  std::span<const Example> examples() const { return examples_; }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  FeatureId dimension() const { return dimension_; }

  const std::map<ClassId, std::vector<std::size_t>>& class_index() const { return class_index_; }
  std::vector<ClassId> classes() const;
  std::size_t class_size(ClassId c) const;

  std::span<const std::size_t> origin() const { return origin_; }

  /// Examples at `rows`, in the given order; keeps source, dimension and origin.
  Dataset subset(std::span<const std::size_t> rows) const;
  /// Same examples, dimension raised to at least `d`.
  Dataset with_dimension(FeatureId d) const;

 private:
  Source source_ = Source::S1;
  std::vector<Example> examples_;
  FeatureId dimension_ = 0;
  std::map<ClassId, std::vector<std::size_t>> class_index_;
  std::vector<std::size_t> origin_;
};

struct ParseOptions {
  bool l2_normalize = false;
};

/// Reads `<class_id>[,<class_id>...] <feat>:<val> ...` lines. Blank lines are
/// skipped; a multi-label line keeps its first label and logs a warning.
Dataset parse_sparse_dataset(const std::filesystem::path& path, Source source,
                             const ParseOptions& options = {});
Dataset parse_sparse_dataset(std::istream& in, Source source, const ParseOptions& options = {});

void write_sparse_dataset(std::ostream& out, const Dataset& data);
void write_sparse_dataset(const std::filesystem::path& path, const Dataset& data);

struct SplitParts {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Stratified 3:1:1 split: per class floor(0.6n) train, floor(0.2n) val, the
/// rest test. Each part keeps the input's line order.
SplitParts split_dataset(const Dataset& data, std::uint64_t seed);

struct SampleResult {
  Dataset sample;
  std::vector<ClassId> dropped;  // classes with fewer than `size` examples
};

/// Exactly `size` examples from every class that has at least that many.
SampleResult sample_distribution(const Dataset& train, std::size_t size, std::uint64_t seed);

struct BinaryTask {
  TaskId id;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;

  std::size_t n() const { return positives.size() + negatives.size(); }
};

/// One one-vs-rest task per class, ordered by class id. Negatives are all
/// other examples of the same dataset.
std::vector<BinaryTask> build_tasks(const Dataset& data);

/// Positives are the examples of `classes`, negatives the rest of `data`.
BinaryTask pooled_task(const Dataset& data, std::span<const ClassId> classes, TaskId id);

struct Centroid {
  ClassId class_id = 0;
  Source source = Source::S1;
  SparseVector vector;
};

std::vector<Centroid> compute_centroids(const Dataset& data);

// Manifests record which part each line of a source file belongs to, as
// `example_index,part` rows, so a split or sample can be replayed exactly.
struct Manifest {
  std::map<std::string, std::vector<std::size_t>> parts;  // part -> origin indices
};

Manifest make_manifest(const std::map<std::string, const Dataset*>& parts);
void write_manifest(std::ostream& out, const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::filesystem::path& path);

/// Rows of `full` (a freshly parsed file) listed under `part`.
Dataset apply_manifest(const Dataset& full, const Manifest& manifest, const std::string& part);

}  // namespace mtldoc
