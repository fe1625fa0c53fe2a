#include "mtldoc/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string_view>

#include "mtldoc/random.hpp"

namespace mtldoc {

Dataset::Dataset(Source source, std::vector<Example> examples, FeatureId dimension,
                 std::vector<std::size_t> origin)
    : source_(source), examples_(std::move(examples)), dimension_(dimension), origin_(std::move(origin)) {
  if (origin_.empty()) {
    origin_.resize(examples_.size());
    std::iota(origin_.begin(), origin_.end(), std::size_t{0});
  } else if (origin_.size() != examples_.size()) {
    throw Error("origin list does not match example count");
  }
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    dimension_ = std::max(dimension_, examples_[i].features.extent());
    class_index_[examples_[i].class_id].push_back(i);
  }
}

std::vector<ClassId> Dataset::classes() const {
  std::vector<ClassId> out;
  out.reserve(class_index_.size());
  for (const auto& [c, rows] : class_index_) out.push_back(c);
  return out;
}

std::size_t Dataset::class_size(ClassId c) const {
  const auto it = class_index_.find(c);
  return it == class_index_.end() ? 0 : it->second.size();
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Example> examples;
  std::vector<std::size_t> origin;
  examples.reserve(rows.size());
  origin.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= examples_.size()) throw Error("subset row out of range");
    examples.push_back(examples_[r]);
    origin.push_back(origin_[r]);
  }
  return Dataset(source_, std::move(examples), dimension_, std::move(origin));
}

Dataset Dataset::with_dimension(FeatureId d) const {
  Dataset out = *this;
  out.dimension_ = std::max(dimension_, d);
  return out;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

Dataset parse_sparse_dataset(std::istream& in, Source source, const ParseOptions& options) {
  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  std::size_t multi_label = 0;
  std::size_t first_multi_label_line = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;

    std::string_view label = tokens[0];
    if (const auto comma = label.find(','); comma != std::string_view::npos) {
      if (multi_label++ == 0) first_multi_label_line = line_no;
      label = label.substr(0, comma);
    }
    Example ex;
    if (!parse_number(label, ex.class_id)) {
      throw ParseError(line_no, "bad class id '" + std::string(tokens[0]) + "'");
    }

    std::vector<SparseVector::Entry> entries;
    entries.reserve(tokens.size() - 1);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, "expected <feat>:<val>, got '" + std::string(tokens[t]) + "'");
      }
      std::int64_t id = 0;
      double value = 0.0;
      if (!parse_number(tokens[t].substr(0, colon), id)) {
        throw ParseError(line_no, "bad feature id in '" + std::string(tokens[t]) + "'");
      }
      if (id < 0) throw ParseError(line_no, "negative feature id " + std::to_string(id));
      if (id > std::numeric_limits<FeatureId>::max() - 2) {
        throw ParseError(line_no, "feature id " + std::to_string(id) + " too large");
      }
      if (!parse_number(tokens[t].substr(colon + 1), value)) {
        throw ParseError(line_no, "bad feature value in '" + std::string(tokens[t]) + "'");
      }
      entries.emplace_back(static_cast<FeatureId>(id), value);
    }
    try {
      ex.features = SparseVector::from_entries(std::move(entries));
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
    if (options.l2_normalize) ex.features = ex.features.normalized();
    examples.push_back(std::move(ex));
  }
  if (multi_label > 0) {
    std::clog << "warning: " << multi_label << " multi-label line(s) (first at line "
              << first_multi_label_line << "); keeping the first label of each\n";
  }
  return Dataset(source, std::move(examples));
}

Dataset parse_sparse_dataset(const std::filesystem::path& path, Source source,
                             const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_sparse_dataset(in, source, options);
}

void write_sparse_dataset(std::ostream& out, const Dataset& data) {
  std::ostringstream line;
  line.precision(17);
  for (const Example& ex : data.examples()) {
    line.str("");
    line << ex.class_id;
    const auto ids = ex.features.indices();
    const auto vals = ex.features.values();
    for (std::size_t i = 0; i < ids.size(); ++i) line << ' ' << ids[i] << ':' << vals[i];
    out << line.str() << '\n';
  }
}

void write_sparse_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_sparse_dataset(out, data);
}

SplitParts split_dataset(const Dataset& data, std::uint64_t seed) {
  if (data.empty()) throw Error("cannot split an empty dataset");
  std::string too_small;
  for (const auto& [c, rows] : data.class_index()) {
    if (rows.size() < 5) too_small += (too_small.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!too_small.empty()) {
    throw Error("classes with fewer than 5 examples cannot be split 3:1:1: " + too_small);
  }

  std::vector<std::size_t> train, val, test;
  for (const auto& [c, rows] : data.class_index()) {
    std::vector<std::size_t> order = rows;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    shuffle(order, rng);
    const std::size_t n = order.size();
    const std::size_t n_train = n * 3 / 5;
    const std::size_t n_val = n / 5;
    train.insert(train.end(), order.begin(), order.begin() + n_train);
    val.insert(val.end(), order.begin() + n_train, order.begin() + n_train + n_val);
    test.insert(test.end(), order.begin() + n_train + n_val, order.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(val), data.subset(test)};
}

SampleResult sample_distribution(const Dataset& train, std::size_t size, std::uint64_t seed) {
  if (size == 0) throw Error("sample size must be positive");
  SampleResult result;
  std::vector<std::size_t> keep;
  for (const auto& [c, rows] : train.class_index()) {
    if (rows.size() < size) {
      result.dropped.push_back(c);
      continue;
    }
    std::vector<std::size_t> order = rows;
    if (rows.size() > size) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
      shuffle(order, rng);
    }
    keep.insert(keep.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
  }
  if (keep.empty()) {
    throw Error("no class has at least " + std::to_string(size) + " training examples");
  }
  std::sort(keep.begin(), keep.end());
  result.sample = train.subset(keep);
  return result;
}

std::vector<BinaryTask> build_tasks(const Dataset& data) {
  if (data.class_index().size() < 2) {
    throw Error("one-vs-rest tasks need at least two classes");
  }
  std::vector<BinaryTask> tasks;
  for (const auto& [c, rows] : data.class_index()) {
    const ClassId cls = c;
    tasks.push_back(pooled_task(data, std::span<const ClassId>(&cls, 1), TaskId{data.source(), c, false}));
  }
  return tasks;
}

BinaryTask pooled_task(const Dataset& data, std::span<const ClassId> classes, TaskId id) {
  BinaryTask task;
  task.id = id;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool positive =
        std::find(classes.begin(), classes.end(), data[i].class_id) != classes.end();
    (positive ? task.positives : task.negatives).push_back(i);
  }
  return task;
}

std::vector<Centroid> compute_centroids(const Dataset& data) {
  std::vector<Centroid> out;
  std::map<FeatureId, double> sum;
  for (const auto& [c, rows] : data.class_index()) {
    sum.clear();
    for (std::size_t r : rows) {
      const auto& x = data[r].features;
      const auto ids = x.indices();
      const auto vals = x.values();
      for (std::size_t i = 0; i < ids.size(); ++i) sum[ids[i]] += vals[i];
    }
    std::vector<SparseVector::Entry> entries;
    entries.reserve(sum.size());
    const double n = static_cast<double>(rows.size());
    for (const auto& [id, s] : sum) entries.emplace_back(id, s / n);
    out.push_back({c, data.source(), SparseVector::from_entries(std::move(entries))});
  }
  return out;
}

Manifest make_manifest(const std::map<std::string, const Dataset*>& parts) {
  Manifest m;
  for (const auto& [name, data] : parts) {
    const auto origin = data->origin();
    m.parts[name].assign(origin.begin(), origin.end());
  }
  return m;
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  for (const auto& [part, indices] : manifest.parts) {
    for (std::size_t i : indices) rows.emplace_back(i, part);
  }
  std::sort(rows.begin(), rows.end());
  out << "example_index,part\n";
  for (const auto& [i, part] : rows) out << i << ',' << part << '\n';
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_manifest(out, manifest);
}

Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line == "example_index,part")) continue;
    const auto comma = line.find(',');
    std::size_t index = 0;
    if (comma == std::string::npos ||
        !parse_number(std::string_view(line).substr(0, comma), index)) {
      throw ParseError(line_no, "bad manifest row '" + line + "'");
    }
    m.parts[line.substr(comma + 1)].push_back(index);
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_manifest(in);
}

Dataset apply_manifest(const Dataset& full, const Manifest& manifest, const std::string& part) {
  const auto it = manifest.parts.find(part);
  if (it == manifest.parts.end()) throw Error("manifest has no part '" + part + "'");
  std::vector<std::size_t> rows = it->second;
  std::sort(rows.begin(), rows.end());
  // A freshly parsed file has origin == row index.
  for (std::size_t r : rows) {
    if (r >= full.size()) throw Error("manifest index " + std::to_string(r) + " out of range");
  }
  return full.subset(rows);
}

}  // namespace mtldoc
