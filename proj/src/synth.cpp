#include "mtldoc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtldoc/random.hpp"

namespace mtldoc {

namespace {

// Discrete distribution over feature ids, sampled by inverse CDF.
class Topic {
 public:
  Topic() = default;
  explicit Topic(std::map<FeatureId, double> weights) {
    double total = 0.0;
    for (const auto& [id, w] : weights) {
      if (w <= 0.0) continue;
      total += w;
      ids_.push_back(id);
      cdf_.push_back(total);
    }
    for (double& c : cdf_) c /= total;
  }

  FeatureId draw(Rng& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return ids_[std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), ids_.size() - 1)];
  }

 private:
  std::vector<FeatureId> ids_;
  std::vector<double> cdf_;
};

using Weights = std::map<FeatureId, double>;

Weights random_topic(Rng& rng, int dim, int words) {
  std::vector<FeatureId> vocab(static_cast<std::size_t>(dim));
  std::iota(vocab.begin(), vocab.end(), 0);
  // Partial Fisher-Yates: the first `words` entries are a uniform sample.
  for (int i = 0; i < words; ++i) {
    const auto j = static_cast<std::size_t>(i) + uniform_below(rng, static_cast<std::uint64_t>(dim - i));
    std::swap(vocab[static_cast<std::size_t>(i)], vocab[j]);
  }
  Weights w;
  double total = 0.0;
  for (int i = 0; i < words; ++i) {
    const double v = 0.5 + uniform01(rng);
    w[vocab[static_cast<std::size_t>(i)]] = v;
    total += v;
  }
  for (auto& [id, v] : w) v /= total;
  return w;
}

Weights mix(const Weights& a, double wa, const Weights& b, double wb) {
  Weights out;
  for (const auto& [id, v] : a) out[id] += wa * v;
  for (const auto& [id, v] : b) out[id] += wb * v;
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic_dual_corpus(const SynthConfig& cfg) {
  if (cfg.classes_per_source < 1 || cfg.examples_per_class < 1 || cfg.dim < 1 || cfg.doc_length < 1 ||
      cfg.topic_words < 1 || cfg.group_size < 1) {
    throw Error("synthetic corpus parameters must be positive");
  }
  if (!(cfg.topic_overlap >= 0.0 && cfg.topic_overlap <= 1.0)) throw Error("topic_overlap must lie in [0, 1]");
  if (!(cfg.signal >= 0.0 && cfg.signal <= 1.0) || !(cfg.group_weight >= 0.0 && cfg.group_weight <= 1.0)) {
    throw Error("signal and group_weight must lie in [0, 1]");
  }
  if (cfg.dim < 2 * cfg.topic_words || cfg.dim < 2 * cfg.classes_per_source) {
    throw Error("dim " + std::to_string(cfg.dim) + " is too small for " + std::to_string(cfg.classes_per_source) +
                " classes with " + std::to_string(cfg.topic_words) + "-word topics");
  }

  Rng rng(mix_seed(cfg.seed, 0));
  const int n_classes = cfg.classes_per_source;
  const int n_groups = (n_classes + cfg.group_size - 1) / cfg.group_size;
  const double ov = cfg.topic_overlap;

  // Parent topics, shared across sources to the same degree as class topics.
  std::vector<Weights> group_shared, group_private[2];
  for (int g = 0; g < n_groups; ++g) {
    group_shared.push_back(random_topic(rng, cfg.dim, cfg.topic_words));
    for (auto& gp : group_private) gp.push_back(random_topic(rng, cfg.dim, cfg.topic_words));
  }

  std::vector<Topic> class_topic[2];
  for (int i = 0; i < n_classes; ++i) {
    const Weights shared = random_topic(rng, cfg.dim, cfg.topic_words);
    const int g = i / cfg.group_size;
    for (int s = 0; s < 2; ++s) {
      const Weights own = mix(shared, ov, random_topic(rng, cfg.dim, cfg.topic_words), 1.0 - ov);
      const Weights parent = mix(group_shared[g], ov, group_private[s][g], 1.0 - ov);
      const double gw = cfg.group_size > 1 ? cfg.group_weight : 0.0;
      class_topic[s].emplace_back(mix(parent, gw, own, 1.0 - gw));
    }
  }

  // Zipf background over a random ordering of the vocabulary.
  std::vector<FeatureId> order(static_cast<std::size_t>(cfg.dim));
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  Weights zipf;
  for (int r = 0; r < cfg.dim; ++r) zipf[order[static_cast<std::size_t>(r)]] = 1.0 / (r + 1.0);
  const Topic background(zipf);

  std::vector<ClassId> s2_ids(static_cast<std::size_t>(n_classes));
  std::iota(s2_ids.begin(), s2_ids.end(), ClassId{1000});
  shuffle(s2_ids, rng);

  SyntheticCorpus out;
  std::vector<Example> docs[2];
  for (int s = 0; s < 2; ++s) {
    Rng doc_rng(mix_seed(cfg.seed, 1 + static_cast<std::uint64_t>(s)));
    for (int i = 0; i < n_classes; ++i) {
      const ClassId id = s == 0 ? ClassId{i} : s2_ids[static_cast<std::size_t>(i)];
      for (int e = 0; e < cfg.examples_per_class; ++e) {
        const int length =
            cfg.doc_length / 2 + static_cast<int>(uniform_below(doc_rng, static_cast<std::uint64_t>(cfg.doc_length) + 1));
        std::map<FeatureId, double> counts;
        for (int t = 0; t < length; ++t) {
          const bool topical = uniform01(doc_rng) < cfg.signal;
          counts[(topical ? class_topic[s][static_cast<std::size_t>(i)] : background).draw(doc_rng)] += 1.0;
        }
        docs[s].push_back({SparseVector::from_entries({counts.begin(), counts.end()}), id});
      }
    }
  }
  // Interleave classes the way a crawled file would be.
  for (int s = 0; s < 2; ++s) {
    Rng perm_rng(mix_seed(cfg.seed, 3 + static_cast<std::uint64_t>(s)));
    shuffle(docs[s], perm_rng);
  }
  out.s1 = Dataset(Source::S1, std::move(docs[0]), cfg.dim);
  out.s2 = Dataset(Source::S2, std::move(docs[1]), cfg.dim);
  for (int i = 0; i < n_classes; ++i) out.pairing[i] = s2_ids[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace mtldoc
