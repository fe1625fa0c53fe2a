#pragma once

#include <cstdint>
#include <map>

#include "mtldoc/corpus.hpp"

namespace mtldoc {

struct SynthConfig {
  int classes_per_source = 10;
  int examples_per_class = 50;
  int dim = 1000;
  double topic_overlap = 0.8;  // share of each class topic common to its paired class
  std::uint64_t seed = 1;

  int doc_length = 60;        // mean tokens per document
  double signal = 0.2;        // probability a token comes from the class topic
  int topic_words = 30;       // support size of every latent topic
  int group_size = 4;         // sibling classes sharing a parent topic (1 = none)
  double group_weight = 0.5;  // share of a class topic inherited from its parent
};

struct SyntheticCorpus {
  Dataset s1;
  Dataset s2;
  std::map<ClassId, ClassId> pairing;  // S1 class -> S2 class sharing its latent topic
};

/// Two bag-of-words corpora whose classes are paired one-to-one across
/// sources. Each document is a count vector: tokens are drawn from its
/// class topic with probability `signal`, otherwise from a Zipf background.
/// S1 classes are numbered 0..C-1; S2 classes are 1000 + a seeded permutation.
/// Deterministic in `seed`.
SyntheticCorpus generate_synthetic_dual_corpus(const SynthConfig& cfg);

}  // namespace mtldoc
