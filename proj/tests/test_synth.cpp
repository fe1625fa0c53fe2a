#include "doctest.h"
#include "mtldoc/error.hpp"
#include "mtldoc/relatedness.hpp"
#include "mtldoc/synth.hpp"

using namespace mtldoc;

namespace {

SynthConfig small(double overlap, std::uint64_t seed) {
  SynthConfig c;
  c.classes_per_source = 12;
  c.examples_per_class = 30;
  c.dim = 400;
  c.topic_overlap = overlap;
  c.seed = seed;
  return c;
}

struct PairStats {
  int top1_hits = 0;
  double paired_mean = 0.0, unpaired_mean = 0.0;
  bool paired_beats_all = true;
};

PairStats pair_stats(const SyntheticCorpus& sc) {
  const int n = static_cast<int>(sc.pairing.size());
  const NeighborMap m = knn_related(compute_centroids(sc.s1), compute_centroids(sc.s2), n);
  PairStats st;
  int unpaired = 0;
  for (const auto& [c, list] : m.entries) {
    const ClassId mate = sc.pairing.at(c);
    if (list.front().class_id == mate) ++st.top1_hits;
    double mate_sim = 0.0, best_other = 0.0;
    for (const Neighbor& nb : list) {
      if (nb.class_id == mate) {
        mate_sim = nb.similarity;
      } else {
        best_other = std::max(best_other, nb.similarity);
        st.unpaired_mean += nb.similarity;
        ++unpaired;
      }
    }
    st.paired_mean += mate_sim;
    st.paired_beats_all = st.paired_beats_all && mate_sim > best_other;
  }
  st.paired_mean /= n;
  st.unpaired_mean /= unpaired;
  return st;
}

}  // namespace

TEST_CASE("synth: shape and labels") {
  const SyntheticCorpus sc = generate_synthetic_dual_corpus(small(0.8, 1));
  CHECK(sc.s1.size() == 12 * 30);
  CHECK(sc.s2.size() == 12 * 30);
  CHECK(sc.s1.dimension() == 400);
  CHECK(sc.s1.classes().size() == 12);
  for (const auto& [a, b] : sc.pairing) {
    CHECK(sc.s1.class_size(a) == 30);
    CHECK(sc.s2.class_size(b) == 30);
    CHECK(b >= 1000);
  }
}

TEST_CASE("synth: full overlap makes paired classes nearest") {
  // Sibling classes share a parent topic, so centroids need enough documents
  // for the class-specific part to show through the background.
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig c = small(1.0, seed);
    c.examples_per_class = 200;
    const PairStats st = pair_stats(generate_synthetic_dual_corpus(c));
    CHECK(st.top1_hits == 12);
    CHECK(st.paired_beats_all);
  }
}

TEST_CASE("synth: zero overlap leaves pairing invisible") {
  int hits = 0;
  double gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig c = small(0.0, seed);
    const PairStats st = pair_stats(generate_synthetic_dual_corpus(c));
    hits += st.top1_hits;
    gap += st.paired_mean - st.unpaired_mean;
  }
  // Chance level is 5 of 60; a real signal would give close to 60.
  CHECK(hits <= 15);
  const PairStats full = pair_stats(generate_synthetic_dual_corpus(small(1.0, 1)));
  CHECK(std::abs(gap / 5.0) < 0.1 * (full.paired_mean - full.unpaired_mean));
}

TEST_CASE("synth: low-data corpus samples at 25 per class") {
  SynthConfig c = small(0.8, 2);
  c.examples_per_class = 25;
  const SyntheticCorpus sc = generate_synthetic_dual_corpus(c);
  const SampleResult r = sample_distribution(sc.s1, 25, 1);
  CHECK(r.dropped.empty());
  CHECK(r.sample.size() == 12 * 25);
}

TEST_CASE("synth: deterministic in the seed") {
  const SyntheticCorpus a = generate_synthetic_dual_corpus(small(0.5, 9));
  const SyntheticCorpus b = generate_synthetic_dual_corpus(small(0.5, 9));
  const SyntheticCorpus c = generate_synthetic_dual_corpus(small(0.5, 10));
  REQUIRE(a.s1.size() == b.s1.size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.s1.size(); ++i) {
    same = same && a.s1[i].features == b.s1[i].features && a.s2[i].features == b.s2[i].features &&
           a.s1[i].class_id == b.s1[i].class_id;
    differs = differs || !(a.s1[i].features == c.s1[i].features);
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.pairing == b.pairing);
}

TEST_CASE("synth: invalid parameters") {
  SynthConfig c = small(0.8, 1);
  c.dim = 20;
  try {
    generate_synthetic_dual_corpus(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("too small") != std::string::npos);
  }
  c = small(1.5, 1);
  CHECK_THROWS_AS(generate_synthetic_dual_corpus(c), Error);
  c = small(0.5, 1);
  c.examples_per_class = 0;
  CHECK_THROWS_AS(generate_synthetic_dual_corpus(c), Error);
}
