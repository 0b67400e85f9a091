#pragma once

// Seeded corpus generators for tests and the acceptance gate.

#include "nerdiag/common.hpp"
#include "nerdiag/corpus.hpp"
#include "nerdiag/experiments.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace nerdiag::synth {

/// Builds a dataset from "surface/TAG" strings, one vector per sentence;
/// bare words are tagged O.
Dataset make_dataset(const std::string& name, const std::vector<std::vector<std::string>>& sentences);

/// Pronounceable capitalized names, unique within one call.
std::vector<std::string> make_names(Rng& rng, std::size_t n, const std::vector<std::string>& avoid = {});

/// Appends "left... ENTITY right..." with the entity tagged `category`.
void add_sentence(Dataset& d, const std::vector<std::string>& left, const std::vector<std::string>& entity,
                  const std::string& category, const std::vector<std::string>& right);

/// Small corpus with random tags over a tiny vocabulary, so that surfaces
/// carry several labels. Used for oracle comparisons.
Dataset random_corpus(std::uint64_t seed, const std::string& name, std::size_t sentences = 12);

/// Train/test pair where half of the test entities were seen in training
/// with a single label and half never occur there. Contexts are shared by
/// all categories, so unseen names carry little evidence.
std::pair<Dataset, Dataset> seen_unseen_corpus(std::uint64_t seed, std::size_t sentences = 2000);

/// Three domains "T", "A", "B". A reuses T's entities with unrelated context
/// words; B reuses T's context templates with unrelated entities. Every
/// domain's test entities also occur in its own training split.
std::vector<NamedSplit> decoupled_domains(std::uint64_t seed);

struct AugmentationSuite {
    Dataset target;
    std::vector<Dataset> sources;
};

/// Target validation set plus four sources covering nested fractions
/// (0.9, 0.6, 0.3, 0) of the target's entities with the target's labels.
AugmentationSuite augmentation_suite(std::uint64_t seed, std::size_t per_source = 240);

/// Categories C1, C2, C3 where a share of C1 and C2 mentions use the same
/// surfaces and contexts with different labels.
std::pair<Dataset, Dataset> conflicting_task(std::uint64_t seed, std::size_t sentences = 900);

}  // namespace nerdiag::synth
