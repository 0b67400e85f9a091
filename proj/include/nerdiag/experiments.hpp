#pragma once

#include "nerdiag/consistency.hpp"
#include "nerdiag/context.hpp"
#include "nerdiag/corpus.hpp"
#include "nerdiag/coverage.hpp"
#include "nerdiag/tagger.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nerdiag {

inline constexpr const char* kToolVersion = "1.0.0";

/// Settings shared by all experiment commands. Loaded from a "key = value"
/// file; command-line flags override individual keys.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    TaggerConfig tagger;
    std::string vectors;  // word vectors for CCR; hashing provider when empty
    std::size_t hash_dimension = 300;
    PatternOptions patterns;
    bool lowercase = true;
    std::size_t cap_per_category = 100;
    std::optional<double> tau;
    GradientScope scope = GradientScope::Span;
    std::size_t ploner_size = 2500;
    double train_fraction = 0.8;
    TagScheme scheme = TagScheme::IOB2;
    int tag_column = -1;

    std::string train_path;
    std::string test_path;
    std::string pred_path;
    std::string output_dir;

    /// Sets one key; throws on unknown keys or malformed values.
    void set(const std::string& key, const std::string& value);
    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::string& path);

    /// Tagger settings with the shared seed applied.
    TaggerConfig tagger_config() const;
    MentionOptions mention_options() const { return {lowercase}; }
    ConllOptions conll_options(const std::string& name, bool strict) const;

    nlohmann::json echo() const;
};

std::string sha256_file(const std::string& path);
std::string sha256_hex(const std::string& bytes);

/// Self-description attached to every report: tool version, seed, config
/// echo and digests of the named input files.
nlohmann::json make_manifest(const ExperimentConfig& config, const std::map<std::string, std::string>& inputs);

/// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& content);

/// Square or rectangular matrix as TSV with row and column headers.
std::string matrix_tsv(const std::vector<std::string>& row_names, const std::vector<std::string>& col_names,
                       const std::vector<std::vector<double>>& values);

BreakdownReport run_breakdown(const Dataset& train, const Dataset& test, const Dataset* predictions,
                              const ExperimentConfig& config);

struct NamedSplit {
    std::string name;
    Dataset train;
    Dataset test;
};

struct PearsonSummary {
    std::vector<std::optional<double>> p_row;
    std::vector<std::optional<double>> p_col;
    std::optional<double> p_overall;
};

/// Row-, column- and cell-wise Pearson correlation between two matrices;
/// entries with zero variance are empty.
PearsonSummary summarize_against(const std::vector<std::vector<double>>& f1,
                                 const std::vector<std::vector<double>>& measure);

struct CrossMatrices {
    std::vector<std::string> names;
    std::vector<std::vector<double>> m_f1;   // empty when taggers were not trained
    std::vector<std::vector<double>> m_rho;
    std::vector<std::vector<double>> m_phi;
    std::map<std::string, PearsonSummary> pearson;  // "rho", "phi"
};

/// Cell (i, j) pairs the training split of dataset i with the test split of j.
CrossMatrices run_cross(const std::vector<NamedSplit>& datasets, const ExperimentConfig& config,
                        const EmbeddingProvider& provider, bool train_taggers = true);

nlohmann::json to_json(const CrossMatrices& m);

enum class AugmentationMode { Descending, Ascending, Random };

std::string to_string(AugmentationMode m);
AugmentationMode parse_augmentation_mode(const std::string& s);

struct AugmentationCurve {
    AugmentationMode mode = AugmentationMode::Descending;
    std::vector<std::string> order;
    std::vector<double> f1_points;  // F1 after each cumulative prefix of `order`
};

struct AugmentationResult {
    std::map<std::string, double> eecr;  // source -> EECR against the target
    std::vector<AugmentationCurve> curves;
};

/// Source order for a mode: EECR against the target descending (ties by
/// name), its reverse, or a seeded shuffle.
std::vector<std::string> augmentation_order(const std::map<std::string, double>& eecr_by_source,
                                            AugmentationMode mode, std::uint64_t seed);

/// Trains one tagger per cumulative prefix. A prefix's training data is the
/// union of its sources in name order, so equal source sets train identically.
AugmentationResult run_augmentation(const Dataset& target_val, const std::vector<Dataset>& sources,
                                    const std::vector<AugmentationMode>& modes, const ExperimentConfig& config);

nlohmann::json to_json(const AugmentationResult& r);
std::string to_tsv(const AugmentationResult& r);

inline const std::vector<std::string> kPlonerCategories{"LOC", "ORG", "PER"};

/// Collapses each input to person/location/organization and samples
/// min(n, available) sentences.
std::vector<Dataset> build_ploner(const std::vector<std::pair<Dataset, CategoryMap>>& inputs, std::size_t n,
                                  std::uint64_t seed);

AlignmentReport run_consistency(const Dataset& train, const Dataset& val, const ExperimentConfig& config);

}  // namespace nerdiag
