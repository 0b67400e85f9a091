#pragma once

#include "nerdiag/corpus.hpp"
#include "nerdiag/tagger.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nerdiag {

/// Which tokens contribute to an entity's loss.
enum class GradientScope { Span, Sentence };

/// Gradients with a norm at or below this are treated as zero.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Loss gradient induced by one entity at fixed parameters. The hidden and
/// output layers are stored densely from `dense_offset`; embedding rows sparsely.
struct GradientVector {
    EntityMention entity;
    std::size_t size = 0;  // parameter count
    std::vector<std::uint32_t> sparse_index;
    std::vector<double> sparse_value;
    std::size_t dense_offset = 0;
    std::vector<double> dense;
    double norm = 0.0;

    bool usable() const { return norm > kZeroNormThreshold; }
    ParameterVector to_dense() const;

    /// Builds from a dense vector; entries before `dense_offset` are kept sparse.
    static GradientVector from_dense(const std::vector<double>& values, std::size_t dense_offset = 0);
};

GradientVector entity_gradient(const TaggerModel& model, const Sentence& s, const EntityMention& m,
                               GradientScope scope = GradientScope::Span);

double dot(const GradientVector& a, const GradientVector& b);

/// Cosine of two gradients. Throws when either norm is zero.
double cs(const GradientVector& a, const GradientVector& b);

struct ConsistencyMatrix {
    std::vector<std::string> categories;
    std::vector<std::optional<double>> delta;  // K x K row-major; empty when undefined
    std::vector<std::size_t> sample_counts;    // mentions drawn per category
    std::vector<std::size_t> zero_norm_counts; // of those, excluded for zero norm

    std::size_t size() const { return categories.size(); }
    std::optional<double> at(std::size_t p, std::size_t q) const { return delta[p * size() + q]; }
    std::optional<std::size_t> index_of(const std::string& category) const;
};

/// Class-level consistency from per-category gradient groups. Off-diagonal
/// cells average all cross pairs; diagonal cells average distinct pairs.
ConsistencyMatrix consistency_from_gradients(const std::vector<std::string>& categories,
                                             const std::vector<std::vector<GradientVector>>& groups);

struct ConsistencyOptions {
    std::size_t cap_per_category = 100;
    std::uint64_t seed = 42;
    GradientScope scope = GradientScope::Span;
};

ConsistencyMatrix consistency_matrix(const TaggerModel& model, const Dataset& val, const ConsistencyOptions& options = {});

struct ErrorMatrix {
    std::vector<std::string> rows;     // gold categories
    std::vector<std::string> columns;  // rows followed by "O"
    std::vector<double> values;        // rows x columns
    std::vector<std::int64_t> counts;  // raw outcome counts
    std::vector<std::int64_t> totals;  // gold mentions per row

    double at(std::size_t p, std::size_t q) const { return values[p * columns.size() + q]; }
    std::int64_t count(std::size_t p, std::size_t q) const { return counts[p * columns.size() + q]; }
};

/// Predicted outcome of each gold mention, tallied per gold category.
/// Diagonal: accuracy. Off-diagonal: share of the row's errors.
ErrorMatrix error_matrix(const Dataset& gold, const Dataset& predicted);

/// Outcome category of a gold span: an exact-span prediction if any, else the
/// majority predicted category over its tokens, or "O".
std::string predicted_outcome(const Sentence& predicted, const EntityMention& gold);

/// Sample Pearson correlation. Throws on length mismatch or zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Pearson correlation of the paired off-diagonal cells (delta(p,q), Er(p,q)).
double align_consistency_error(const ConsistencyMatrix& delta, const ErrorMatrix& er);

enum class Relationship { Sibling, Overlapping, Orthogonal };

std::string to_string(Relationship r);

struct RelationshipLabel {
    std::string p;
    std::string q;
    Relationship label = Relationship::Orthogonal;
    double delta = 0.0;
};

std::vector<RelationshipLabel> classify_relationships(const ConsistencyMatrix& delta, double tau);

/// 0.1 times the standard deviation of the defined off-diagonal cells; 0.1
/// when that spread is zero or undefined.
double default_tau(const ConsistencyMatrix& delta);

struct AlignmentReport {
    ConsistencyMatrix delta;
    ErrorMatrix errors;
    std::optional<double> pearson;
    std::string pearson_error;  // why pearson is absent
    double tau = 0.1;
    std::vector<RelationshipLabel> relationships;
};

nlohmann::json to_json(const ConsistencyMatrix& m);
nlohmann::json to_json(const ErrorMatrix& m);
nlohmann::json to_json(const AlignmentReport& r);
std::string to_tsv(const ConsistencyMatrix& m);
std::string to_tsv(const ErrorMatrix& m);

}  // namespace nerdiag
