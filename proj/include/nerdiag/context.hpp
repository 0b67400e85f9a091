#pragma once

#include "nerdiag/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace nerdiag {

enum class Side { Left, Right };

struct ContextPattern {
    std::vector<std::string> words;  // 2 or 3 words
    Side side = Side::Left;          // side it was seen on most often
    std::int64_t frequency = 0;
};

struct PatternSet {
    std::string category;
    std::vector<ContextPattern> patterns;
    std::vector<double> probabilities;  // aligned with `patterns`
};

struct PatternOptions {
    std::size_t window = 3;
    std::size_t top_bigrams = 30;
    std::size_t top_trigrams = 20;
    bool lowercase = true;
};

/// Word-vector source. Implementations must be safe for concurrent lookups.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> lookup(const std::string& word) const = 0;
};

/// Feature-hashes the character trigrams of "^word$" into a signed count vector.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dimension = 300, std::uint64_t seed = 0);

    std::size_t dimension() const override { return dimension_; }
    std::vector<double> lookup(const std::string& word) const override;

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// Table of word vectors with a hashing fallback for out-of-vocabulary words.
/// Lookups try the exact word first, then its lowercase form.
class VectorTableProvider : public EmbeddingProvider {
public:
    VectorTableProvider(std::unordered_map<std::string, std::vector<double>> table, std::size_t dimension);

    /// Parses "word v1 ... vd" lines with an optional "count dim" header.
    static VectorTableProvider parse(std::istream& in);
    static VectorTableProvider load(const std::string& path);

    std::size_t dimension() const override { return dimension_; }
    std::vector<double> lookup(const std::string& word) const override;
    bool contains(const std::string& word) const { return table_.count(word) > 0; }
    std::size_t size() const { return table_.size(); }

private:
    std::unordered_map<std::string, std::vector<double>> table_;
    std::size_t dimension_;
    HashEmbeddingProvider fallback_;
};

/// Vector file when `path` is non-empty, else the hashing provider.
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& path, std::size_t hash_dimension = 300);

PatternSet extract_patterns(const Dataset& d, const std::string& category, const PatternOptions& options = {});

std::vector<double> pattern_vector(const ContextPattern& p, const EmbeddingProvider& e);

/// Cosine similarity; 0 when either vector is zero.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Probability-weighted double sum of pattern cosines.
double ccr(const PatternSet& test_patterns, const PatternSet& train_patterns, const EmbeddingProvider& e);
double ccr(const Dataset& train, const Dataset& test, const std::string& category, const EmbeddingProvider& e,
           const PatternOptions& options = {});

struct CcrValue {
    double eta_raw = 0.0;
    double eta_normalized = 0.0;
    std::map<std::string, double> per_category;
};

/// Mean CCR over shared categories, plus the value normalized by the two
/// self-similarities computed over the same categories.
CcrValue ccr_aggregate(const Dataset& train, const Dataset& test, const EmbeddingProvider& e,
                       const PatternOptions& options = {});

nlohmann::json to_json(const PatternSet& p);
nlohmann::json to_json(const CcrValue& v);

}  // namespace nerdiag
