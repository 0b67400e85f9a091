#pragma once

#include "nerdiag/corpus.hpp"
#include "nerdiag/coverage.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nerdiag {

struct TaggerConfig {
    std::size_t window_radius = 2;
    std::size_t embedding_dim = 50;
    std::size_t char_hash_buckets = 4096;
    std::size_t hidden_dim = 128;
    double learning_rate = 0.1;
    std::size_t epochs = 5;
    std::uint64_t seed = 42;
    std::string vector_file;
    /// Training words seen fewer times than this map to the unknown id.
    std::size_t min_word_count = 1;

    void validate() const;
};

/// Lowercased word types of the training data. Id 0 pads windows, id 1 is unknown.
class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnknown = 1;

    Vocabulary();
    static Vocabulary build(const Dataset& d, std::size_t min_count = 1);
    static Vocabulary from_words(const std::vector<std::string>& words);

    std::int32_t id(const std::string& word) const;
    std::size_t size() const { return words_.size(); }
    /// All entries including the two reserved ones.
    const std::vector<std::string>& words() const { return words_; }

    bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::int32_t> index_;
};

/// "O" followed by B-/I- tags of each category in order.
std::vector<std::string> make_tag_set(const std::vector<std::string>& categories);

enum class Casing { Lower = 0, Upper = 1, Title = 2, Other = 3 };
inline constexpr std::size_t kCasingClasses = 4;

Casing casing_of(const std::string& word);

struct TokenFeatures {
    std::vector<std::int32_t> words;         // 2r+1 word ids centred on the token
    std::vector<std::int32_t> char_ngrams;   // hashed trigram ids of the centre token
    Casing casing = Casing::Other;
};

TokenFeatures featurize(const Sentence& s, std::size_t t, const TaggerConfig& config, const Vocabulary& vocab);

/// Offsets of each block in the flat parameter vector.
struct ParameterLayout {
    std::size_t vocab = 0, buckets = 0, embedding = 0, window = 0, input = 0, hidden = 0, tags = 0;
    std::size_t word_table = 0;      // vocab x embedding
    std::size_t char_table = 0;      // buckets x embedding
    std::size_t hidden_weights = 0;  // hidden x input, row-major
    std::size_t hidden_bias = 0;
    std::size_t output_weights = 0;  // tags x hidden, row-major
    std::size_t output_bias = 0;
    std::size_t total = 0;

    static ParameterLayout make(const TaggerConfig& config, std::size_t vocab_size, std::size_t tag_count);
    bool operator==(const ParameterLayout&) const = default;
};

using ParameterVector = std::vector<double>;
/// Per token position, a probability vector over the tag set.
using TagDistribution = std::vector<std::vector<double>>;

struct TaggerModel {
    TaggerConfig config;
    Vocabulary vocab;
    std::vector<std::string> tags;
    ParameterLayout layout;
    ParameterVector theta;

    /// All-zero parameters for the given vocabulary and tags.
    static TaggerModel create(const TaggerConfig& config, Vocabulary vocab, std::vector<std::string> tags);

    std::int32_t tag_index(const std::string& tag) const;
};

/// Tag probabilities of one token.
std::vector<double> forward(const TaggerModel& model, const TokenFeatures& features);
TagDistribution tag_distribution(const TaggerModel& model, const Sentence& s);

using TokenRange = std::pair<std::size_t, std::size_t>;

struct LossAndGrad {
    double loss = 0.0;
    ParameterVector grad;
};

/// Summed token cross-entropy over `restrict` (whole sentence when absent)
/// and its exact gradient with respect to theta.
LossAndGrad loss_and_grad(const TaggerModel& model, const Sentence& s, std::optional<TokenRange> restrict = {});

/// Gradient in sorted sparse form: only coordinates touched by active features.
struct SparseGradient {
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    double norm() const;
    ParameterVector to_dense(std::size_t size) const;
};

SparseGradient sparse_loss_gradient(const TaggerModel& model, const Sentence& s, TokenRange range,
                                    double* loss = nullptr);

double sentence_loss(const TaggerModel& model, const Sentence& s);
double dataset_loss(const TaggerModel& model, const Dataset& d);

struct TrainLog {
    double initial_loss = 0.0;
    /// Full-data loss after each epoch.
    std::vector<double> epoch_loss;
};

/// Seeded initialization: uniform in [-0.1, 0.1], then vector-file rows.
TaggerModel initialize_model(const Dataset& d, const TaggerConfig& config);

/// Per-sentence SGD over a seeded shuffle each epoch.
TaggerModel train(const Dataset& d, const TaggerConfig& config, TrainLog* log = nullptr);

/// Argmax tags (ties to the lower tag index) with orphan I-X repaired to B-X.
Dataset predict(const TaggerModel& model, const Dataset& d);

using F1Result = Scores;

F1Result evaluate_f1(const Dataset& gold, const Dataset& predicted);

void save_model(const std::string& path, const TaggerModel& model);
TaggerModel load_model(const std::string& path);

}  // namespace nerdiag
