#include "nerdiag/context.hpp"

#include "nerdiag/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

namespace nerdiag {

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension == 0) throw Error("embedding dimension must be positive");
}

std::vector<double> HashEmbeddingProvider::lookup(const std::string& word) const {
    std::vector<double> v(dimension_, 0.0);
    if (word.empty()) return v;
    const std::string padded = "^" + to_lower(word) + "$";
    const std::uint64_t basis = fnv1a(std::to_string(seed_));
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const std::uint64_t h = fnv1a(std::string_view(padded).substr(i, 3), basis);
        v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    }
    return v;
}

VectorTableProvider::VectorTableProvider(std::unordered_map<std::string, std::vector<double>> table,
                                         std::size_t dimension)
    : table_(std::move(table)), dimension_(dimension), fallback_(dimension) {
    for (const auto& [word, vec] : table_) {
        if (vec.size() != dimension_) throw Error("vector for '" + word + "' has the wrong dimension");
    }
}

namespace {

double parse_real(const std::string& s, std::size_t line) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError(line, "bad real '" + s + "'");
    return v;
}

bool is_unsigned(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

VectorTableProvider VectorTableProvider::parse(std::istream& in) {
    std::unordered_map<std::string, std::vector<double>> table;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto cols = split_whitespace(line);
        if (cols.empty()) continue;
        if (line_no == 1 && cols.size() == 2 && is_unsigned(cols[0]) && is_unsigned(cols[1])) {
            dim = std::stoul(cols[1]);
            continue;
        }
        if (cols.size() < 2) throw ParseError(line_no, "expected a word followed by reals");
        if (dim == 0) dim = cols.size() - 1;
        if (cols.size() - 1 != dim) {
            throw ParseError(line_no, "expected " + std::to_string(dim) + " reals, got " + std::to_string(cols.size() - 1));
        }
        std::vector<double> vec(dim);
        for (std::size_t i = 0; i < dim; ++i) vec[i] = parse_real(cols[i + 1], line_no);
        table.emplace(cols[0], std::move(vec));
    }
    if (dim == 0) throw Error("vector file is empty");
    return VectorTableProvider(std::move(table), dim);
}

VectorTableProvider VectorTableProvider::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open vector file '" + path + "'");
    return parse(in);
}

std::vector<double> VectorTableProvider::lookup(const std::string& word) const {
    auto it = table_.find(word);
    if (it == table_.end()) it = table_.find(to_lower(word));
    if (it != table_.end()) return it->second;
    return fallback_.lookup(word);
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& path, std::size_t hash_dimension) {
    if (path.empty()) return std::make_unique<HashEmbeddingProvider>(hash_dimension);
    return std::make_unique<VectorTableProvider>(VectorTableProvider::load(path));
}

PatternSet extract_patterns(const Dataset& d, const std::string& category, const PatternOptions& options) {
    struct Count {
        std::int64_t left = 0;
        std::int64_t right = 0;
    };
    std::map<std::vector<std::string>, Count> counts;
    bool any = false;
    auto add_ngrams = [&](const Sentence& s, std::size_t from, std::size_t to, Side side) {
        for (std::size_t n = 2; n <= 3; ++n) {
            for (std::size_t i = from; i + n <= to; ++i) {
                std::vector<std::string> words;
                for (std::size_t k = i; k < i + n; ++k) {
                    words.push_back(options.lowercase ? to_lower(s.tokens[k].surface) : s.tokens[k].surface);
                }
                auto& c = counts[words];
                (side == Side::Left ? c.left : c.right) += 1;
            }
        }
    };
    for (std::size_t si = 0; si < d.sentences.size(); ++si) {
        const Sentence& s = d.sentences[si];
        for (const auto& m : extract_mentions(s, si, {options.lowercase})) {
            if (m.category != category) continue;
            any = true;
            const std::size_t left_from = m.start >= options.window ? m.start - options.window : 0;
            add_ngrams(s, left_from, m.start, Side::Left);
            add_ngrams(s, m.end, std::min(s.size(), m.end + options.window), Side::Right);
        }
    }
    if (!any) throw Error("category '" + category + "' has no mentions in '" + d.name + "'");

    std::vector<ContextPattern> bigrams, trigrams;
    for (const auto& [words, c] : counts) {
        ContextPattern p{words, c.left >= c.right ? Side::Left : Side::Right, c.left + c.right};
        (words.size() == 2 ? bigrams : trigrams).push_back(std::move(p));
    }
    auto rank = [](std::vector<ContextPattern>& v, std::size_t keep) {
        std::sort(v.begin(), v.end(), [](const ContextPattern& a, const ContextPattern& b) {
            if (a.frequency != b.frequency) return a.frequency > b.frequency;
            return a.words < b.words;
        });
        if (v.size() > keep) v.resize(keep);
    };
    rank(bigrams, options.top_bigrams);
    rank(trigrams, options.top_trigrams);

    PatternSet out;
    out.category = category;
    out.patterns = std::move(bigrams);
    out.patterns.insert(out.patterns.end(), trigrams.begin(), trigrams.end());
    std::int64_t total = 0;
    for (const auto& p : out.patterns) total += p.frequency;
    for (const auto& p : out.patterns) {
        out.probabilities.push_back(static_cast<double>(p.frequency) / static_cast<double>(total));
    }
    return out;
}

std::vector<double> pattern_vector(const ContextPattern& p, const EmbeddingProvider& e) {
    std::vector<double> acc(e.dimension(), 0.0);
    if (p.words.empty()) return acc;
    for (const auto& w : p.words) {
        const auto v = e.lookup(w);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
    const double n = static_cast<double>(p.words.size());
    for (double& x : acc) x /= n;
    return acc;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

struct EmbeddedPatterns {
    std::vector<double> probabilities;
    std::vector<std::vector<double>> vectors;
};

EmbeddedPatterns embed(const PatternSet& p, const EmbeddingProvider& e) {
    EmbeddedPatterns out;
    out.probabilities = p.probabilities;
    for (const auto& pat : p.patterns) out.vectors.push_back(pattern_vector(pat, e));
    return out;
}

double weighted_similarity(const EmbeddedPatterns& te, const EmbeddedPatterns& tr) {
    double eta = 0.0;
    for (std::size_t i = 0; i < te.vectors.size(); ++i) {
        for (std::size_t j = 0; j < tr.vectors.size(); ++j) {
            eta += te.probabilities[i] * tr.probabilities[j] * cosine(te.vectors[i], tr.vectors[j]);
        }
    }
    return std::clamp(eta, -1.0, 1.0);
}

}  // namespace

double ccr(const PatternSet& test_patterns, const PatternSet& train_patterns, const EmbeddingProvider& e) {
    return weighted_similarity(embed(test_patterns, e), embed(train_patterns, e));
}

double ccr(const Dataset& train, const Dataset& test, const std::string& category, const EmbeddingProvider& e,
           const PatternOptions& options) {
    return ccr(extract_patterns(test, category, options), extract_patterns(train, category, options), e);
}

CcrValue ccr_aggregate(const Dataset& train, const Dataset& test, const EmbeddingProvider& e,
                       const PatternOptions& options) {
    std::vector<std::string> shared;
    std::set_intersection(train.categories.begin(), train.categories.end(), test.categories.begin(),
                          test.categories.end(), std::back_inserter(shared));
    if (shared.empty()) throw Error("'" + train.name + "' and '" + test.name + "' share no categories");
    CcrValue out;
    double cross = 0.0, self_train = 0.0, self_test = 0.0;
    for (const auto& cat : shared) {
        const auto tr = embed(extract_patterns(train, cat, options), e);
        const auto te = embed(extract_patterns(test, cat, options), e);
        const double eta = weighted_similarity(te, tr);
        out.per_category[cat] = eta;
        cross += eta;
        self_train += weighted_similarity(tr, tr);
        self_test += weighted_similarity(te, te);
    }
    const double k = static_cast<double>(shared.size());
    out.eta_raw = cross / k;
    const double a = self_train / k, b = self_test / k;
    const double denom = a == b ? a : std::sqrt(a * b);
    out.eta_normalized = denom > 0.0 ? std::clamp(out.eta_raw / denom, -1.0, 1.0) : 0.0;
    return out;
}

nlohmann::json to_json(const PatternSet& p) {
    nlohmann::json pats = nlohmann::json::array();
    for (std::size_t i = 0; i < p.patterns.size(); ++i) {
        pats.push_back({{"words", p.patterns[i].words},
                        {"side", p.patterns[i].side == Side::Left ? "LEFT" : "RIGHT"},
                        {"frequency", p.patterns[i].frequency},
                        {"probability", p.probabilities[i]}});
    }
    return {{"category", p.category}, {"patterns", pats}};
}

nlohmann::json to_json(const CcrValue& v) {
    return {{"eta_raw", v.eta_raw}, {"eta_normalized", v.eta_normalized}, {"per_category", v.per_category}};
}

}  // namespace nerdiag
