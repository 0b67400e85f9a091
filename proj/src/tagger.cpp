#include "nerdiag/tagger.hpp"

#include "nerdiag/common.hpp"
#include "nerdiag/context.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace nerdiag {

void TaggerConfig::validate() const {
    if (embedding_dim == 0 || char_hash_buckets == 0 || hidden_dim == 0) {
        throw Error("tagger dimensions must be positive");
    }
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (epochs == 0) throw Error("epochs must be positive");
    if (min_word_count == 0) throw Error("min_word_count must be positive");
}

Vocabulary::Vocabulary() : words_{"<pad>", "<unk>"} {
    index_.emplace(words_[0], kPad);
    index_.emplace(words_[1], kUnknown);
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) {
        if (v.index_.count(w)) continue;
        v.index_.emplace(w, static_cast<std::int32_t>(v.words_.size()));
        v.words_.push_back(w);
    }
    return v;
}

Vocabulary Vocabulary::build(const Dataset& d, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : d.sentences) {
        for (const auto& t : s.tokens) ++counts[to_lower(t.surface)];
    }
    std::vector<std::string> words;
    for (const auto& [w, n] : counts) {
        if (n >= min_count) words.push_back(w);
    }
    return from_words(words);
}

std::int32_t Vocabulary::id(const std::string& word) const {
    auto it = index_.find(to_lower(word));
    if (it == index_.end() || it->second == kPad) return kUnknown;
    return it->second;
}

std::vector<std::string> make_tag_set(const std::vector<std::string>& categories) {
    std::vector<std::string> tags{"O"};
    for (const auto& c : categories) {
        tags.push_back("B-" + c);
        tags.push_back("I-" + c);
    }
    return tags;
}

Casing casing_of(const std::string& word) {
    std::size_t upper = 0, lower = 0;
    for (char c : word) {
        if (c >= 'A' && c <= 'Z') ++upper;
        if (c >= 'a' && c <= 'z') ++lower;
    }
    if (upper + lower == 0) return Casing::Other;
    if (upper == 0) return Casing::Lower;
    const bool first_upper = word[0] >= 'A' && word[0] <= 'Z';
    if (lower == 0 && upper > 1) return Casing::Upper;
    if (first_upper && upper == 1) return Casing::Title;
    return Casing::Other;
}

TokenFeatures featurize(const Sentence& s, std::size_t t, const TaggerConfig& config, const Vocabulary& vocab) {
    TokenFeatures f;
    const auto r = static_cast<long>(config.window_radius);
    const auto n = static_cast<long>(s.tokens.size());
    for (long k = static_cast<long>(t) - r; k <= static_cast<long>(t) + r; ++k) {
        f.words.push_back(k < 0 || k >= n ? Vocabulary::kPad : vocab.id(s.tokens[static_cast<std::size_t>(k)].surface));
    }
    const std::string& word = s.tokens[t].surface;
    const std::string padded = "^" + to_lower(word) + "$";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        f.char_ngrams.push_back(
            static_cast<std::int32_t>(fnv1a(std::string_view(padded).substr(i, 3)) % config.char_hash_buckets));
    }
    f.casing = casing_of(word);
    return f;
}

ParameterLayout ParameterLayout::make(const TaggerConfig& config, std::size_t vocab_size, std::size_t tag_count) {
    ParameterLayout l;
    l.vocab = vocab_size;
    l.buckets = config.char_hash_buckets;
    l.embedding = config.embedding_dim;
    l.window = 2 * config.window_radius + 1;
    l.input = l.window * l.embedding + l.embedding + kCasingClasses;
    l.hidden = config.hidden_dim;
    l.tags = tag_count;
    l.word_table = 0;
    l.char_table = l.word_table + l.vocab * l.embedding;
    l.hidden_weights = l.char_table + l.buckets * l.embedding;
    l.hidden_bias = l.hidden_weights + l.hidden * l.input;
    l.output_weights = l.hidden_bias + l.hidden;
    l.output_bias = l.output_weights + l.tags * l.hidden;
    l.total = l.output_bias + l.tags;
    return l;
}

TaggerModel TaggerModel::create(const TaggerConfig& config, Vocabulary vocab, std::vector<std::string> tags) {
    config.validate();
    TaggerModel m;
    m.config = config;
    m.vocab = std::move(vocab);
    m.tags = std::move(tags);
    m.layout = ParameterLayout::make(config, m.vocab.size(), m.tags.size());
    m.theta.assign(m.layout.total, 0.0);
    return m;
}

std::int32_t TaggerModel::tag_index(const std::string& tag) const {
    auto it = std::find(tags.begin(), tags.end(), tag);
    return it == tags.end() ? -1 : static_cast<std::int32_t>(it - tags.begin());
}

namespace {

struct Activations {
    std::vector<double> x, h, p;
    std::vector<double> logits;
    double log_partition = 0.0;

    double nll(std::size_t gold) const { return log_partition - logits[gold]; }
};

void check_layout(const TaggerModel& model) {
    if (model.theta.size() != model.layout.total) {
        throw Error("parameter vector has " + std::to_string(model.theta.size()) + " entries, layout expects " +
                    std::to_string(model.layout.total));
    }
}

void run_forward(const TaggerModel& model, const TokenFeatures& f, Activations& a) {
    const auto& L = model.layout;
    const double* th = model.theta.data();
    if (f.words.size() != L.window) throw Error("feature window does not match the model");
    a.x.assign(L.input, 0.0);
    for (std::size_t w = 0; w < L.window; ++w) {
        const auto id = static_cast<std::size_t>(f.words[w]);
        if (id >= L.vocab) throw Error("word id out of range");
        std::memcpy(&a.x[w * L.embedding], th + L.word_table + id * L.embedding, L.embedding * sizeof(double));
    }
    const std::size_t char_at = L.window * L.embedding;
    if (!f.char_ngrams.empty()) {
        const double scale = 1.0 / static_cast<double>(f.char_ngrams.size());
        for (auto c : f.char_ngrams) {
            const double* row = th + L.char_table + static_cast<std::size_t>(c) * L.embedding;
            for (std::size_t e = 0; e < L.embedding; ++e) a.x[char_at + e] += row[e] * scale;
        }
    }
    a.x[char_at + L.embedding + static_cast<std::size_t>(f.casing)] = 1.0;

    a.h.resize(L.hidden);
    for (std::size_t j = 0; j < L.hidden; ++j) {
        const double* w = th + L.hidden_weights + j * L.input;
        double z = th[L.hidden_bias + j];
        for (std::size_t i = 0; i < L.input; ++i) z += w[i] * a.x[i];
        a.h[j] = std::tanh(z);
    }
    a.logits.resize(L.tags);
    a.p.resize(L.tags);
    double max_logit = -INFINITY;
    for (std::size_t k = 0; k < L.tags; ++k) {
        const double* w = th + L.output_weights + k * L.hidden;
        double o = th[L.output_bias + k];
        for (std::size_t j = 0; j < L.hidden; ++j) o += w[j] * a.h[j];
        a.logits[k] = o;
        max_logit = std::max(max_logit, o);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < L.tags; ++k) {
        a.p[k] = std::exp(a.logits[k] - max_logit);
        z += a.p[k];
    }
    for (double& v : a.p) v /= z;
    a.log_partition = max_logit + std::log(z);
}

// Gradient with a dense block for the hidden/output layers and sparse
// embedding rows keyed by their offset in theta.
struct Accumulator {
    std::size_t mlp_offset = 0;
    std::size_t embedding = 0;
    std::vector<double> mlp;
    std::map<std::size_t, std::vector<double>> rows;

    explicit Accumulator(const ParameterLayout& L)
        : mlp_offset(L.hidden_weights), embedding(L.embedding), mlp(L.total - L.hidden_weights, 0.0) {}

    double* row(std::size_t offset) {
        auto it = rows.find(offset);
        if (it == rows.end()) it = rows.emplace(offset, std::vector<double>(embedding, 0.0)).first;
        return it->second.data();
    }
};

// Adds the gradient of -log p[gold] and returns that loss.
double backward(const TaggerModel& model, const TokenFeatures& f, const Activations& a, std::size_t gold,
                Accumulator& acc, std::vector<double>& dh, std::vector<double>& dx) {
    const auto& L = model.layout;
    const double* th = model.theta.data();
    double* g = acc.mlp.data() - acc.mlp_offset;  // index with absolute offsets

    const double loss = a.nll(gold);
    dh.assign(L.hidden, 0.0);
    for (std::size_t k = 0; k < L.tags; ++k) {
        const double d_out = a.p[k] - (k == gold ? 1.0 : 0.0);
        g[L.output_bias + k] += d_out;
        double* gw = g + L.output_weights + k * L.hidden;
        const double* w = th + L.output_weights + k * L.hidden;
        for (std::size_t j = 0; j < L.hidden; ++j) {
            gw[j] += d_out * a.h[j];
            dh[j] += w[j] * d_out;
        }
    }
    dx.assign(L.input, 0.0);
    for (std::size_t j = 0; j < L.hidden; ++j) {
        const double dz = dh[j] * (1.0 - a.h[j] * a.h[j]);
        g[L.hidden_bias + j] += dz;
        double* gw = g + L.hidden_weights + j * L.input;
        const double* w = th + L.hidden_weights + j * L.input;
        for (std::size_t i = 0; i < L.input; ++i) {
            gw[i] += dz * a.x[i];
            dx[i] += w[i] * dz;
        }
    }
    for (std::size_t w = 0; w < L.window; ++w) {
        double* r = acc.row(L.word_table + static_cast<std::size_t>(f.words[w]) * L.embedding);
        for (std::size_t e = 0; e < L.embedding; ++e) r[e] += dx[w * L.embedding + e];
    }
    if (!f.char_ngrams.empty()) {
        const std::size_t char_at = L.window * L.embedding;
        const double scale = 1.0 / static_cast<double>(f.char_ngrams.size());
        for (auto c : f.char_ngrams) {
            double* r = acc.row(L.char_table + static_cast<std::size_t>(c) * L.embedding);
            for (std::size_t e = 0; e < L.embedding; ++e) r[e] += dx[char_at + e] * scale;
        }
    }
    return loss;
}

std::size_t gold_index(const TaggerModel& model, const Sentence& s, std::size_t t) {
    const auto k = model.tag_index(s.tokens[t].gold_tag);
    if (k < 0) throw Error("tag '" + s.tokens[t].gold_tag + "' in sentence '" + s.id + "' is unknown to the model");
    return static_cast<std::size_t>(k);
}

double accumulate(const TaggerModel& model, const Sentence& s, TokenRange range, Accumulator& acc) {
    if (range.first >= range.second || range.second > s.size()) {
        throw Error("invalid token range [" + std::to_string(range.first) + "," + std::to_string(range.second) +
                    ") for sentence '" + s.id + "'");
    }
    check_layout(model);
    Activations a;
    std::vector<double> dh, dx;
    double loss = 0.0;
    for (std::size_t t = range.first; t < range.second; ++t) {
        const auto f = featurize(s, t, model.config, model.vocab);
        run_forward(model, f, a);
        loss += backward(model, f, a, gold_index(model, s, t), acc, dh, dx);
    }
    return loss;
}

}  // namespace

std::vector<double> forward(const TaggerModel& model, const TokenFeatures& features) {
    check_layout(model);
    Activations a;
    run_forward(model, features, a);
    return a.p;
}

TagDistribution tag_distribution(const TaggerModel& model, const Sentence& s) {
    TagDistribution out;
    for (std::size_t t = 0; t < s.size(); ++t) out.push_back(forward(model, featurize(s, t, model.config, model.vocab)));
    return out;
}

LossAndGrad loss_and_grad(const TaggerModel& model, const Sentence& s, std::optional<TokenRange> restrict) {
    const TokenRange range = restrict.value_or(TokenRange{0, s.size()});
    Accumulator acc(model.layout);
    LossAndGrad out;
    out.loss = accumulate(model, s, range, acc);
    out.grad.assign(model.layout.total, 0.0);
    std::copy(acc.mlp.begin(), acc.mlp.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(acc.mlp_offset));
    for (const auto& [offset, row] : acc.rows) std::copy(row.begin(), row.end(), out.grad.begin() + static_cast<std::ptrdiff_t>(offset));
    return out;
}

double SparseGradient::norm() const {
    double sq = 0.0;
    for (double v : value) sq += v * v;
    return std::sqrt(sq);
}

ParameterVector SparseGradient::to_dense(std::size_t size) const {
    ParameterVector out(size, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] = value[i];
    return out;
}

SparseGradient sparse_loss_gradient(const TaggerModel& model, const Sentence& s, TokenRange range, double* loss) {
    Accumulator acc(model.layout);
    const double l = accumulate(model, s, range, acc);
    if (loss) *loss = l;
    SparseGradient g;
    g.index.reserve(acc.rows.size() * acc.embedding + acc.mlp.size());
    g.value.reserve(g.index.capacity());
    for (const auto& [offset, row] : acc.rows) {
        for (std::size_t e = 0; e < row.size(); ++e) {
            g.index.push_back(static_cast<std::uint32_t>(offset + e));
            g.value.push_back(row[e]);
        }
    }
    for (std::size_t i = 0; i < acc.mlp.size(); ++i) {
        g.index.push_back(static_cast<std::uint32_t>(acc.mlp_offset + i));
        g.value.push_back(acc.mlp[i]);
    }
    return g;
}

double sentence_loss(const TaggerModel& model, const Sentence& s) {
    check_layout(model);
    Activations a;
    double loss = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t) {
        run_forward(model, featurize(s, t, model.config, model.vocab), a);
        loss += a.nll(gold_index(model, s, t));
    }
    return loss;
}

double dataset_loss(const TaggerModel& model, const Dataset& d) {
    double total = 0.0;
    for (const auto& s : d.sentences) total += sentence_loss(model, s);
    return total;
}

TaggerModel initialize_model(const Dataset& d, const TaggerConfig& config) {
    config.validate();
    TaggerModel model = TaggerModel::create(config, Vocabulary::build(d, config.min_word_count), make_tag_set(d.categories));
    Rng rng(config.seed);
    for (double& v : model.theta) v = rng.uniform(-0.1, 0.1);
    if (!config.vector_file.empty()) {
        const auto table = VectorTableProvider::load(config.vector_file);
        if (table.dimension() != config.embedding_dim) {
            throw Error("vector file dimension " + std::to_string(table.dimension()) + " differs from embedding_dim " +
                        std::to_string(config.embedding_dim));
        }
        const auto& words = model.vocab.words();
        for (std::size_t id = 2; id < words.size(); ++id) {
            if (!table.contains(words[id])) continue;
            const auto v = table.lookup(words[id]);
            std::copy(v.begin(), v.end(), model.theta.begin() + static_cast<std::ptrdiff_t>(id * config.embedding_dim));
        }
    }
    return model;
}

TaggerModel train(const Dataset& d, const TaggerConfig& config, TrainLog* log) {
    if (d.sentences.empty()) throw Error("cannot train on an empty dataset");
    TaggerModel model = initialize_model(d, config);
    if (log) log->initial_loss = dataset_loss(model, d);
    // Shuffles draw from their own stream derived from the same seed.
    Rng rng(config.seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(d.sentences.size());
    std::iota(order.begin(), order.end(), 0);
    const double lr = config.learning_rate;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const Sentence& s = d.sentences[i];
            Accumulator acc(model.layout);
            accumulate(model, s, {0, s.size()}, acc);
            for (std::size_t k = 0; k < acc.mlp.size(); ++k) model.theta[acc.mlp_offset + k] -= lr * acc.mlp[k];
            for (const auto& [offset, row] : acc.rows) {
                for (std::size_t e = 0; e < row.size(); ++e) model.theta[offset + e] -= lr * row[e];
            }
        }
        if (log) log->epoch_loss.push_back(dataset_loss(model, d));
    }
    return model;
}

Dataset predict(const TaggerModel& model, const Dataset& d) {
    Dataset out = d;
    Activations a;
    check_layout(model);
    for (auto& s : out.sentences) {
        std::vector<std::string> tags;
        for (std::size_t t = 0; t < s.size(); ++t) {
            run_forward(model, featurize(s, t, model.config, model.vocab), a);
            std::size_t best = 0;
            for (std::size_t k = 1; k < a.p.size(); ++k) {
                if (a.p[k] > a.p[best]) best = k;
            }
            tags.push_back(model.tags[best]);
        }
        tags = repair_iob2(tags);
        for (std::size_t t = 0; t < s.size(); ++t) s.tokens[t].gold_tag = tags[t];
    }
    refresh_categories(out);
    return out;
}

F1Result evaluate_f1(const Dataset& gold, const Dataset& predicted) {
    check_aligned(gold, predicted);
    F1Result r;
    for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
        using Key = std::tuple<std::size_t, std::size_t, std::string>;
        std::set<Key> g, p;
        for (const auto& m : extract_mentions(gold.sentences[i], i)) g.emplace(m.start, m.end, m.category);
        for (const auto& m : extract_mentions(predicted.sentences[i], i)) p.emplace(m.start, m.end, m.category);
        for (const auto& k : g) (p.count(k) ? r.tp : r.fn) += 1;
        for (const auto& k : p) {
            if (!g.count(k)) ++r.fp;
        }
    }
    r.finalize();
    return r;
}

namespace {

constexpr char kMagic[8] = {'N', 'D', 'T', 'A', 'G', 'G', 'E', 'R'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    template <typename T>
    void raw(const T& v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
    void u64(std::uint64_t v) { raw(v); }
    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void strings(const std::vector<std::string>& v) {
        u64(v.size());
        for (const auto& s : v) str(s);
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}
    template <typename T>
    T raw() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw Error("model file is truncated");
        return v;
    }
    std::uint64_t u64() { return raw<std::uint64_t>(); }
    std::string str() {
        const auto n = u64();
        if (n > (1ULL << 30)) throw Error("model file is corrupt");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) throw Error("model file is truncated");
        return s;
    }
    std::vector<std::string> strings() {
        const auto n = u64();
        if (n > (1ULL << 30)) throw Error("model file is corrupt");
        std::vector<std::string> v;
        for (std::uint64_t i = 0; i < n; ++i) v.push_back(str());
        return v;
    }

private:
    std::istream& in_;
};

}  // namespace

// Layout: magic, version, config echo, tag set, vocabulary, parameter count,
// then the raw parameters in canonical order (host byte order, little-endian
// on all supported platforms).
void save_model(const std::string& path, const TaggerModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model '" + path + "'");
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.raw(kFormatVersion);
    const auto& c = model.config;
    w.u64(c.window_radius);
    w.u64(c.embedding_dim);
    w.u64(c.char_hash_buckets);
    w.u64(c.hidden_dim);
    w.raw(c.learning_rate);
    w.u64(c.epochs);
    w.u64(c.seed);
    w.u64(c.min_word_count);
    w.str(c.vector_file);
    w.strings(model.tags);
    std::vector<std::string> words(model.vocab.words().begin() + 2, model.vocab.words().end());
    w.strings(words);
    w.u64(model.theta.size());
    out.write(reinterpret_cast<const char*>(model.theta.data()),
              static_cast<std::streamsize>(model.theta.size() * sizeof(double)));
    if (!out) throw Error("failed writing model '" + path + "'");
}

TaggerModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model '" + path + "'");
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("'" + path + "' is not a tagger model");
    Reader r(in);
    const auto version = r.raw<std::uint32_t>();
    if (version != kFormatVersion) throw Error("unsupported model format version " + std::to_string(version));
    TaggerConfig c;
    c.window_radius = r.u64();
    c.embedding_dim = r.u64();
    c.char_hash_buckets = r.u64();
    c.hidden_dim = r.u64();
    c.learning_rate = r.raw<double>();
    c.epochs = r.u64();
    c.seed = r.u64();
    c.min_word_count = r.u64();
    c.vector_file = r.str();
    auto tags = r.strings();
    auto words = r.strings();
    TaggerModel model = TaggerModel::create(c, Vocabulary::from_words(words), std::move(tags));
    const auto n = r.u64();
    if (n != model.layout.total) throw Error("model parameter count does not match its configuration");
    in.read(reinterpret_cast<char*>(model.theta.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw Error("model file is truncated");
    return model;
}

}  // namespace nerdiag
