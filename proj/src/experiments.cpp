#include "nerdiag/experiments.hpp"

#include "nerdiag/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace nerdiag {

namespace {

std::size_t parse_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw Error("config " + key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw Error("config " + key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw Error("config " + key + ": expected an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw Error("config " + key + ": expected a number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error("config " + key + ": expected true or false, got '" + v + "'");
}

std::string unquote(std::string_view v) {
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
        return std::string(v.substr(1, v.size() - 2));
    return std::string(v);
}

std::string hex(const unsigned char* data, std::size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        out += digits[data[i] >> 4];
        out += digits[data[i] & 15];
    }
    return out;
}

std::vector<double> column(const std::vector<std::vector<double>>& m, std::size_t j) {
    std::vector<double> out;
    out.reserve(m.size());
    for (const auto& row : m) out.push_back(row.at(j));
    return out;
}

std::optional<double> try_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    try {
        return pearson(x, y);
    } catch (const Error&) {
        return std::nullopt;
    }
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) {
        out += n;
        out += '\n';
    }
    return out;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "seed") seed = parse_u64(key, value);
    else if (key == "window_radius") tagger.window_radius = parse_size(key, value);
    else if (key == "embedding_dim") tagger.embedding_dim = parse_size(key, value);
    else if (key == "char_hash_buckets") tagger.char_hash_buckets = parse_size(key, value);
    else if (key == "hidden_dim") tagger.hidden_dim = parse_size(key, value);
    else if (key == "learning_rate") tagger.learning_rate = parse_real(key, value);
    else if (key == "epochs") tagger.epochs = parse_size(key, value);
    else if (key == "min_word_count") tagger.min_word_count = parse_size(key, value);
    else if (key == "tagger_vectors") tagger.vector_file = value;
    else if (key == "vectors") vectors = value;
    else if (key == "hash_dimension") hash_dimension = parse_size(key, value);
    else if (key == "context_window") patterns.window = parse_size(key, value);
    else if (key == "top_bigrams") patterns.top_bigrams = parse_size(key, value);
    else if (key == "top_trigrams") patterns.top_trigrams = parse_size(key, value);
    else if (key == "lowercase") lowercase = patterns.lowercase = parse_bool(key, value);
    else if (key == "cap_per_category") cap_per_category = parse_size(key, value);
    else if (key == "tau") tau = parse_real(key, value);
    else if (key == "scope") {
        if (value == "span") scope = GradientScope::Span;
        else if (value == "sentence") scope = GradientScope::Sentence;
        else throw Error("config scope: expected span or sentence, got '" + value + "'");
    }
    else if (key == "ploner_size") ploner_size = parse_size(key, value);
    else if (key == "train_fraction") train_fraction = parse_real(key, value);
    else if (key == "scheme") scheme = parse_tag_scheme(value);
    else if (key == "tag_column") tag_column = parse_int(key, value);
    else if (key == "train") train_path = value;
    else if (key == "test") test_path = value;
    else if (key == "pred") pred_path = value;
    else if (key == "out") output_dir = value;
    else throw Error("config: unknown key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') continue;  // section headers carry no meaning
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(lineno, "expected key = value");
        auto key = std::string(trim(line.substr(0, eq)));
        auto value = unquote(trim(line.substr(eq + 1)));
        if (key.empty()) throw ParseError(lineno, "empty key");
        try {
            c.set(key, value);
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str());
    } catch (const ParseError& e) {
        throw Error(path + ": " + e.what());
    }
}

TaggerConfig ExperimentConfig::tagger_config() const {
    TaggerConfig t = tagger;
    t.seed = seed;
    return t;
}

ConllOptions ExperimentConfig::conll_options(const std::string& name, bool strict) const {
    ConllOptions o;
    o.name = name;
    o.tag_column = tag_column;
    o.scheme = scheme;
    o.strict = strict;
    return o;
}

nlohmann::json ExperimentConfig::echo() const {
    // Paths are reported with their digests in the manifest; the output
    // directory is left out so reports do not depend on where they land.
    return {
        {"seed", seed},
        {"window_radius", tagger.window_radius},
        {"embedding_dim", tagger.embedding_dim},
        {"char_hash_buckets", tagger.char_hash_buckets},
        {"hidden_dim", tagger.hidden_dim},
        {"learning_rate", tagger.learning_rate},
        {"epochs", tagger.epochs},
        {"min_word_count", tagger.min_word_count},
        {"tagger_vectors", tagger.vector_file},
        {"vectors", vectors},
        {"hash_dimension", hash_dimension},
        {"context_window", patterns.window},
        {"top_bigrams", patterns.top_bigrams},
        {"top_trigrams", patterns.top_trigrams},
        {"lowercase", lowercase},
        {"cap_per_category", cap_per_category},
        {"tau", optional_json(tau)},
        {"scope", scope == GradientScope::Span ? "span" : "sentence"},
        {"ploner_size", ploner_size},
        {"train_fraction", train_fraction},
        {"scheme", to_string(scheme)},
        {"tag_column", tag_column},
    };
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    return hex(md, len);
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

nlohmann::json make_manifest(const ExperimentConfig& config, const std::map<std::string, std::string>& inputs) {
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [role, path] : inputs) {
        if (path.empty()) continue;
        files[role] = {{"path", path}, {"sha256", sha256_file(path)}};
    }
    return {{"tool", "nerdiag"}, {"version", kToolVersion}, {"seed", config.seed}, {"config", config.echo()},
            {"inputs", files}};
}

void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

std::string matrix_tsv(const std::vector<std::string>& row_names, const std::vector<std::string>& col_names,
                       const std::vector<std::vector<double>>& values) {
    if (values.size() != row_names.size()) throw Error("matrix_tsv: row count mismatch");
    std::string out = "train\\test";
    for (const auto& c : col_names) out += "\t" + c;
    out += "\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].size() != col_names.size()) throw Error("matrix_tsv: column count mismatch");
        out += row_names[i];
        for (double v : values[i]) out += "\t" + format_double(v);
        out += "\n";
    }
    return out;
}

BreakdownReport run_breakdown(const Dataset& train, const Dataset& test, const Dataset* predictions,
                              const ExperimentConfig& config) {
    auto opts = config.mention_options();
    auto stats = compute_entity_stats(train, test, opts);
    if (predictions) return breakdown_f1(test, *predictions, stats, opts);
    auto model = nerdiag::train(train, config.tagger_config());
    auto pred = predict(model, test);
    return breakdown_f1(test, pred, stats, opts);
}

PearsonSummary summarize_against(const std::vector<std::vector<double>>& f1,
                                 const std::vector<std::vector<double>>& measure) {
    if (f1.size() != measure.size() || f1.empty()) throw Error("summarize_against: matrix shape mismatch");
    std::size_t cols = f1.front().size();
    PearsonSummary s;
    std::vector<double> all_f1, all_m;
    for (std::size_t i = 0; i < f1.size(); ++i) {
        if (f1[i].size() != cols || measure[i].size() != cols) throw Error("summarize_against: matrix shape mismatch");
        s.p_row.push_back(try_pearson(f1[i], measure[i]));
        all_f1.insert(all_f1.end(), f1[i].begin(), f1[i].end());
        all_m.insert(all_m.end(), measure[i].begin(), measure[i].end());
    }
    for (std::size_t j = 0; j < cols; ++j) s.p_col.push_back(try_pearson(column(f1, j), column(measure, j)));
    s.p_overall = try_pearson(all_f1, all_m);
    return s;
}

CrossMatrices run_cross(const std::vector<NamedSplit>& datasets, const ExperimentConfig& config,
                        const EmbeddingProvider& provider, bool train_taggers) {
    if (datasets.size() < 2) throw Error("cross: at least two datasets are required");
    std::size_t n = datasets.size();
    CrossMatrices m;
    std::set<std::string> seen;
    for (const auto& d : datasets) {
        if (!seen.insert(d.name).second) throw Error("cross: duplicate dataset name '" + d.name + "'");
        m.names.push_back(d.name);
    }
    auto opts = config.mention_options();
    auto patterns = config.patterns;
    patterns.lowercase = config.lowercase;
    m.m_rho.assign(n, std::vector<double>(n, 0.0));
    m.m_phi.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            m.m_rho[i][j] = eecr(datasets[i].train, datasets[j].test, opts);
            m.m_phi[i][j] = ccr_aggregate(datasets[i].train, datasets[j].test, provider, patterns).eta_normalized;
        }
    }
    if (train_taggers) {
        m.m_f1.assign(n, std::vector<double>(n, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            auto model = nerdiag::train(datasets[i].train, config.tagger_config());
            for (std::size_t j = 0; j < n; ++j)
                m.m_f1[i][j] = evaluate_f1(datasets[j].test, predict(model, datasets[j].test)).f1;
        }
        m.pearson["rho"] = summarize_against(m.m_f1, m.m_rho);
        m.pearson["phi"] = summarize_against(m.m_f1, m.m_phi);
    }
    return m;
}

nlohmann::json to_json(const CrossMatrices& m) {
    nlohmann::json j = {{"names", m.names}, {"m_rho", m.m_rho}, {"m_phi", m.m_phi}};
    if (!m.m_f1.empty()) j["m_f1"] = m.m_f1;
    nlohmann::json p = nlohmann::json::object();
    for (const auto& [measure, s] : m.pearson) {
        nlohmann::json rows = nlohmann::json::array(), cols = nlohmann::json::array();
        for (const auto& v : s.p_row) rows.push_back(optional_json(v));
        for (const auto& v : s.p_col) cols.push_back(optional_json(v));
        p[measure] = {{"p_row", rows}, {"p_col", cols}, {"p_overall", optional_json(s.p_overall)}};
    }
    j["pearson"] = p;
    return j;
}

std::string to_string(AugmentationMode m) {
    switch (m) {
        case AugmentationMode::Descending: return "DESCENDING";
        case AugmentationMode::Ascending: return "ASCENDING";
        case AugmentationMode::Random: return "RANDOM";
    }
    throw Error("bad augmentation mode");
}

AugmentationMode parse_augmentation_mode(const std::string& s) {
    auto u = to_lower(s);
    if (u == "descending") return AugmentationMode::Descending;
    if (u == "ascending") return AugmentationMode::Ascending;
    if (u == "random") return AugmentationMode::Random;
    throw Error("unknown augmentation mode '" + s + "'");
}

std::vector<std::string> augmentation_order(const std::map<std::string, double>& eecr_by_source,
                                            AugmentationMode mode, std::uint64_t seed) {
    std::vector<std::pair<std::string, double>> items(eecr_by_source.begin(), eecr_by_source.end());
    std::vector<std::string> order;
    if (mode == AugmentationMode::Random) {
        for (const auto& [name, _] : items) order.push_back(name);
        Rng rng(seed);
        rng.shuffle(order);
        return order;
    }
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [name, _] : items) order.push_back(name);
    if (mode == AugmentationMode::Ascending) std::reverse(order.begin(), order.end());
    return order;
}

AugmentationResult run_augmentation(const Dataset& target_val, const std::vector<Dataset>& sources,
                                    const std::vector<AugmentationMode>& modes, const ExperimentConfig& config) {
    if (sources.size() < 2) throw Error("augmentation: at least two sources are required");
    std::map<std::string, const Dataset*> by_name;
    AugmentationResult result;
    auto opts = config.mention_options();
    for (const auto& s : sources) {
        if (s.name.empty()) throw Error("augmentation: sources must be named");
        if (!by_name.emplace(s.name, &s).second) throw Error("augmentation: duplicate source '" + s.name + "'");
        result.eecr[s.name] = eecr(s, target_val, opts);
    }
    std::map<std::string, double> f1_cache;  // keyed by the sorted source set
    for (auto mode : modes) {
        AugmentationCurve curve;
        curve.mode = mode;
        curve.order = augmentation_order(result.eecr, mode, config.seed);
        std::vector<std::string> prefix;
        for (const auto& name : curve.order) {
            prefix.push_back(name);
            std::vector<std::string> key = prefix;
            std::sort(key.begin(), key.end());
            auto cache_key = join_names(key);
            auto hit = f1_cache.find(cache_key);
            if (hit == f1_cache.end()) {
                std::vector<const Dataset*> parts;
                for (const auto& k : key) parts.push_back(by_name.at(k));
                auto train_set = concatenate(parts, "prefix");
                auto model = nerdiag::train(train_set, config.tagger_config());
                double f1 = evaluate_f1(target_val, predict(model, target_val)).f1;
                hit = f1_cache.emplace(cache_key, f1).first;
            }
            curve.f1_points.push_back(hit->second);
        }
        result.curves.push_back(std::move(curve));
    }
    return result;
}

nlohmann::json to_json(const AugmentationResult& r) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : r.curves)
        curves.push_back({{"mode", to_string(c.mode)}, {"order", c.order}, {"f1_points", c.f1_points}});
    return {{"eecr", r.eecr}, {"curves", curves}};
}

std::string to_tsv(const AugmentationResult& r) {
    std::string out = "mode\tprefix\tsource\tf1\n";
    for (const auto& c : r.curves)
        for (std::size_t i = 0; i < c.order.size(); ++i)
            out += to_string(c.mode) + "\t" + std::to_string(i + 1) + "\t" + c.order[i] + "\t" +
                   format_double(c.f1_points[i]) + "\n";
    return out;
}

std::vector<Dataset> build_ploner(const std::vector<std::pair<Dataset, CategoryMap>>& inputs, std::size_t n,
                                  std::uint64_t seed) {
    if (n == 0) throw Error("ploner: sample size must be positive");
    std::vector<Dataset> out;
    for (const auto& [d, map] : inputs) {
        auto collapsed = collapse_labels(d, map);
        for (const auto& c : collapsed.categories)
            if (std::find(kPlonerCategories.begin(), kPlonerCategories.end(), c) == kPlonerCategories.end())
                throw Error("ploner: map for " + d.name + " produces category '" + c + "' outside PER/LOC/ORG");
        out.push_back(sample_sentences(collapsed, std::min(n, collapsed.sentences.size()), seed));
    }
    return out;
}

AlignmentReport run_consistency(const Dataset& train, const Dataset& val, const ExperimentConfig& config) {
    if (train.sentences.empty() || val.sentences.empty()) throw Error("consistency: train and val must be non-empty");
    auto model = nerdiag::train(train, config.tagger_config());
    AlignmentReport r;
    r.delta = consistency_matrix(model, val, {config.cap_per_category, config.seed, config.scope});
    r.errors = error_matrix(val, predict(model, val));
    try {
        r.pearson = align_consistency_error(r.delta, r.errors);
    } catch (const Error& e) {
        r.pearson_error = e.what();
    }
    r.tau = config.tau.value_or(default_tau(r.delta));
    r.relationships = classify_relationships(r.delta, r.tau);
    return r;
}

}  // namespace nerdiag
