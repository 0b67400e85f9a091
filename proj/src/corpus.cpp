#include "nerdiag/corpus.hpp"

#include "nerdiag/common.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace nerdiag {

std::string to_string(TagScheme scheme) {
    switch (scheme) {
        case TagScheme::IOB1: return "IOB1";
        case TagScheme::IOB2: return "IOB2";
        case TagScheme::BIOES: return "BIOES";
    }
    return "?";
}

TagScheme parse_tag_scheme(std::string_view name) {
    const std::string n = to_lower(name);
    if (n == "iob1") return TagScheme::IOB1;
    if (n == "iob2" || n == "bio") return TagScheme::IOB2;
    if (n == "bioes" || n == "iobes") return TagScheme::BIOES;
    throw Error("unknown tag scheme '" + std::string(name) + "'");
}

bool is_outside(std::string_view tag) { return tag == "O"; }

char tag_prefix(std::string_view tag) { return tag.empty() ? '\0' : tag[0]; }

std::string tag_category(std::string_view tag) {
    if (tag.size() < 3 || tag[1] != '-') return {};
    return std::string(tag.substr(2));
}

namespace {

bool well_formed(std::string_view tag, TagScheme scheme) {
    if (tag == "O") return true;
    if (tag.size() < 3 || tag[1] != '-') return false;
    const char p = tag[0];
    if (scheme == TagScheme::BIOES) return p == 'B' || p == 'I' || p == 'E' || p == 'S';
    return p == 'B' || p == 'I';
}

// Returns the index of the first token violating the scheme, or -1.
long first_violation(const std::vector<std::string>& tags, TagScheme scheme) {
    if (scheme == TagScheme::IOB1) return -1;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const char p = tag_prefix(tags[i]);
        const std::string cat = tag_category(tags[i]);
        if (p == 'I' || p == 'E') {
            bool continues = false;
            if (i > 0) {
                const char q = tag_prefix(tags[i - 1]);
                continues = (q == 'B' || q == 'I') && tag_category(tags[i - 1]) == cat;
            }
            if (!continues) return static_cast<long>(i);
        }
        if (scheme == TagScheme::BIOES && (p == 'B' || p == 'I')) {
            bool closed_later = false;
            if (i + 1 < tags.size()) {
                const char q = tag_prefix(tags[i + 1]);
                closed_later = (q == 'I' || q == 'E') && tag_category(tags[i + 1]) == cat;
            }
            if (!closed_later) return static_cast<long>(i);
        }
    }
    return -1;
}

std::vector<std::string> bioes_to_iob2(const std::vector<std::string>& tags) {
    std::vector<std::string> out(tags.size());
    std::string open;  // category of the entity that may be continued
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const char p = tag_prefix(tags[i]);
        const std::string cat = tag_category(tags[i]);
        if (tags[i] == "O") {
            out[i] = "O";
            open.clear();
        } else if (p == 'B' || p == 'S') {
            out[i] = "B-" + cat;
            open = p == 'B' ? cat : std::string();
        } else {  // I or E
            out[i] = (open == cat ? "I-" : "B-") + cat;
            open = p == 'I' ? cat : std::string();
        }
    }
    return out;
}

}  // namespace

std::vector<std::string> repair_iob2(const std::vector<std::string>& tags) {
    std::vector<std::string> out = tags;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (tag_prefix(out[i]) != 'I') continue;
        const std::string cat = tag_category(out[i]);
        const bool continues = i > 0 && !is_outside(out[i - 1]) && tag_category(out[i - 1]) == cat;
        if (!continues) out[i] = "B-" + cat;
    }
    return out;
}

bool is_valid_iob2(const std::vector<std::string>& tags) {
    for (const auto& t : tags) {
        if (!well_formed(t, TagScheme::IOB2)) return false;
    }
    return first_violation(tags, TagScheme::IOB2) < 0;
}

std::string positional_sentence_id(std::size_t index) { return "s" + std::to_string(index); }

void refresh_categories(Dataset& d) {
    std::set<std::string> cats;
    for (const auto& s : d.sentences) {
        for (const auto& t : s.tokens) {
            if (!is_outside(t.gold_tag)) cats.insert(tag_category(t.gold_tag));
        }
    }
    d.categories.assign(cats.begin(), cats.end());
}

namespace {

struct PendingSentence {
    std::string id;
    std::size_t first_line = 0;
    std::vector<std::size_t> lines;
    std::vector<Token> tokens;
};

void finish_sentence(PendingSentence& p, const ConllOptions& options, Dataset& d, std::set<std::string>& ids) {
    if (p.tokens.empty()) {
        if (!p.id.empty()) throw ParseError(p.first_line, "sentence id '" + p.id + "' has no tokens");
        return;
    }
    std::vector<std::string> tags;
    tags.reserve(p.tokens.size());
    for (const auto& t : p.tokens) tags.push_back(t.gold_tag);

    if (options.strict) {
        long bad = first_violation(tags, options.scheme);
        if (bad >= 0) {
            throw ParseError(p.lines[static_cast<std::size_t>(bad)],
                             "tag '" + tags[static_cast<std::size_t>(bad)] + "' violates the " +
                                 to_string(options.scheme) + " scheme");
        }
    }
    if (options.scheme == TagScheme::BIOES) {
        tags = bioes_to_iob2(tags);
    } else {
        tags = repair_iob2(tags);
    }
    for (std::size_t i = 0; i < tags.size(); ++i) p.tokens[i].gold_tag = std::move(tags[i]);

    Sentence s;
    s.id = p.id.empty() ? positional_sentence_id(d.sentences.size()) : p.id;
    if (!ids.insert(s.id).second) throw ParseError(p.first_line, "duplicate sentence id '" + s.id + "'");
    s.tokens = std::move(p.tokens);
    d.sentences.push_back(std::move(s));
    p = PendingSentence{};
}

}  // namespace

Dataset parse_conll(std::istream& in, const ConllOptions& options) {
    Dataset d;
    d.name = options.name;
    d.scheme = TagScheme::IOB2;
    std::set<std::string> ids;
    PendingSentence pending;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto cols = split_whitespace(line);
        if (cols.empty()) {
            finish_sentence(pending, options, d, ids);
            continue;
        }
        if (cols[0] == "-DOCSTART-") continue;
        if (cols.size() == 4 && cols[0] == "#" && cols[1] == "id" && cols[2] == "=") {
            if (!pending.tokens.empty()) finish_sentence(pending, options, d, ids);
            pending.id = cols[3];
            pending.first_line = line_no;
            continue;
        }
        if (cols.size() < 2) throw ParseError(line_no, "expected a token and a tag, got one column");
        const int n = static_cast<int>(cols.size());
        const int col = options.tag_column < 0 ? n + options.tag_column : options.tag_column;
        if (col <= 0 || col >= n) {
            throw ParseError(line_no, "tag column " + std::to_string(options.tag_column) + " out of range");
        }
        const std::string& tag = cols[static_cast<std::size_t>(col)];
        if (!well_formed(tag, options.scheme)) {
            throw ParseError(line_no, "malformed tag '" + tag + "' for scheme " + to_string(options.scheme));
        }
        if (pending.tokens.empty() && pending.id.empty()) pending.first_line = line_no;
        pending.lines.push_back(line_no);
        pending.tokens.push_back(Token{cols[0], tag});
    }
    finish_sentence(pending, options, d, ids);
    refresh_categories(d);
    return d;
}

Dataset parse_conll(std::string_view text, const ConllOptions& options) {
    std::istringstream in{std::string(text)};
    return parse_conll(in, options);
}

Dataset load_conll(const std::string& path, ConllOptions options) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file '" + path + "'");
    if (options.name.empty()) options.name = path;
    try {
        return parse_conll(in, options);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path + ": " + e.what());
    }
}

void write_conll(std::ostream& out, const Dataset& d) {
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
        const auto& s = d.sentences[i];
        if (s.id != positional_sentence_id(i)) out << "# id = " << s.id << '\n';
        for (const auto& t : s.tokens) out << t.surface << ' ' << t.gold_tag << '\n';
        out << '\n';
    }
}

std::string write_conll(const Dataset& d) {
    std::ostringstream out;
    write_conll(out, d);
    return out.str();
}

void save_conll(const std::string& path, const Dataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    write_conll(out, d);
}

std::string write_conll_predictions(const Dataset& gold, const Dataset& predicted) {
    check_aligned(gold, predicted);
    std::ostringstream out;
    for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
        const auto& g = gold.sentences[i];
        const auto& p = predicted.sentences[i];
        if (g.id != positional_sentence_id(i)) out << "# id = " << g.id << '\n';
        for (std::size_t t = 0; t < g.tokens.size(); ++t) {
            out << g.tokens[t].surface << ' ' << g.tokens[t].gold_tag << ' ' << p.tokens[t].gold_tag << '\n';
        }
        out << '\n';
    }
    return out.str();
}

std::string normalize_surface(const Sentence& s, std::size_t start, std::size_t end, bool lowercase) {
    std::string out;
    for (std::size_t i = start; i < end; ++i) {
        if (i > start) out += ' ';
        out += s.tokens[i].surface;
    }
    return lowercase ? to_lower(out) : out;
}

std::vector<EntityMention> extract_mentions(const Sentence& s, std::size_t sentence_index,
                                            const MentionOptions& options) {
    std::vector<EntityMention> out;
    const std::size_t n = s.tokens.size();
    std::size_t i = 0;
    while (i < n) {
        const std::string& tag = s.tokens[i].gold_tag;
        if (is_outside(tag)) {
            ++i;
            continue;
        }
        const std::string cat = tag_category(tag);
        std::size_t j = i + 1;
        while (j < n && tag_prefix(s.tokens[j].gold_tag) == 'I' && tag_category(s.tokens[j].gold_tag) == cat) ++j;
        out.push_back(EntityMention{s.id, sentence_index, i, j, cat, normalize_surface(s, i, j, options.lowercase)});
        i = j;
    }
    return out;
}

std::vector<EntityMention> extract_mentions(const Dataset& d, const MentionOptions& options) {
    std::vector<EntityMention> out;
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
        auto m = extract_mentions(d.sentences[i], i, options);
        out.insert(out.end(), std::make_move_iterator(m.begin()), std::make_move_iterator(m.end()));
    }
    return out;
}

void retag(Sentence& s, const std::vector<EntityMention>& mentions) {
    for (auto& t : s.tokens) t.gold_tag = "O";
    for (const auto& m : mentions) {
        if (m.start >= m.end || m.end > s.tokens.size()) throw Error("mention span out of range in sentence " + s.id);
        for (std::size_t i = m.start; i < m.end; ++i) {
            s.tokens[i].gold_tag = (i == m.start ? "B-" : "I-") + m.category;
        }
    }
}

CategoryMap CategoryMap::identity(const std::vector<std::string>& categories) {
    CategoryMap m;
    for (const auto& c : categories) m.mapping[c] = c;
    return m;
}

CategoryMap CategoryMap::from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("category map: ") + e.what());
    }
    if (!j.is_object()) throw Error("category map must be a JSON object");
    CategoryMap m;
    for (const auto& [key, value] : j.items()) {
        if (value.is_null()) {
            m.mapping[key] = std::nullopt;
        } else if (value.is_string()) {
            m.mapping[key] = value.get<std::string>();
        } else {
            throw Error("category map entry '" + key + "' must be a string or null");
        }
    }
    return m;
}

CategoryMap CategoryMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open category map '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

Dataset collapse_labels(const Dataset& d, const CategoryMap& map) {
    std::vector<std::string> missing;
    for (const auto& c : d.categories) {
        if (!map.mapping.count(c)) missing.push_back(c);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& c : missing) list += (list.empty() ? "" : ", ") + c;
        throw Error("category map does not cover: " + list);
    }
    Dataset out = d;
    for (auto& s : out.sentences) {
        for (auto& t : s.tokens) {
            if (is_outside(t.gold_tag)) continue;
            const auto& target = map.mapping.at(tag_category(t.gold_tag));
            t.gold_tag = target ? std::string(1, tag_prefix(t.gold_tag)) + "-" + *target : "O";
        }
    }
    refresh_categories(out);
    return out;
}

Dataset sample_sentences(const Dataset& d, std::size_t n, std::uint64_t seed) {
    if (n > d.sentences.size()) {
        throw Error("cannot sample " + std::to_string(n) + " sentences from '" + d.name + "' with " +
                    std::to_string(d.sentences.size()));
    }
    Dataset out;
    out.name = d.name;
    out.scheme = d.scheme;
    for (std::size_t i : sample_indices(d.sentences.size(), n, seed)) out.sentences.push_back(d.sentences[i]);
    refresh_categories(out);
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train fraction must lie in (0, 1)");
    const std::size_t n = d.sentences.size();
    const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_fraction + 0.5);
    std::vector<bool> in_train(n, false);
    for (std::size_t i : sample_indices(n, n_train, seed)) in_train[i] = true;
    Dataset train, test;
    train.name = d.name + ".train";
    test.name = d.name + ".test";
    for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train : test).sentences.push_back(d.sentences[i]);
    refresh_categories(train);
    refresh_categories(test);
    return {std::move(train), std::move(test)};
}

Dataset concatenate(const std::vector<const Dataset*>& parts, std::string name) {
    Dataset out;
    out.name = std::move(name);
    for (const Dataset* p : parts) {
        for (const auto& s : p->sentences) {
            Sentence copy = s;
            copy.id = p->name + "/" + s.id;
            out.sentences.push_back(std::move(copy));
        }
    }
    refresh_categories(out);
    return out;
}

void check_aligned(const Dataset& a, const Dataset& b) {
    const std::size_t n = std::min(a.sentences.size(), b.sentences.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = a.sentences[i];
        const auto& y = b.sentences[i];
        bool same = x.tokens.size() == y.tokens.size();
        for (std::size_t t = 0; same && t < x.tokens.size(); ++t) same = x.tokens[t].surface == y.tokens[t].surface;
        if (!same) throw Error("datasets are misaligned at sentence '" + x.id + "'");
    }
    if (a.sentences.size() != b.sentences.size()) {
        const std::string id = a.sentences.size() > n ? a.sentences[n].id : b.sentences[n].id;
        throw Error("datasets are misaligned at sentence '" + id + "' (sentence counts " +
                    std::to_string(a.sentences.size()) + " vs " + std::to_string(b.sentences.size()) + ")");
    }
}

std::size_t count_tokens(const Dataset& d) {
    std::size_t n = 0;
    for (const auto& s : d.sentences) n += s.tokens.size();
    return n;
}

}  // namespace nerdiag
