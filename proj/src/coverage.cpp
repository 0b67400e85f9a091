#include "nerdiag/coverage.hpp"

#include "nerdiag/common.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace nerdiag {

const SurfaceStats* EntityStatsTable::find(const std::string& surface) const {
    auto it = surfaces.find(surface);
    return it == surfaces.end() ? nullptr : &it->second;
}

std::string bucket_id(Bucket b) {
    switch (b) {
        case Bucket::RhoOne: return "RHO_ONE";
        case Bucket::RhoHigh: return "RHO_HIGH";
        case Bucket::RhoLow: return "RHO_LOW";
        case Bucket::ZeroCovered: return "ZERO_COVERED";
        case Bucket::Unseen: return "UNSEEN";
    }
    return "?";
}

std::string bucket_label(Bucket b) {
    switch (b) {
        case Bucket::RhoOne: return "rho=1";
        case Bucket::RhoHigh: return "(0.5,1)";
        case Bucket::RhoLow: return "(0,0.5]";
        case Bucket::ZeroCovered: return "rho=0,C!=0";
        case Bucket::Unseen: return "C=0";
    }
    return "?";
}

Bucket parse_bucket(const std::string& id) {
    for (Bucket b : kAllBuckets) {
        if (bucket_id(b) == id) return b;
    }
    throw Error("unknown bucket '" + id + "'");
}

EntityStatsTable compute_entity_stats(const Dataset& train, const Dataset& test, const MentionOptions& options) {
    EntityStatsTable table;
    for (const auto& m : extract_mentions(train, options)) {
        auto& s = table.surfaces[m.surface_form];
        ++s.train_counts[m.category];
        ++s.c_tr;
    }
    for (const auto& m : extract_mentions(test, options)) {
        auto& s = table.surfaces[m.surface_form];
        ++s.test_counts[m.category];
        ++s.c_te;
        ++table.total_test_mentions;
    }
    if (table.total_test_mentions > 0) {
        const auto total = static_cast<double>(table.total_test_mentions);
        for (auto& [surface, s] : table.surfaces) s.test_mention_freq = static_cast<double>(s.c_te) / total;
    }
    return table;
}

EcrValue ecr(const SurfaceStats& s) {
    EcrValue v{0.0, s.c_tr, s.c_te};
    if (s.c_tr == 0 || s.c_te == 0) return v;
    // Integer numerator and denominator keep the single rounding step exact
    // for ratios like 26/50.
    std::int64_t num = 0;
    for (const auto& [cat, n] : s.train_counts) {
        auto it = s.test_counts.find(cat);
        if (it != s.test_counts.end()) num += n * it->second;
    }
    v.rho = static_cast<double>(num) / static_cast<double>(s.c_tr * s.c_te);
    return v;
}

EcrValue ecr(const std::string& surface, const EntityStatsTable& stats) {
    const SurfaceStats* s = stats.find(surface);
    if (s == nullptr || s->c_te == 0) throw Error("'" + surface + "' is not a test entity");
    return ecr(*s);
}

Bucket bucket(const EcrValue& v) {
    if (v.rho == 1.0) return Bucket::RhoOne;
    if (v.rho > 0.5) return Bucket::RhoHigh;
    if (v.rho > 0.0) return Bucket::RhoLow;
    return v.c_tr == 0 ? Bucket::Unseen : Bucket::ZeroCovered;
}

double eecr(const EntityStatsTable& stats) {
    if (stats.total_test_mentions == 0) throw Error("EECR is undefined for a test set without mentions");
    // Sum rho * count, divide once: single-labeled sets give exactly 1.
    double acc = 0.0;
    for (const auto& [surface, s] : stats.surfaces) {
        if (s.c_te > 0) acc += ecr(s).rho * static_cast<double>(s.c_te);
    }
    return acc / static_cast<double>(stats.total_test_mentions);
}

double eecr(const Dataset& train, const Dataset& test, const MentionOptions& options) {
    return eecr(compute_entity_stats(train, test, options));
}

void Scores::finalize() {
    precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

namespace {

Bucket gold_bucket(const std::string& surface, const EntityStatsTable& stats) {
    const SurfaceStats* s = stats.find(surface);
    return s ? bucket(ecr(*s)) : Bucket::Unseen;
}

}  // namespace

Bucket predicted_bucket(const EntityMention& predicted, const EntityStatsTable& stats) {
    const SurfaceStats* s = stats.find(predicted.surface_form);
    if (s != nullptr && s->c_te > 0) return bucket(ecr(*s));
    if (s == nullptr || s->c_tr == 0) return Bucket::Unseen;
    auto it = s->train_counts.find(predicted.category);
    if (it == s->train_counts.end() || it->second == 0) return Bucket::ZeroCovered;
    const double share = static_cast<double>(it->second) / static_cast<double>(s->c_tr);
    return bucket(EcrValue{share, s->c_tr, 0});
}

BreakdownReport breakdown_f1(const Dataset& test, const Dataset& predictions, const EntityStatsTable& stats,
                             const MentionOptions& options) {
    check_aligned(test, predictions);
    BreakdownReport r;
    for (std::size_t i = 0; i < test.sentences.size(); ++i) {
        const auto gold = extract_mentions(test.sentences[i], i, options);
        const auto pred = extract_mentions(predictions.sentences[i], i, options);
        using Key = std::tuple<std::size_t, std::size_t, std::string>;
        std::set<Key> gold_keys, pred_keys;
        for (const auto& m : gold) gold_keys.emplace(m.start, m.end, m.category);
        for (const auto& m : pred) pred_keys.emplace(m.start, m.end, m.category);
        for (const auto& m : gold) {
            auto& sc = r.at(gold_bucket(m.surface_form, stats));
            if (pred_keys.count({m.start, m.end, m.category})) {
                ++sc.tp;
            } else {
                ++sc.fn;
            }
        }
        for (const auto& m : pred) {
            if (!gold_keys.count({m.start, m.end, m.category})) ++r.at(predicted_bucket(m, stats)).fp;
        }
    }
    for (auto& sc : r.buckets) {
        sc.finalize();
        r.overall.tp += sc.tp;
        r.overall.fp += sc.fp;
        r.overall.fn += sc.fn;
    }
    r.overall.finalize();
    return r;
}

namespace {

nlohmann::json scores_json(const Scores& s) {
    return {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn},
            {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

}  // namespace

nlohmann::json to_json(const BreakdownReport& r) {
    nlohmann::json buckets = nlohmann::json::object();
    for (Bucket b : kAllBuckets) {
        if (!r.at(b).empty()) buckets[bucket_id(b)] = scores_json(r.at(b));
    }
    return {{"overall", scores_json(r.overall)}, {"buckets", buckets}};
}

std::string to_tsv(const BreakdownReport& r) {
    std::ostringstream out;
    out << "metric\tOverall";
    for (Bucket b : kAllBuckets) out << '\t' << bucket_label(b);
    out << '\n';
    auto row = [&](const char* name, auto get, bool ratio) {
        out << name << '\t' << get(r.overall);
        for (Bucket b : kAllBuckets) {
            out << '\t';
            if (ratio && r.at(b).empty()) {
                out << '-';
            } else {
                out << get(r.at(b));
            }
        }
        out << '\n';
    };
    row("precision", [](const Scores& s) { return format_double(s.precision); }, true);
    row("recall", [](const Scores& s) { return format_double(s.recall); }, true);
    row("f1", [](const Scores& s) { return format_double(s.f1); }, true);
    row("tp", [](const Scores& s) { return std::to_string(s.tp); }, false);
    row("fp", [](const Scores& s) { return std::to_string(s.fp); }, false);
    row("fn", [](const Scores& s) { return std::to_string(s.fn); }, false);
    return out.str();
}

std::vector<ErrorCandidate> detect_annotation_candidates(const EntityStatsTable& stats, const Dataset& test,
                                                         const MentionOptions& options) {
    std::map<std::string, std::vector<Occurrence>> occurrences;
    for (const auto& m : extract_mentions(test, options)) {
        occurrences[m.surface_form].push_back(Occurrence{m.sentence_id, m.start, m.end, m.category});
    }
    std::vector<ErrorCandidate> out;
    for (const auto& [surface, s] : stats.surfaces) {
        if (s.c_te == 0) continue;
        const EcrValue v = ecr(s);
        const Bucket b = bucket(v);
        if (b != Bucket::ZeroCovered && b != Bucket::RhoLow) continue;
        ErrorCandidate c;
        c.surface_form = surface;
        c.rho = v;
        c.bucket = b;
        c.train_counts = s.train_counts;
        c.test_counts = s.test_counts;
        std::int64_t best = -1;
        for (const auto& [cat, n] : s.train_counts) {
            if (n > best) {
                best = n;
                c.suggested_label = cat;
            }
        }
        c.score = static_cast<double>(s.c_tr) * (1.0 - v.rho);
        auto it = occurrences.find(surface);
        if (it != occurrences.end()) c.occurrences = it->second;
        std::sort(c.occurrences.begin(), c.occurrences.end(), [](const Occurrence& a, const Occurrence& b) {
            return std::tie(a.sentence_id, a.start, a.end) < std::tie(b.sentence_id, b.start, b.end);
        });
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const ErrorCandidate& a, const ErrorCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.surface_form < b.surface_form;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].id = i;
    return out;
}

nlohmann::json to_json(const ErrorCandidate& c) {
    nlohmann::json occ = nlohmann::json::array();
    for (const auto& o : c.occurrences) {
        occ.push_back({{"sentence_id", o.sentence_id}, {"start", o.start}, {"end", o.end}, {"category", o.category}});
    }
    return {{"id", c.id},
            {"surface", c.surface_form},
            {"rho", c.rho.rho},
            {"c_tr", c.rho.c_tr},
            {"c_te", c.rho.c_te},
            {"bucket", bucket_id(c.bucket)},
            {"score", c.score},
            {"suggested_label", c.suggested_label},
            {"train_counts", c.train_counts},
            {"test_counts", c.test_counts},
            {"occurrences", occ}};
}

std::string to_jsonl(const std::vector<ErrorCandidate>& candidates) {
    std::string out;
    for (const auto& c : candidates) out += to_json(c).dump() + "\n";
    return out;
}

std::string to_string(RevisionAction a) {
    switch (a) {
        case RevisionAction::AcceptGold: return "ACCEPT_GOLD";
        case RevisionAction::Relabel: return "RELABEL";
        case RevisionAction::Respan: return "RESPAN";
        case RevisionAction::Skip: return "SKIP";
    }
    return "?";
}

RevisionAction parse_revision_action(const std::string& s) {
    for (auto a : {RevisionAction::AcceptGold, RevisionAction::Relabel, RevisionAction::Respan, RevisionAction::Skip}) {
        if (to_string(a) == s) return a;
    }
    throw Error("unknown revision action '" + s + "'");
}

nlohmann::json to_json(const RevisionDecision& d) {
    nlohmann::json j = {{"surface", d.surface},
                        {"split", d.split},
                        {"sentence_id", d.sentence_id},
                        {"start", d.start},
                        {"end", d.end},
                        {"action", to_string(d.action)},
                        {"timestamp", d.timestamp},
                        {"note", d.note}};
    if (d.action == RevisionAction::Relabel || d.action == RevisionAction::Respan) j["category"] = d.category;
    if (d.action == RevisionAction::Respan) {
        j["new_start"] = d.new_start;
        j["new_end"] = d.new_end;
    }
    return j;
}

namespace {

std::size_t get_index(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw Error(std::string("decision is missing '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw Error(std::string("decision field '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::string get_string(const nlohmann::json& j, const char* key, bool required) {
    if (!j.contains(key)) {
        if (required) throw Error(std::string("decision is missing '") + key + "'");
        return {};
    }
    if (!j.at(key).is_string()) throw Error(std::string("decision field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

}  // namespace

RevisionDecision decision_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("decision must be a JSON object");
    RevisionDecision d;
    d.surface = get_string(j, "surface", false);
    d.split = j.contains("split") ? get_string(j, "split", true) : "test";
    if (d.split != "test" && d.split != "train") throw Error("decision split must be 'train' or 'test'");
    d.sentence_id = get_string(j, "sentence_id", true);
    d.start = get_index(j, "start");
    d.end = get_index(j, "end");
    d.action = parse_revision_action(get_string(j, "action", true));
    if (d.action == RevisionAction::Relabel || d.action == RevisionAction::Respan) {
        d.category = get_string(j, "category", true);
    }
    if (d.action == RevisionAction::Respan) {
        d.new_start = get_index(j, "new_start");
        d.new_end = get_index(j, "new_end");
    }
    d.timestamp = get_string(j, "timestamp", false);
    d.note = get_string(j, "note", false);
    return d;
}

std::vector<RevisionDecision> parse_journal(const std::string& text) {
    std::vector<RevisionDecision> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        ++line_no;
        std::size_t nl = text.find('\n', pos);
        const bool terminated = nl != std::string::npos;
        std::string line = text.substr(pos, terminated ? nl - pos : std::string::npos);
        pos = terminated ? nl + 1 : text.size();
        if (trim(line).empty()) continue;
        try {
            out.push_back(decision_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            if (!terminated) break;  // torn final write
            throw ParseError(line_no, std::string("journal: ") + e.what());
        }
    }
    return out;
}

std::vector<RevisionDecision> read_journal(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_journal(buf.str());
}

std::vector<RevisionDecision> decisions_for(const std::vector<RevisionDecision>& journal, const std::string& split) {
    std::vector<RevisionDecision> out;
    for (const auto& d : journal) {
        if (d.split == split) out.push_back(d);
    }
    return out;
}

Dataset apply_revisions(const Dataset& d, const std::vector<RevisionDecision>& journal,
                        const std::vector<std::string>& known_categories) {
    const auto& known = known_categories.empty() ? d.categories : known_categories;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < d.sentences.size(); ++i) index[d.sentences[i].id] = i;

    using Key = std::tuple<std::string, std::size_t, std::size_t>;
    std::map<Key, std::size_t> last;  // occurrence -> index of its final decision
    for (std::size_t k = 0; k < journal.size(); ++k) {
        const auto& dec = journal[k];
        auto it = index.find(dec.sentence_id);
        if (it == index.end()) throw Error("decision refers to unknown sentence '" + dec.sentence_id + "'");
        const Sentence& s = d.sentences[it->second];
        bool found = false;
        for (const auto& m : extract_mentions(s, it->second, {false})) found = found || (m.start == dec.start && m.end == dec.end);
        if (!found) {
            throw Error("decision refers to no mention at [" + std::to_string(dec.start) + "," + std::to_string(dec.end) +
                        ") in sentence '" + dec.sentence_id + "'");
        }
        if (dec.action == RevisionAction::Relabel || dec.action == RevisionAction::Respan) {
            if (std::find(known.begin(), known.end(), dec.category) == known.end()) {
                throw Error("unknown category '" + dec.category + "'");
            }
        }
        if (dec.action == RevisionAction::Respan && !(dec.new_start < dec.new_end && dec.new_end <= s.size())) {
            throw Error("respan range [" + std::to_string(dec.new_start) + "," + std::to_string(dec.new_end) +
                        ") is invalid for sentence '" + dec.sentence_id + "'");
        }
        last[Key{dec.sentence_id, dec.start, dec.end}] = k;
    }

    std::vector<std::size_t> order;
    for (const auto& [key, k] : last) order.push_back(k);
    std::sort(order.begin(), order.end());

    Dataset out = d;
    std::set<std::size_t> touched;
    for (std::size_t k : order) {
        const auto& dec = journal[k];
        if (dec.action == RevisionAction::AcceptGold || dec.action == RevisionAction::Skip) continue;
        const std::size_t si = index.at(dec.sentence_id);
        auto& tokens = out.sentences[si].tokens;
        std::size_t from = dec.start, to = dec.end;
        if (dec.action == RevisionAction::Respan) {
            for (std::size_t i = dec.start; i < dec.end; ++i) tokens[i].gold_tag = "O";
            from = dec.new_start;
            to = dec.new_end;
        }
        for (std::size_t i = from; i < to; ++i) tokens[i].gold_tag = (i == from ? "B-" : "I-") + dec.category;
        // The rewritten span must not absorb a following entity.
        if (to < tokens.size() && tag_prefix(tokens[to].gold_tag) == 'I') {
            tokens[to].gold_tag = "B-" + tag_category(tokens[to].gold_tag);
        }
        touched.insert(si);
    }
    for (std::size_t si : touched) {
        auto& tokens = out.sentences[si].tokens;
        std::vector<std::string> tags;
        for (const auto& t : tokens) tags.push_back(t.gold_tag);
        tags = repair_iob2(tags);
        for (std::size_t i = 0; i < tags.size(); ++i) tokens[i].gold_tag = tags[i];
    }
    refresh_categories(out);
    return out;
}

}  // namespace nerdiag
