#include "nerdiag/consistency.hpp"

#include "nerdiag/common.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace nerdiag {

ParameterVector GradientVector::to_dense() const {
    ParameterVector out(size, 0.0);
    for (std::size_t i = 0; i < sparse_index.size(); ++i) out[sparse_index[i]] = sparse_value[i];
    std::copy(dense.begin(), dense.end(), out.begin() + static_cast<std::ptrdiff_t>(dense_offset));
    return out;
}

namespace {

double compute_norm(const GradientVector& g) {
    double sq = 0.0;
    for (double v : g.sparse_value) sq += v * v;
    for (double v : g.dense) sq += v * v;
    return std::sqrt(sq);
}

}  // namespace

GradientVector GradientVector::from_dense(const std::vector<double>& values, std::size_t dense_offset) {
    if (dense_offset > values.size()) throw Error("dense offset beyond vector size");
    GradientVector g;
    g.size = values.size();
    for (std::size_t i = 0; i < dense_offset; ++i) {
        if (values[i] != 0.0) {
            g.sparse_index.push_back(static_cast<std::uint32_t>(i));
            g.sparse_value.push_back(values[i]);
        }
    }
    g.dense_offset = dense_offset;
    g.dense.assign(values.begin() + static_cast<std::ptrdiff_t>(dense_offset), values.end());
    g.norm = compute_norm(g);
    return g;
}

GradientVector entity_gradient(const TaggerModel& model, const Sentence& s, const EntityMention& m,
                               GradientScope scope) {
    if (m.end > s.size() || m.start >= m.end) throw Error("mention does not lie in sentence '" + s.id + "'");
    const TokenRange range = scope == GradientScope::Span ? TokenRange{m.start, m.end} : TokenRange{0, s.size()};
    const SparseGradient sg = sparse_loss_gradient(model, s, range);
    GradientVector g;
    g.entity = m;
    g.size = model.layout.total;
    g.dense_offset = model.layout.hidden_weights;
    g.dense.assign(model.layout.total - g.dense_offset, 0.0);
    for (std::size_t i = 0; i < sg.index.size(); ++i) {
        if (sg.index[i] >= g.dense_offset) {
            g.dense[sg.index[i] - g.dense_offset] = sg.value[i];
        } else {
            g.sparse_index.push_back(sg.index[i]);
            g.sparse_value.push_back(sg.value[i]);
        }
    }
    g.norm = compute_norm(g);
    return g;
}

double dot(const GradientVector& a, const GradientVector& b) {
    if (a.size != b.size || a.dense_offset != b.dense_offset) throw Error("gradient layouts differ");
    double sum = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.sparse_index.size() && j < b.sparse_index.size()) {
        if (a.sparse_index[i] < b.sparse_index[j]) {
            ++i;
        } else if (a.sparse_index[i] > b.sparse_index[j]) {
            ++j;
        } else {
            sum += a.sparse_value[i++] * b.sparse_value[j++];
        }
    }
    const double* x = a.dense.data();
    const double* y = b.dense.data();
    for (std::size_t k = 0; k < a.dense.size(); ++k) sum += x[k] * y[k];
    return sum;
}

double cs(const GradientVector& a, const GradientVector& b) {
    if (!a.usable() || !b.usable()) throw Error("consistency is undefined for a zero-norm gradient");
    return std::clamp(dot(a, b) / (a.norm * b.norm), -1.0, 1.0);
}

std::optional<std::size_t> ConsistencyMatrix::index_of(const std::string& category) const {
    auto it = std::find(categories.begin(), categories.end(), category);
    if (it == categories.end()) return std::nullopt;
    return static_cast<std::size_t>(it - categories.begin());
}

ConsistencyMatrix consistency_from_gradients(const std::vector<std::string>& categories,
                                             const std::vector<std::vector<GradientVector>>& groups) {
    if (categories.size() != groups.size()) throw Error("one gradient group per category is required");
    const std::size_t k = categories.size();
    ConsistencyMatrix out;
    out.categories = categories;
    out.delta.assign(k * k, std::nullopt);
    std::vector<std::vector<const GradientVector*>> usable(k);
    for (std::size_t p = 0; p < k; ++p) {
        out.sample_counts.push_back(groups[p].size());
        for (const auto& g : groups[p]) {
            if (g.usable()) usable[p].push_back(&g);
        }
        out.zero_norm_counts.push_back(groups[p].size() - usable[p].size());
    }
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t q = p; q < k; ++q) {
            const auto& a = usable[p];
            const auto& b = usable[q];
            double sum = 0.0;
            std::size_t pairs = 0;
            if (p == q) {
                for (std::size_t i = 0; i < a.size(); ++i) {
                    for (std::size_t j = i + 1; j < a.size(); ++j, ++pairs) sum += cs(*a[i], *a[j]);
                }
            } else {
                for (const auto* x : a) {
                    for (const auto* y : b) {
                        sum += cs(*x, *y);
                        ++pairs;
                    }
                }
            }
            if (pairs == 0) continue;
            const double v = std::clamp(sum / static_cast<double>(pairs), -1.0, 1.0);
            out.delta[p * k + q] = v;
            out.delta[q * k + p] = v;
        }
    }
    return out;
}

ConsistencyMatrix consistency_matrix(const TaggerModel& model, const Dataset& val, const ConsistencyOptions& options) {
    if (options.cap_per_category == 0) throw Error("cap per category must be positive");
    std::map<std::string, std::vector<EntityMention>> by_category;
    for (auto& m : extract_mentions(val)) {
        if (model.tag_index("B-" + m.category) >= 0) by_category[m.category].push_back(std::move(m));
    }
    if (by_category.size() < 2) throw Error("consistency needs mentions of at least two categories known to the model");
    std::vector<std::string> categories;
    std::vector<std::vector<GradientVector>> groups;
    for (const auto& [cat, mentions] : by_category) {
        categories.push_back(cat);
        const std::size_t take = std::min(mentions.size(), options.cap_per_category);
        std::vector<GradientVector> group;
        for (std::size_t i : sample_indices(mentions.size(), take, options.seed ^ fnv1a(cat))) {
            const auto& m = mentions[i];
            group.push_back(entity_gradient(model, val.sentences[m.sentence_index], m, options.scope));
        }
        groups.push_back(std::move(group));
    }
    return consistency_from_gradients(categories, groups);
}

std::string predicted_outcome(const Sentence& predicted, const EntityMention& gold) {
    const auto pred = extract_mentions(predicted, gold.sentence_index);
    for (const auto& m : pred) {
        if (m.start == gold.start && m.end == gold.end) return m.category;
    }
    std::map<std::string, std::size_t> votes;
    for (std::size_t t = gold.start; t < gold.end; ++t) {
        const auto& tag = predicted.tokens[t].gold_tag;
        if (!is_outside(tag)) ++votes[tag_category(tag)];
    }
    if (votes.empty()) return "O";
    std::size_t best = 0;
    for (const auto& [cat, n] : votes) best = std::max(best, n);
    for (std::size_t t = gold.start; t < gold.end; ++t) {
        const auto& tag = predicted.tokens[t].gold_tag;
        if (!is_outside(tag) && votes[tag_category(tag)] == best) return tag_category(tag);
    }
    return "O";
}

ErrorMatrix error_matrix(const Dataset& gold, const Dataset& predicted) {
    check_aligned(gold, predicted);
    std::vector<std::pair<std::string, std::string>> outcomes;  // (gold, predicted)
    std::set<std::string> extra;
    for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
        for (const auto& m : extract_mentions(gold.sentences[i], i)) {
            auto out = predicted_outcome(predicted.sentences[i], m);
            if (out != "O" && !std::binary_search(gold.categories.begin(), gold.categories.end(), out)) extra.insert(out);
            outcomes.emplace_back(m.category, std::move(out));
        }
    }
    ErrorMatrix er;
    er.rows = gold.categories;
    er.columns = er.rows;
    er.columns.insert(er.columns.end(), extra.begin(), extra.end());
    er.columns.push_back("O");
    const std::size_t r = er.rows.size(), c = er.columns.size();
    er.counts.assign(r * c, 0);
    er.totals.assign(r, 0);
    er.values.assign(r * c, 0.0);
    auto col_of = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(er.columns.begin(), er.columns.end(), name) - er.columns.begin());
    };
    for (const auto& [g, p] : outcomes) {
        const std::size_t row = col_of(g);
        ++er.counts[row * c + col_of(p)];
        ++er.totals[row];
    }
    for (std::size_t p = 0; p < r; ++p) {
        const std::int64_t correct = er.counts[p * c + p];
        const std::int64_t errors = er.totals[p] - correct;
        if (er.totals[p] > 0) er.values[p * c + p] = static_cast<double>(correct) / static_cast<double>(er.totals[p]);
        if (errors == 0) continue;
        for (std::size_t q = 0; q < c; ++q) {
            if (q != p) er.values[p * c + q] = static_cast<double>(er.counts[p * c + q]) / static_cast<double>(errors);
        }
    }
    return er;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("pearson: vectors differ in length");
    if (x.size() < 2) throw Error("pearson: at least two points are required");
    auto constant = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
    };
    if (constant(x) || constant(y)) throw Error("pearson: zero variance");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double align_consistency_error(const ConsistencyMatrix& delta, const ErrorMatrix& er) {
    std::vector<double> xs, ys;
    for (std::size_t p = 0; p < delta.size(); ++p) {
        auto row = std::find(er.rows.begin(), er.rows.end(), delta.categories[p]);
        if (row == er.rows.end()) continue;
        const auto r = static_cast<std::size_t>(row - er.rows.begin());
        for (std::size_t q = 0; q < delta.size(); ++q) {
            if (p == q || !delta.at(p, q)) continue;
            auto col = std::find(er.columns.begin(), er.columns.end(), delta.categories[q]);
            if (col == er.columns.end()) continue;
            xs.push_back(*delta.at(p, q));
            ys.push_back(er.at(r, static_cast<std::size_t>(col - er.columns.begin())));
        }
    }
    if (xs.size() < 2) throw Error("alignment needs at least two paired off-diagonal cells");
    return pearson(xs, ys);
}

std::string to_string(Relationship r) {
    switch (r) {
        case Relationship::Sibling: return "SIBLING";
        case Relationship::Overlapping: return "OVERLAPPING";
        case Relationship::Orthogonal: return "ORTHOGONAL";
    }
    return "?";
}

std::vector<RelationshipLabel> classify_relationships(const ConsistencyMatrix& delta, double tau) {
    if (!(tau > 0.0)) throw Error("relationship threshold must be positive");
    std::vector<RelationshipLabel> out;
    for (std::size_t p = 0; p < delta.size(); ++p) {
        for (std::size_t q = p + 1; q < delta.size(); ++q) {
            const auto v = delta.at(p, q);
            if (!v) continue;
            Relationship label = Relationship::Orthogonal;
            if (*v > tau) label = Relationship::Sibling;
            if (*v < -tau) label = Relationship::Overlapping;
            out.push_back(RelationshipLabel{delta.categories[p], delta.categories[q], label, *v});
        }
    }
    return out;
}

double default_tau(const ConsistencyMatrix& delta) {
    std::vector<double> v;
    for (std::size_t p = 0; p < delta.size(); ++p) {
        for (std::size_t q = p + 1; q < delta.size(); ++q) {
            if (delta.at(p, q)) v.push_back(*delta.at(p, q));
        }
    }
    if (v.size() < 2) return 0.1;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    return sd > 0.0 ? 0.1 * sd : 0.1;
}

nlohmann::json to_json(const ConsistencyMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t p = 0; p < m.size(); ++p) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t q = 0; q < m.size(); ++q) {
            const auto v = m.at(p, q);
            row.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        }
        rows.push_back(row);
    }
    return {{"categories", m.categories},
            {"delta", rows},
            {"sample_counts", m.sample_counts},
            {"zero_norm_counts", m.zero_norm_counts}};
}

nlohmann::json to_json(const ErrorMatrix& m) {
    nlohmann::json values = nlohmann::json::array(), counts = nlohmann::json::array();
    for (std::size_t p = 0; p < m.rows.size(); ++p) {
        nlohmann::json vr = nlohmann::json::array(), cr = nlohmann::json::array();
        for (std::size_t q = 0; q < m.columns.size(); ++q) {
            vr.push_back(m.at(p, q));
            cr.push_back(m.count(p, q));
        }
        values.push_back(vr);
        counts.push_back(cr);
    }
    return {{"rows", m.rows}, {"columns", m.columns}, {"values", values}, {"counts", counts}, {"totals", m.totals}};
}

nlohmann::json to_json(const AlignmentReport& r) {
    nlohmann::json rel = nlohmann::json::array();
    for (const auto& l : r.relationships) {
        rel.push_back({{"p", l.p}, {"q", l.q}, {"label", to_string(l.label)}, {"delta", l.delta}});
    }
    nlohmann::json j = {{"consistency", to_json(r.delta)},
                        {"error_matrix", to_json(r.errors)},
                        {"tau", r.tau},
                        {"relationships", rel}};
    j["pearson"] = r.pearson ? nlohmann::json(*r.pearson) : nlohmann::json(nullptr);
    if (!r.pearson) j["pearson_error"] = r.pearson_error;
    return j;
}

std::string to_tsv(const ConsistencyMatrix& m) {
    std::ostringstream out;
    out << "category";
    for (const auto& c : m.categories) out << '\t' << c;
    out << '\n';
    for (std::size_t p = 0; p < m.size(); ++p) {
        out << m.categories[p];
        for (std::size_t q = 0; q < m.size(); ++q) {
            const auto v = m.at(p, q);
            out << '\t' << (v ? format_double(*v) : "NA");
        }
        out << '\n';
    }
    return out.str();
}

std::string to_tsv(const ErrorMatrix& m) {
    std::ostringstream out;
    out << "category";
    for (const auto& c : m.columns) out << '\t' << c;
    out << '\n';
    for (std::size_t p = 0; p < m.rows.size(); ++p) {
        out << m.rows[p];
        for (std::size_t q = 0; q < m.columns.size(); ++q) out << '\t' << format_double(m.at(p, q));
        out << '\n';
    }
    return out.str();
}

}  // namespace nerdiag
