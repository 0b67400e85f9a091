// Acceptance gate: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include "nerdiag/common.hpp"
#include "nerdiag/consistency.hpp"
#include "nerdiag/context.hpp"
#include "nerdiag/corpus.hpp"
#include "nerdiag/coverage.hpp"
#include "nerdiag/experiments.hpp"
#include "nerdiag/tagger.hpp"

#include "oracles.hpp"
#include "synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace nerdiag;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

TaggerConfig small_tagger(std::uint64_t seed) {
    TaggerConfig c;
    c.embedding_dim = 16;
    c.hidden_dim = 32;
    c.char_hash_buckets = 1024;
    c.epochs = 5;
    c.learning_rate = 0.1;
    c.seed = seed;
    return c;
}

ExperimentConfig experiment(std::uint64_t seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.tagger = small_tagger(seed);
    return c;
}

/// Gold tags with a share of mentions relabelled, shifted or dropped.
Dataset perturb(const Dataset& gold, std::uint64_t seed) {
    Rng rng(seed);
    Dataset pred = gold;
    const std::vector<std::string> cats{"LOC", "MISC", "ORG", "PER", "EXTRA"};
    for (auto& s : pred.sentences) {
        std::vector<std::string> tags;
        for (auto& t : s.tokens) {
            double u = rng.uniform_unit();
            std::string tag = t.gold_tag;
            if (u < 0.15) tag = "O";
            else if (u < 0.3) tag = (rng.uniform_unit() < 0.5 ? "B-" : "I-") + cats[rng.uniform_index(cats.size())];
            tags.push_back(tag);
        }
        tags = repair_iob2(tags);
        for (std::size_t i = 0; i < tags.size(); ++i) s.tokens[i].gold_tag = tags[i];
    }
    refresh_categories(pred);
    return pred;
}

Outcome ecr_worked_example() {
    std::vector<std::vector<std::string>> train, test;
    for (int i = 0; i < 6; ++i) train.push_back({"chelsea/B-PER", "won"});
    for (int i = 0; i < 4; ++i) train.push_back({"chelsea/B-ORG", "won"});
    for (int i = 0; i < 3; ++i) test.push_back({"Chelsea/B-PER", "lost"});
    for (int i = 0; i < 2; ++i) test.push_back({"Chelsea/B-ORG", "lost"});
    auto stats = compute_entity_stats(synth::make_dataset("train", train), synth::make_dataset("test", test));
    auto v = ecr("chelsea", stats);
    bool pass = v.rho == 0.52 && v.c_tr == 10 && v.c_te == 5 && bucket(v) == Bucket::RhoHigh;
    return {pass, "rho=" + format_double(v.rho) + " C_tr=" + std::to_string(v.c_tr) + " C_te=" + std::to_string(v.c_te)};
}

Outcome measure_oracle_suite() {
    const double tol = 1e-9;
    double worst = 0.0;
    std::string worst_what = "none";
    auto track = [&](double a, double b, const std::string& what) {
        double d = std::abs(a - b);
        if (!(d <= worst)) {
            worst = std::isnan(d) ? INFINITY : d;
            worst_what = what;
        }
    };
    HashEmbeddingProvider provider(64, 3);
    const int corpora = 24;
    for (int k = 0; k < corpora; ++k) {
        auto train = synth::random_corpus(1000 + 2 * k, "train", 14);
        auto test = synth::random_corpus(1001 + 2 * k, "test", 10);
        auto stats = compute_entity_stats(train, test);
        for (const auto& [surface, s] : stats.surfaces) {
            if (s.c_te > 0) track(ecr(surface, stats).rho, oracle::ecr(train, test, surface), "ecr");
        }
        track(eecr(train, test), oracle::eecr(train, test), "eecr");

        auto c = ccr_aggregate(train, test, provider);
        auto o = oracle::ccr(train, test, provider);
        track(c.eta_raw, o.raw, "ccr raw");
        track(c.eta_normalized, o.normalized, "ccr normalized");

        auto cfg = small_tagger(k);
        cfg.embedding_dim = 6;
        cfg.hidden_dim = 8;
        cfg.char_hash_buckets = 64;
        auto model = initialize_model(train, cfg);
        Rng rng(77 + k);
        for (double& v : model.theta) v = rng.uniform(-0.6, 0.6);
        auto delta = consistency_matrix(model, test, {1000, 42, GradientScope::Span});
        auto od = oracle::delta(model, test, delta.categories);
        for (std::size_t i = 0; i < od.size(); ++i) {
            if (od[i].has_value() != delta.delta[i].has_value()) track(1.0, 0.0, "delta definedness");
            else if (od[i]) track(*delta.delta[i], *od[i], "delta");
        }

        auto pred = perturb(test, 500 + k);
        auto er = error_matrix(test, pred);
        auto oe = oracle::error_matrix(test, pred);
        if (er.columns != oe.columns || er.rows != oe.rows) track(1.0, 0.0, "error matrix shape");
        else
            for (std::size_t i = 0; i < oe.values.size(); ++i) track(er.values[i], oe.values[i], "error matrix");

        std::vector<double> x, y;
        for (int i = 0; i < 12; ++i) {
            x.push_back(rng.uniform(-3, 3));
            y.push_back(0.5 * x.back() + rng.uniform(-1, 1));
        }
        track(pearson(x, y), oracle::pearson(x, y), "pearson");
    }
    return {worst <= tol, std::to_string(corpora) + " corpora, max |diff|=" + fmt(worst, 3) + " (" + worst_what + ")"};
}

Outcome bucket_partition() {
    std::size_t fixtures = 0;
    std::vector<std::string> problems;
    auto check = [&](const Dataset& train, const Dataset& test, const Dataset& pred, bool is_gold) {
        ++fixtures;
        auto stats = compute_entity_stats(train, test);
        auto r = breakdown_f1(test, pred, stats);
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (const auto& b : r.buckets) {
            tp += b.tp;
            fp += b.fp;
            fn += b.fn;
        }
        std::int64_t gold = static_cast<std::int64_t>(extract_mentions(test).size());
        std::int64_t by_bucket_gold = 0;
        for (const auto& b : r.buckets) by_bucket_gold += b.tp + b.fn;
        // Each gold mention lands in exactly one bucket: per-surface buckets partition the mentions.
        std::int64_t assigned = 0;
        for (const auto& [surface, s] : stats.surfaces) assigned += s.c_te;
        if (tp != r.overall.tp || fp != r.overall.fp || fn != r.overall.fn) problems.push_back("sum mismatch");
        if (by_bucket_gold != gold || assigned != gold) problems.push_back("gold mentions not partitioned");
        if (is_gold) {
            for (const auto& b : r.buckets)
                if (!b.empty() && b.f1 != 1.0) problems.push_back("gold predictions below F1 1");
            if (r.overall.f1 != 1.0) problems.push_back("overall below 1");
        }
    };
    for (int k = 0; k < 20; ++k) {
        auto train = synth::random_corpus(3000 + 2 * k, "train", 14);
        auto test = synth::random_corpus(3001 + 2 * k, "test", 12);
        check(train, test, test, true);
        check(train, test, perturb(test, 9000 + k), false);
    }
    auto [train, test] = synth::seen_unseen_corpus(5, 300);
    check(train, test, test, true);
    check(train, test, perturb(test, 11), false);
    return {problems.empty(), std::to_string(fixtures) + " fixtures" + (problems.empty() ? "" : ", first problem: " + problems.front())};
}

Outcome gradient_check() {
    const double h = 1e-5;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto d = synth::random_corpus(seed * 31, "grad", 6);
        auto cfg = small_tagger(seed);
        cfg.embedding_dim = 5;
        cfg.hidden_dim = 7;
        cfg.char_hash_buckets = 97;
        cfg.window_radius = 1 + seed % 2;
        auto model = initialize_model(d, cfg);
        Rng rng(seed * 7919);
        for (double& v : model.theta) v = rng.uniform(-0.5, 0.5);
        std::size_t per_seed = 0;
        for (std::size_t si = 0; si < d.sentences.size() && per_seed < 60; ++si) {
            const Sentence& s = d.sentences[si];
            auto analytic = loss_and_grad(model, s).grad;
            auto touched = sparse_loss_gradient(model, s, {0, s.size()}).index;
            for (int pick = 0; pick < 10; ++pick) {
                std::size_t i = touched[rng.uniform_index(touched.size())];
                TaggerModel plus = model, minus = model;
                plus.theta[i] += h;
                minus.theta[i] -= h;
                double numeric = (sentence_loss(plus, s) - sentence_loss(minus, s)) / (2 * h);
                double rel = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
                worst = std::max(worst, rel);
                ++checked;
                ++per_seed;
            }
        }
    }
    return {worst < 1e-4 && checked >= 500, std::to_string(checked) + " coordinates over 10 seeds, max rel err=" + fmt(worst, 3)};
}

Outcome breakdown_trend() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto [train, test] = synth::seen_unseen_corpus(seed, 2000);
        auto r = run_breakdown(train, test, nullptr, experiment(seed));
        double gap = 100.0 * (r.at(Bucket::RhoOne).f1 - r.at(Bucket::Unseen).f1);
        wins += gap >= 10.0;
        detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + ": " +
                  fmt(100 * r.at(Bucket::RhoOne).f1, 4) + " vs " + fmt(100 * r.at(Bucket::Unseen).f1, 4);
    }
    return {wins >= 2, std::to_string(wins) + "/3 seeds with a gap of at least 10 points (" + detail + ")"};
}

Outcome cross_dataset_measures() {
    auto domains = synth::decoupled_domains(7);
    HashEmbeddingProvider provider(300);
    auto cfg = experiment(42);
    auto m = run_cross(domains, cfg, provider, false);
    auto again = run_cross(domains, cfg, provider, false);
    const std::size_t t = 0, a = 1, b = 2;
    bool ordering = m.m_rho[a][t] > m.m_rho[b][t] && m.m_phi[b][t] > m.m_phi[a][t];
    bool diagonal = true;
    for (std::size_t i = 0; i < m.names.size(); ++i) diagonal = diagonal && m.m_rho[i][i] == 1.0;
    bool deterministic = m.m_rho == again.m_rho && m.m_phi == again.m_phi;
    double worst = 0.0;
    for (std::size_t i = 0; i < domains.size(); ++i) {
        for (std::size_t j = 0; j < domains.size(); ++j) {
            worst = std::max(worst, std::abs(m.m_rho[i][j] - oracle::eecr(domains[i].train, domains[j].test)));
            worst = std::max(worst, std::abs(m.m_phi[i][j] - oracle::ccr(domains[i].train, domains[j].test, provider).normalized));
        }
    }
    bool pass = ordering && diagonal && deterministic && worst <= 1e-9;
    return {pass, "EECR(A,T)=" + fmt(m.m_rho[a][t]) + " > EECR(B,T)=" + fmt(m.m_rho[b][t]) + "; CCR(B,T)=" +
                      fmt(m.m_phi[b][t]) + " > CCR(A,T)=" + fmt(m.m_phi[a][t]) + "; diagonal " +
                      (diagonal ? "1.0" : "not 1.0") + "; oracle max |diff|=" + fmt(worst, 3) +
                      (deterministic ? "" : "; NOT deterministic")};
}

Outcome augmentation_ordering() {
    int dominated = 0;
    bool converged = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto suite = synth::augmentation_suite(seed);
        auto r = run_augmentation(suite.target, suite.sources,
                                  {AugmentationMode::Descending, AugmentationMode::Ascending, AugmentationMode::Random},
                                  experiment(seed));
        const auto& desc = r.curves[0].f1_points;
        const auto& asc = r.curves[1].f1_points;
        bool weak = true;
        for (std::size_t i = 0; i < desc.size(); ++i) weak = weak && desc[i] >= asc[i];
        dominated += weak;
        for (const auto& c : r.curves) converged = converged && c.f1_points.back() == desc.back();
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " desc";
        for (double v : desc) detail += " " + fmt(100 * v, 3);
        detail += " asc";
        for (double v : asc) detail += " " + fmt(100 * v, 3);
    }
    return {dominated >= 2 && converged, std::to_string(dominated) + "/3 seeds dominated, " +
                                             (converged ? "converged" : "NOT converged") + " (" + detail + ")"};
}

Outcome consistency_alignment() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto [train, val] = synth::conflicting_task(seed);
        auto r = run_consistency(train, val, experiment(seed));
        const auto& d = r.delta;
        auto i1 = *d.index_of("C1"), i2 = *d.index_of("C2"), i3 = *d.index_of("C3");
        double d11 = d.at(i1, i1).value_or(NAN), d12 = d.at(i1, i2).value_or(NAN), d13 = d.at(i1, i3).value_or(NAN);
        bool overlapping = false;
        for (const auto& rel : r.relationships)
            if (rel.p == "C1" && rel.q == "C2") overlapping = rel.label == Relationship::Overlapping;
        // Error columns share the category order of the rows.
        double e12 = r.errors.at(0, 1), e13 = r.errors.at(0, 2);
        bool aligned = (e12 > e13) == (d12 < d13) && e12 != e13;
        bool ok = d12 < 0 && 0 < d11 && overlapping && aligned;
        wins += ok;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " d11=" + fmt(d11, 3) +
                  " d12=" + fmt(d12, 3) + " d13=" + fmt(d13, 3) + " Er12=" + fmt(e12, 3) + " Er13=" + fmt(e13, 3) +
                  (overlapping ? " OVERLAPPING" : " not-overlapping");
    }
    return {wins >= 2, std::to_string(wins) + "/3 seeds (" + detail + ")"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Outcome cli_determinism() {
    const fs::path root = fs::temp_directory_path() / ("nerdiag_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    auto [train, test] = synth::seen_unseen_corpus(3, 300);
    save_conll((root / "train.conll").string(), train);
    save_conll((root / "test.conll").string(), test);
    auto suite = synth::augmentation_suite(2, 60);
    save_conll((root / "target.conll").string(), suite.target);
    for (const auto& s : suite.sources) save_conll((root / (s.name + ".conll")).string(), s);
    {
        std::ofstream cfg(root / "small.cfg");
        cfg << "embedding_dim = 8\nhidden_dim = 16\nchar_hash_buckets = 256\nepochs = 2\nhash_dimension = 64\n";
        std::ofstream map(root / "map.json");
        map << R"({"PER": "PER", "LOC": "LOC", "ORG": null})";
        std::ofstream journal(root / "journal.jsonl");
        journal << R"({"surface":"x","split":"test","sentence_id":"s0","start":)";
        auto m = extract_mentions(test).front();
        journal << m.start << R"(,"end":)" << m.end << R"(,"action":"RELABEL","category":"ORG"})" << "\n";
    }
    const std::string cli = NERDIAG_CLI;
    const std::string common = " --config small.cfg --train train.conll --test test.conll";
    const std::vector<std::pair<std::string, std::string>> commands{
        {"ecr", "ecr" + common},
        {"eecr", "eecr" + common},
        {"ccr", "ccr" + common},
        {"breakdown", "breakdown" + common},
        {"detect-errors", "detect-errors" + common},
        {"cross", "cross --config small.cfg --dataset one,train.conll,test.conll --dataset two,target.conll"},
        {"augment-order", "augment-order --config small.cfg --test target.conll --source src_a,src_a.conll "
                          "--source src_b,src_b.conll --source src_c,src_c.conll --source src_d,src_d.conll"},
        {"ploner", "ploner --input one,train.conll,map.json --input two,test.conll,map.json --n 50"},
        {"tagger-train", "tagger train --config small.cfg --train train.conll"},
        {"tagger-predict", "tagger predict --model model/model.bin --test test.conll"},
        {"tagger-eval", "tagger eval --model model/model.bin --test test.conll"},
        {"consistency", "consistency" + common},
        {"review-apply", "review apply --train train.conll --test test.conll --journal journal.jsonl"},
    };
    std::vector<std::string> failures;
    std::size_t files = 0;
    for (const auto& [name, args] : commands) {
        std::vector<std::string> runs;
        for (int run = 0; run < 2; ++run) {
            std::string out = "out/" + name + "/" + std::to_string(run);
            std::string cmd = "cd '" + root.string() + "' && '" + cli + "' " + args + " --out " + out + " > /dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) failures.push_back(name + " exited with an error");
            runs.push_back(out);
        }
        if (name == "tagger-train") fs::copy(root / runs[0], root / "model", fs::copy_options::recursive);
        std::vector<fs::path> listed;
        for (const auto& e : fs::recursive_directory_iterator(root / runs[0]))
            if (e.is_regular_file()) listed.push_back(fs::relative(e.path(), root / runs[0]));
        if (listed.empty()) failures.push_back(name + " wrote no files");
        for (const auto& rel : listed) {
            ++files;
            if (!fs::exists(root / runs[1] / rel) || slurp(root / runs[0] / rel) != slurp(root / runs[1] / rel))
                failures.push_back(name + ": " + rel.string() + " differs");
        }
    }
    fs::remove_all(root);
    return {failures.empty(), std::to_string(commands.size()) + " commands, " + std::to_string(files) + " files compared" +
                                  (failures.empty() ? "" : "; " + failures.front())};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"ecr-worked-example", ecr_worked_example},
        {"measure-oracle-suite", measure_oracle_suite},
        {"bucket-partition", bucket_partition},
        {"gradient-check", gradient_check},
        {"breakdown-trend", breakdown_trend},
        {"cross-dataset-measures", cross_dataset_measures},
        {"augmentation-ordering", augmentation_ordering},
        {"consistency-alignment", consistency_alignment},
        {"cli-determinism", cli_determinism},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " [" << fmt(secs, 3) << "s] " << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
