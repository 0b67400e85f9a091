// Command-line front end for the nerdiag library.

#include "nerdiag/common.hpp"
#include "nerdiag/consistency.hpp"
#include "nerdiag/context.hpp"
#include "nerdiag/corpus.hpp"
#include "nerdiag/coverage.hpp"
#include "nerdiag/experiments.hpp"
#include "nerdiag/review_service.hpp"
#include "nerdiag/tagger.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace nerdiag;
using nlohmann::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string train, test, pred, vectors, out;
    // Unset unless given, so they do not override the config file.
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scheme;
    std::optional<int> tag_column;
    bool case_sensitive = false;
    bool lenient = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--train", f.train, "training corpus (CoNLL)");
    app->add_option("--test", f.test, "test corpus (CoNLL)");
    app->add_option("--pred", f.pred, "predicted corpus aligned with --test");
    app->add_option("--vectors", f.vectors, "word vector file for context similarity");
    app->add_option("--out", f.out, "output directory (stdout when omitted)");
    app->add_option("--seed", f.seed, "random seed");
    app->add_option("--scheme", f.scheme, "input tag scheme: IOB1, IOB2 or BIOES");
    app->add_option("--tag-column", f.tag_column, "tag column, negative counts from the end");
    app->add_flag("--case-sensitive", f.case_sensitive, "keep surface case when comparing entities");
    app->add_flag("--lenient", f.lenient, "repair invalid tag sequences instead of failing");
}

ExperimentConfig resolve(const CommonFlags& f) {
    ExperimentConfig c = f.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(f.config_path);
    if (!f.train.empty()) c.train_path = f.train;
    if (!f.test.empty()) c.test_path = f.test;
    if (!f.pred.empty()) c.pred_path = f.pred;
    if (!f.vectors.empty()) c.vectors = f.vectors;
    if (!f.out.empty()) c.output_dir = f.out;
    if (f.seed) c.seed = *f.seed;
    if (f.scheme) c.scheme = parse_tag_scheme(*f.scheme);
    if (f.tag_column) c.tag_column = *f.tag_column;
    if (f.case_sensitive) c.lowercase = c.patterns.lowercase = false;
    return c;
}

std::string require(const std::string& path, const char* flag) {
    if (path.empty()) throw Error(std::string("missing required ") + flag);
    return path;
}

Dataset load(const ExperimentConfig& c, const std::string& path, bool lenient, std::string name = {}) {
    if (name.empty()) name = fs::path(path).stem().string();
    return load_conll(path, c.conll_options(name, !lenient));
}

std::string tsv_header(const ExperimentConfig& c) {
    return "# nerdiag " + std::string(kToolVersion) + " seed=" + std::to_string(c.seed) + "\n";
}

/// Writes `files` (name -> content) under the output directory together with
/// a manifest; without an output directory the primary JSON goes to stdout.
void emit(const ExperimentConfig& c, const json& manifest, const json& primary, const std::string& primary_name,
          const std::map<std::string, std::string>& extra = {}) {
    json doc = primary;
    doc["manifest"] = manifest;
    if (c.output_dir.empty()) {
        std::cout << doc.dump(2) << "\n";
        return;
    }
    fs::path dir(c.output_dir);
    write_text_file((dir / primary_name).string(), doc.dump(2) + "\n");
    write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    for (const auto& [name, content] : extra) write_text_file((dir / name).string(), content);
}

std::vector<std::string> split_spec(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        auto comma = s.find(',', start);
        parts.push_back(s.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return parts;
}

json ecr_table(const EntityStatsTable& stats) {
    json rows = json::array();
    for (const auto& [surface, s] : stats.surfaces) {
        if (s.c_te == 0) continue;
        auto v = ecr(s);
        rows.push_back({{"surface", surface},
                        {"rho", v.rho},
                        {"c_tr", v.c_tr},
                        {"c_te", v.c_te},
                        {"bucket", bucket_id(bucket(v))},
                        {"train_counts", s.train_counts},
                        {"test_counts", s.test_counts}});
    }
    return rows;
}

volatile std::sig_atomic_t g_stop = 0;
ReviewServer* g_server = nullptr;

void on_signal(int) {
    g_stop = 1;
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diagnostics for named entity recognition datasets and models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    CommonFlags f;

    auto* ecr_cmd = app.add_subcommand("ecr", "entity coverage ratio of each test entity");
    add_common(ecr_cmd, f);
    std::string surface;
    ecr_cmd->add_option("--surface", surface, "report a single surface form");

    auto* eecr_cmd = app.add_subcommand("eecr", "expected entity coverage ratio of a train/test pair");
    add_common(eecr_cmd, f);

    auto* ccr_cmd = app.add_subcommand("ccr", "contextual coverage ratio of a train/test pair");
    add_common(ccr_cmd, f);

    auto* breakdown_cmd = app.add_subcommand("breakdown", "per-bucket precision, recall and F1");
    add_common(breakdown_cmd, f);

    auto* detect_cmd = app.add_subcommand("detect-errors", "rank likely annotation errors in the test set");
    add_common(detect_cmd, f);

    auto* cross_cmd = app.add_subcommand("cross", "cross-dataset F1, EECR and CCR matrices");
    add_common(cross_cmd, f);
    std::vector<std::string> cross_specs;
    bool measures_only = false;
    cross_cmd->add_option("--dataset", cross_specs, "NAME,TRAIN,TEST or NAME,FILE (split by train_fraction)")
        ->required();
    cross_cmd->add_flag("--measures-only", measures_only, "skip tagger training and the F1 matrix");

    auto* augment_cmd = app.add_subcommand("augment-order", "EECR-ordered source augmentation curves");
    add_common(augment_cmd, f);
    std::vector<std::string> source_specs;
    std::string modes_arg = "descending,ascending,random";
    bool order_only = false;
    augment_cmd->add_option("--source", source_specs, "NAME,FILE")->required();
    augment_cmd->add_option("--modes", modes_arg, "comma-separated: descending, ascending, random");
    augment_cmd->add_flag("--order-only", order_only, "report the EECR order without training");

    auto* ploner_cmd = app.add_subcommand("ploner", "collapse corpora to PER/LOC/ORG and sample equal sizes");
    add_common(ploner_cmd, f);
    std::vector<std::string> ploner_specs;
    std::size_t ploner_n = 0;
    ploner_cmd->add_option("--input", ploner_specs, "NAME,FILE,MAP.json")->required();
    auto* n_opt = ploner_cmd->add_option("--n", ploner_n, "sentences per corpus (default 2500)");

    auto* tagger_cmd = app.add_subcommand("tagger", "train and apply the window tagger");
    tagger_cmd->require_subcommand(1);
    std::string model_path;
    auto* tagger_train = tagger_cmd->add_subcommand("train", "train a model on --train");
    add_common(tagger_train, f);
    auto* tagger_predict = tagger_cmd->add_subcommand("predict", "tag --test with --model");
    add_common(tagger_predict, f);
    tagger_predict->add_option("--model", model_path, "model file")->required();
    auto* tagger_eval = tagger_cmd->add_subcommand("eval", "entity F1 of --model on --test");
    add_common(tagger_eval, f);
    tagger_eval->add_option("--model", model_path, "model file")->required();

    auto* consistency_cmd = app.add_subcommand("consistency", "gradient consistency and error alignment");
    add_common(consistency_cmd, f);

    auto* review_cmd = app.add_subcommand("review", "annotation review service");
    review_cmd->require_subcommand(1);
    std::string journal_path, ui_dir, host = "127.0.0.1";
    int port = 8765;
    auto* review_serve = review_cmd->add_subcommand("serve", "serve the review API and UI");
    add_common(review_serve, f);
    review_serve->add_option("--journal", journal_path, "decision journal (JSON Lines)")->required();
    review_serve->add_option("--port", port, "port to listen on");
    review_serve->add_option("--host", host, "address to bind");
    review_serve->add_option("--ui-dir", ui_dir, "directory of built UI assets");
    auto* review_apply = review_cmd->add_subcommand("apply", "apply a journal offline");
    add_common(review_apply, f);
    review_apply->add_option("--journal", journal_path, "decision journal (JSON Lines)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        auto c = resolve(f);
        auto mopts = c.mention_options();

        if (*ecr_cmd || *eecr_cmd || *ccr_cmd || *breakdown_cmd || *detect_cmd || *consistency_cmd) {
            auto train = load(c, require(c.train_path, "--train"), f.lenient);
            auto test = load(c, require(c.test_path, "--test"), f.lenient);
            std::map<std::string, std::string> inputs{{"train", c.train_path}, {"test", c.test_path}};

            if (*ecr_cmd) {
                auto stats = compute_entity_stats(train, test, mopts);
                json body;
                if (!surface.empty()) {
                    auto key = c.lowercase ? to_lower(surface) : surface;
                    auto v = ecr(key, stats);
                    body = {{"surface", key}, {"rho", v.rho}, {"c_tr", v.c_tr}, {"c_te", v.c_te},
                            {"bucket", bucket_id(bucket(v))}};
                } else {
                    body = {{"entities", ecr_table(stats)}};
                }
                emit(c, make_manifest(c, inputs), body, "ecr.json");
            } else if (*eecr_cmd) {
                emit(c, make_manifest(c, inputs), {{"eecr", eecr(train, test, mopts)}}, "eecr.json");
            } else if (*ccr_cmd) {
                auto provider = make_provider(c.vectors, c.hash_dimension);
                if (!c.vectors.empty()) inputs["vectors"] = c.vectors;
                auto patterns = c.patterns;
                patterns.lowercase = c.lowercase;
                emit(c, make_manifest(c, inputs), to_json(ccr_aggregate(train, test, *provider, patterns)), "ccr.json");
            } else if (*breakdown_cmd) {
                std::optional<Dataset> pred;
                if (!c.pred_path.empty()) {
                    pred = load(c, c.pred_path, f.lenient);
                    inputs["pred"] = c.pred_path;
                }
                auto report = run_breakdown(train, test, pred ? &*pred : nullptr, c);
                emit(c, make_manifest(c, inputs), to_json(report), "breakdown.json",
                     {{"breakdown.tsv", tsv_header(c) + to_tsv(report)}});
            } else if (*detect_cmd) {
                auto candidates = detect_annotation_candidates(compute_entity_stats(train, test, mopts), test, mopts);
                json summary = {{"candidates", candidates.size()}};
                if (c.output_dir.empty()) {
                    std::cout << to_jsonl(candidates);
                } else {
                    emit(c, make_manifest(c, inputs), summary, "detect-errors.json",
                         {{"candidates.jsonl", to_jsonl(candidates)}});
                }
            } else {
                auto report = run_consistency(train, test, c);
                emit(c, make_manifest(c, inputs), to_json(report), "consistency.json",
                     {{"delta.tsv", tsv_header(c) + to_tsv(report.delta)},
                      {"error_matrix.tsv", tsv_header(c) + to_tsv(report.errors)}});
            }
        } else if (*cross_cmd) {
            std::vector<NamedSplit> splits;
            std::map<std::string, std::string> inputs;
            for (const auto& spec : cross_specs) {
                auto parts = split_spec(spec);
                if (parts.size() == 3) {
                    splits.push_back({parts[0], load(c, parts[1], f.lenient, parts[0] + ".train"),
                                      load(c, parts[2], f.lenient, parts[0] + ".test")});
                    inputs[parts[0] + ".train"] = parts[1];
                    inputs[parts[0] + ".test"] = parts[2];
                } else if (parts.size() == 2) {
                    auto [tr, te] = split_dataset(load(c, parts[1], f.lenient, parts[0]), c.train_fraction, c.seed);
                    splits.push_back({parts[0], std::move(tr), std::move(te)});
                    inputs[parts[0]] = parts[1];
                } else {
                    throw Error("--dataset expects NAME,TRAIN,TEST or NAME,FILE, got '" + spec + "'");
                }
            }
            auto provider = make_provider(c.vectors, c.hash_dimension);
            if (!c.vectors.empty()) inputs["vectors"] = c.vectors;
            auto m = run_cross(splits, c, *provider, !measures_only);
            std::map<std::string, std::string> files{
                {"m_rho.tsv", tsv_header(c) + matrix_tsv(m.names, m.names, m.m_rho)},
                {"m_phi.tsv", tsv_header(c) + matrix_tsv(m.names, m.names, m.m_phi)}};
            if (!m.m_f1.empty()) files["m_f1.tsv"] = tsv_header(c) + matrix_tsv(m.names, m.names, m.m_f1);
            emit(c, make_manifest(c, inputs), to_json(m), "cross.json", files);
        } else if (*augment_cmd) {
            auto target = load(c, require(c.test_path, "--test"), f.lenient);
            std::map<std::string, std::string> inputs{{"test", c.test_path}};
            std::vector<Dataset> sources;
            for (const auto& spec : source_specs) {
                auto parts = split_spec(spec);
                if (parts.size() != 2) throw Error("--source expects NAME,FILE, got '" + spec + "'");
                sources.push_back(load(c, parts[1], f.lenient, parts[0]));
                inputs["source." + parts[0]] = parts[1];
            }
            std::vector<AugmentationMode> modes;
            for (const auto& m : split_spec(modes_arg)) modes.push_back(parse_augmentation_mode(m));
            if (order_only) {
                std::map<std::string, double> scores;
                for (const auto& s : sources) scores[s.name] = eecr(s, target, mopts);
                json orders = json::object();
                for (auto m : modes) orders[to_string(m)] = augmentation_order(scores, m, c.seed);
                emit(c, make_manifest(c, inputs), {{"eecr", scores}, {"orders", orders}}, "augment-order.json");
            } else {
                auto r = run_augmentation(target, sources, modes, c);
                emit(c, make_manifest(c, inputs), to_json(r), "augment-order.json",
                     {{"augmentation.tsv", tsv_header(c) + to_tsv(r)}});
            }
        } else if (*ploner_cmd) {
            if (c.output_dir.empty()) throw Error("ploner requires --out");
            std::size_t n = n_opt->count() ? ploner_n : c.ploner_size;
            std::vector<std::pair<Dataset, CategoryMap>> inputs_data;
            std::map<std::string, std::string> inputs;
            for (const auto& spec : ploner_specs) {
                auto parts = split_spec(spec);
                if (parts.size() != 3) throw Error("--input expects NAME,FILE,MAP.json, got '" + spec + "'");
                inputs_data.emplace_back(load(c, parts[1], f.lenient, parts[0]), CategoryMap::load(parts[2]));
                inputs[parts[0]] = parts[1];
                inputs[parts[0] + ".map"] = parts[2];
            }
            auto outputs = build_ploner(inputs_data, n, c.seed);
            std::map<std::string, std::string> files;
            json summary = json::array();
            for (const auto& d : outputs) {
                auto [tr, te] = split_dataset(d, c.train_fraction, c.seed);
                files[d.name + ".conll"] = write_conll(d);
                files[d.name + ".train.conll"] = write_conll(tr);
                files[d.name + ".test.conll"] = write_conll(te);
                summary.push_back({{"name", d.name},
                                   {"sentences", d.sentences.size()},
                                   {"train_sentences", tr.sentences.size()},
                                   {"test_sentences", te.sentences.size()},
                                   {"categories", d.categories}});
            }
            emit(c, make_manifest(c, inputs), {{"datasets", summary}, {"n", n}}, "ploner.json", files);
        } else if (*tagger_train) {
            if (c.output_dir.empty()) throw Error("tagger train requires --out");
            auto train = load(c, require(c.train_path, "--train"), f.lenient);
            TrainLog log;
            auto model = nerdiag::train(train, c.tagger_config(), &log);
            fs::create_directories(c.output_dir);
            save_model((fs::path(c.output_dir) / "model.bin").string(), model);
            emit(c, make_manifest(c, {{"train", c.train_path}}),
                 {{"initial_loss", log.initial_loss}, {"epoch_loss", log.epoch_loss}, {"parameters", model.theta.size()},
                  {"tags", model.tags}},
                 "train.json");
        } else if (*tagger_predict || *tagger_eval) {
            auto model = load_model(model_path);
            auto test = load(c, require(c.test_path, "--test"), f.lenient);
            auto pred = predict(model, test);
            std::map<std::string, std::string> inputs{{"model", model_path}, {"test", c.test_path}};
            if (*tagger_predict) {
                if (c.output_dir.empty()) {
                    std::cout << write_conll_predictions(test, pred);
                } else {
                    emit(c, make_manifest(c, inputs), {{"sentences", pred.sentences.size()}}, "predict.json",
                         {{"predictions.conll", write_conll_predictions(test, pred)}});
                }
            } else {
                auto s = evaluate_f1(test, pred);
                emit(c, make_manifest(c, inputs),
                     {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"precision", s.precision}, {"recall", s.recall},
                      {"f1", s.f1}},
                     "eval.json");
            }
        } else if (*review_serve || *review_apply) {
            auto train = load(c, require(c.train_path, "--train"), f.lenient);
            auto test = load(c, require(c.test_path, "--test"), f.lenient);
            if (*review_apply) {
                if (c.output_dir.empty()) throw Error("review apply requires --out");
                auto r = export_revised(train, test, read_journal(journal_path), c.output_dir);
                std::cout << to_json(r).dump(2) << "\n";
            } else {
                std::string export_dir = c.output_dir.empty() ? "revised" : c.output_dir;
                ReviewSession session(std::move(train), std::move(test), journal_path, export_dir, mopts);
                ReviewServer server(session, ui_dir);
                int bound = server.bind(port, host);
                g_server = &server;
                std::signal(SIGINT, on_signal);
                std::signal(SIGTERM, on_signal);
                std::cerr << "review service on http://" << host << ":" << bound << "/ ("
                          << session.candidates().size() << " candidates)\n";
                server.serve();
                g_server = nullptr;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
