#include "nerdiag/review_service.hpp"

#include "synthetic.hpp"

#include "doctest.h"
#include "httplib.h"

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace nerdiag;
using synth::make_dataset;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("nerdiag_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Train labels "xeno" ORG and "yara" PER; the test set disagrees on some.
std::pair<Dataset, Dataset> fixture() {
    std::vector<std::vector<std::string>> tr, te;
    for (int i = 0; i < 5; ++i) tr.push_back({"at", "Xeno/B-ORG", "today"});
    for (int i = 0; i < 3; ++i) tr.push_back({"mister", "Yara/B-PER"});
    tr.push_back({"in", "Rome/B-LOC"});
    te.push_back({"at", "Xeno/B-PER", "today"});
    te.push_back({"mister", "Yara/B-LOC", "and", "Xeno/B-ORG"});
    te.push_back({"in", "Rome/B-LOC"});
    te.push_back({"mister", "Yara/B-LOC", "Lee/I-LOC"});
    return {make_dataset("train", tr), make_dataset("test", te)};
}

RevisionDecision relabel(const std::string& surface, const std::string& sid, std::size_t start, std::size_t end,
                         const std::string& cat) {
    RevisionDecision d;
    d.surface = surface;
    d.sentence_id = sid;
    d.start = start;
    d.end = end;
    d.action = RevisionAction::Relabel;
    d.category = cat;
    d.timestamp = "2024-05-01T00:00:00Z";
    return d;
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

}  // namespace

TEST_SUITE("review_service") {

TEST_CASE("session candidates follow the detector") {
    auto [train, test] = fixture();
    TempDir dir("review_candidates");
    ReviewSession session(train, test, dir / "journal.jsonl", dir / "out");
    auto expected = detect_annotation_candidates(compute_entity_stats(train, test), test);
    REQUIRE(session.candidates().size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(session.candidates()[i].surface_form == expected[i].surface_form);
    auto page = session.candidate_page(0, 1);
    CHECK(page["total"] == expected.size());
    CHECK(page["items"].size() == 1);
    CHECK(page["items"][0]["surface"] == expected[0].surface_form);
    auto detail = session.candidate_detail(0);
    CHECK(detail["occurrences"][0]["tokens"].size() > 0);
    CHECK(detail["categories"] == nlohmann::json({"LOC", "ORG", "PER"}));
    CHECK_THROWS_AS(session.candidate_detail(99), Error);
}

TEST_CASE("decisions update stats and survive a restart") {
    auto [train, test] = fixture();
    TempDir dir("review_restart");
    nlohmann::json before_restart;
    {
        ReviewSession session(train, test, dir / "journal.jsonl", dir / "out");
        auto stats = session.stats();
        CHECK(stats["decided"] == 0);
        auto after = session.submit(relabel("xeno", "s0", 1, 2, "ORG"));
        CHECK(after["decided"] == stats["decided"].get<int>() + 1);
        CHECK(after["decisions"] == 1);
        RevisionDecision skip;
        skip.surface = "yara";
        skip.sentence_id = "s1";
        skip.start = 1;
        skip.end = 2;
        skip.action = RevisionAction::Skip;
        CHECK(session.submit(skip)["skipped"] == 1);
        CHECK_THROWS_AS(session.submit(relabel("xeno", "s0", 0, 1, "ORG")), Error);
        CHECK_THROWS_AS(session.submit(relabel("xeno", "s0", 1, 2, "GPE")), Error);
        CHECK(session.journal().size() == 2);
        before_restart = session.stats();
    }
    // Simulate a crash in the middle of an append.
    {
        std::ofstream out(dir / "journal.jsonl", std::ios::app);
        out << R"({"surface": "xe)";
    }
    ReviewSession replay(train, test, dir / "journal.jsonl", dir / "out");
    CHECK(replay.stats() == before_restart);
    CHECK(slurp(dir / "journal.jsonl").back() == '\n');
    replay.submit(relabel("yara", "s3", 1, 3, "PER"));
    CHECK(read_journal(dir / "journal.jsonl").size() == 3);
}

TEST_CASE("export without decisions is byte identical") {
    auto [train, test] = fixture();
    TempDir dir("review_empty");
    ReviewSession session(train, test, dir / "journal.jsonl", dir / "out");
    auto r = session.export_files();
    CHECK(r.changed_train == 0);
    CHECK(r.changed_test == 0);
    CHECK(slurp(r.train_path) == write_conll(train));
    CHECK(slurp(r.test_path) == write_conll(test));
}

TEST_CASE("one relabel changes one sentence") {
    auto [train, test] = fixture();
    TempDir dir("review_one");
    ReviewSession session(train, test, dir / "journal.jsonl", dir / "out");
    session.submit(relabel("xeno", "s0", 1, 2, "ORG"));
    auto r = session.export_files();
    CHECK(r.changed_test == 1);
    CHECK(r.changed_train == 0);
    auto revised = load_conll(r.test_path, ConllOptions{"test"});
    CHECK(revised.sentences[0].tokens[1].gold_tag == "B-ORG");
    for (std::size_t i = 1; i < test.sentences.size(); ++i) CHECK(revised.sentences[i] == test.sentences[i]);
    CHECK(to_json(r)["changed_test_sentences"] == 1);
}

TEST_CASE("service export equals the offline apply command") {
    auto [train, test] = fixture();
    TempDir dir("review_dual");
    save_conll(dir / "train.conll", train);
    save_conll(dir / "test.conll", test);
    auto tr = load_conll(dir / "train.conll", ConllOptions{"train"});
    auto te = load_conll(dir / "test.conll", ConllOptions{"test"});
    ReviewSession session(tr, te, dir / "journal.jsonl", dir / "service");
    session.submit(relabel("xeno", "s0", 1, 2, "ORG"));
    session.submit(relabel("yara", "s1", 1, 2, "PER"));
    auto respan = relabel("yara", "s3", 1, 3, "PER");
    respan.action = RevisionAction::Respan;
    respan.new_start = 1;
    respan.new_end = 2;
    session.submit(respan);
    auto train_fix = relabel("rome", "s8", 1, 2, "ORG");
    train_fix.split = "train";
    session.submit(train_fix);
    RevisionDecision accept;
    accept.surface = "xeno";
    accept.sentence_id = "s1";
    accept.start = 3;
    accept.end = 4;
    accept.action = RevisionAction::AcceptGold;
    session.submit(accept);
    auto r = session.export_files();
    CHECK(r.changed_test == 3);
    CHECK(r.changed_train == 1);

    const std::string cmd = std::string(NERDIAG_CLI) + " review apply --train " + (dir / "train.conll") + " --test " +
                            (dir / "test.conll") + " --journal " + (dir / "journal.jsonl") + " --out " + (dir / "cli");
    REQUIRE(run(cmd) == 0);
    CHECK(slurp(dir / "cli/train.revised.conll") == slurp(r.train_path));
    CHECK(slurp(dir / "cli/test.revised.conll") == slurp(r.test_path));
    CHECK(slurp(r.test_path) == write_conll(apply_revisions(te, decisions_for(session.journal(), "test"), {"LOC", "ORG", "PER"})));
}

TEST_CASE("http api") {
    auto [train, test] = fixture();
    TempDir dir("review_http");
    fs::create_directories(dir / "ui");
    std::ofstream(dir / "ui/index.html") << "<html>review</html>";
    ReviewSession session(train, test, dir / "journal.jsonl", dir / "out");
    ReviewServer server(session, dir / "ui");
    const int port = server.bind(0);
    REQUIRE(port > 0);
    std::thread worker([&] { server.serve(); });

    httplib::Client client("127.0.0.1", port);
    auto list = client.Get("/api/candidates?offset=0&limit=50");
    REQUIRE(list);
    CHECK(list->status == 200);
    auto page = nlohmann::json::parse(list->body);
    CHECK(page["items"].size() == session.candidates().size());
    for (std::size_t i = 0; i < session.candidates().size(); ++i)
        CHECK(page["items"][i]["surface"] == session.candidates()[i].surface_form);

    CHECK(client.Get("/api/candidates?limit=abc")->status == 400);
    CHECK(client.Get("/api/candidate/0")->status == 200);
    CHECK(client.Get("/api/candidate/42")->status == 404);

    auto stats = nlohmann::json::parse(client.Get("/api/stats")->body);
    auto good = client.Post("/api/decision", to_json(relabel("xeno", "s0", 1, 2, "ORG")).dump(), "application/json");
    REQUIRE(good);
    CHECK(good->status == 200);
    CHECK(nlohmann::json::parse(good->body)["decided"] == stats["decided"].get<int>() + 1);
    CHECK(nlohmann::json::parse(client.Get("/api/stats")->body)["decisions"] == 1);

    auto malformed = client.Post("/api/decision", "{not json", "application/json");
    CHECK(malformed->status == 400);
    CHECK(nlohmann::json::parse(malformed->body).contains("error"));
    auto dangling = client.Post("/api/decision", to_json(relabel("xeno", "s77", 0, 1, "ORG")).dump(), "application/json");
    CHECK(dangling->status == 400);

    auto exported = client.Post("/api/export", "", "application/json");
    REQUIRE(exported);
    CHECK(exported->status == 200);
    CHECK(nlohmann::json::parse(exported->body)["changed_test_sentences"] == 1);
    CHECK(fs::exists(dir / "out/test.revised.conll"));

    auto index = client.Get("/index.html");
    REQUIRE(index);
    CHECK(index->body == "<html>review</html>");

    ReviewServer rival(session);
    CHECK_THROWS_AS(rival.bind(port), Error);

    server.stop();
    worker.join();
}

TEST_CASE("placeholder page without ui assets") {
    auto [train, test] = fixture();
    TempDir dir("review_placeholder");
    ReviewSession session(train, test, dir / "journal.jsonl", dir / "out");
    ReviewServer server(session);
    const int port = server.bind(0);
    std::thread worker([&] { server.serve(); });
    httplib::Client client("127.0.0.1", port);
    auto res = client.Get("/");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body.find("/api/") != std::string::npos);
    server.stop();
    worker.join();
}

}
