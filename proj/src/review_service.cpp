#include "nerdiag/review_service.hpp"

#include "nerdiag/common.hpp"

#include "httplib.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace nerdiag {

namespace {

std::size_t changed_sentences(const Dataset& before, const Dataset& after) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < before.sentences.size(); ++i) n += before.sentences[i] != after.sentences[i];
    return n;
}

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Drops a torn final line left by an interrupted write so appends stay parseable.
void drop_torn_tail(const std::string& path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return;
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (text.empty() || text.back() == '\n') return;
    auto cut = text.rfind('\n');
    std::filesystem::resize_file(path, cut == std::string::npos ? 0 : cut + 1);
}

void append_durably(const std::string& path, const std::string& line) {
    int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw Error("cannot open journal " + path + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < line.size()) {
        ssize_t n = ::write(fd, line.data() + done, line.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            int err = errno;
            ::close(fd);
            throw Error("journal write failed: " + std::string(std::strerror(err)));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        int err = errno;
        ::close(fd);
        throw Error("journal fsync failed: " + std::string(std::strerror(err)));
    }
    ::close(fd);
}

nlohmann::json candidate_summary(const ErrorCandidate& c, const std::string& state) {
    return {{"id", c.id},
            {"surface", c.surface_form},
            {"rho", c.rho.rho},
            {"bucket", bucket_id(c.bucket)},
            {"score", c.score},
            {"suggested_label", c.suggested_label},
            {"occurrences", c.occurrences.size()},
            {"state", state}};
}

}  // namespace

ExportResult export_revised(const Dataset& train, const Dataset& test, const std::vector<RevisionDecision>& journal,
                            const std::string& dir) {
    std::vector<std::string> known = train.categories;
    for (const auto& c : test.categories)
        if (std::find(known.begin(), known.end(), c) == known.end()) known.push_back(c);
    std::sort(known.begin(), known.end());
    auto revised_train = apply_revisions(train, decisions_for(journal, "train"), known);
    auto revised_test = apply_revisions(test, decisions_for(journal, "test"), known);
    std::filesystem::create_directories(dir);
    ExportResult r;
    r.train_path = (std::filesystem::path(dir) / "train.revised.conll").string();
    r.test_path = (std::filesystem::path(dir) / "test.revised.conll").string();
    save_conll(r.train_path, revised_train);
    save_conll(r.test_path, revised_test);
    r.changed_train = changed_sentences(train, revised_train);
    r.changed_test = changed_sentences(test, revised_test);
    return r;
}

nlohmann::json to_json(const ExportResult& r) {
    return {{"train_path", r.train_path},
            {"test_path", r.test_path},
            {"changed_train_sentences", r.changed_train},
            {"changed_test_sentences", r.changed_test}};
}

ReviewSession::ReviewSession(Dataset train, Dataset test, std::string journal_path, std::string export_dir,
                             MentionOptions options)
    : train_(std::move(train)),
      test_(std::move(test)),
      journal_path_(std::move(journal_path)),
      export_dir_(std::move(export_dir)),
      options_(options) {
    known_categories_ = train_.categories;
    for (const auto& c : test_.categories)
        if (std::find(known_categories_.begin(), known_categories_.end(), c) == known_categories_.end())
            known_categories_.push_back(c);
    std::sort(known_categories_.begin(), known_categories_.end());
    candidates_ = detect_annotation_candidates(compute_entity_stats(train_, test_, options_), test_, options_);
    drop_torn_tail(journal_path_);
    journal_ = read_journal(journal_path_);
    // A replayed journal must still apply cleanly.
    apply_revisions(train_, decisions_for(journal_, "train"), known_categories_);
    apply_revisions(test_, decisions_for(journal_, "test"), known_categories_);
}

std::vector<RevisionDecision> ReviewSession::journal() const {
    std::lock_guard lock(mutex_);
    return journal_;
}

const Dataset& ReviewSession::corpus(const std::string& split) const {
    if (split == "train") return train_;
    if (split == "test") return test_;
    throw Error("split must be train or test, got '" + split + "'");
}

std::string ReviewSession::candidate_state(const ErrorCandidate& c) const {
    for (auto it = journal_.rbegin(); it != journal_.rend(); ++it) {
        if (it->surface != c.surface_form) continue;
        return it->action == RevisionAction::Skip ? "skipped" : "decided";
    }
    return "undecided";
}

nlohmann::json ReviewSession::stats_locked() const {
    nlohmann::json buckets = nlohmann::json::object();
    for (Bucket b : kAllBuckets) buckets[bucket_id(b)] = 0;
    std::size_t decided = 0, skipped = 0;
    for (const auto& c : candidates_) {
        buckets[bucket_id(c.bucket)] = buckets[bucket_id(c.bucket)].get<std::size_t>() + 1;
        auto state = candidate_state(c);
        decided += state == "decided";
        skipped += state == "skipped";
    }
    nlohmann::json test_buckets = nlohmann::json::object();
    for (Bucket b : kAllBuckets) test_buckets[bucket_id(b)] = 0;
    auto table = compute_entity_stats(train_, test_, options_);
    for (const auto& [surface, s] : table.surfaces) {
        if (s.c_te == 0) continue;
        auto id = bucket_id(bucket(ecr(s)));
        test_buckets[id] = test_buckets[id].get<std::int64_t>() + s.c_te;
    }
    return {{"candidates", candidates_.size()},
            {"decided", decided},
            {"skipped", skipped},
            {"undecided", candidates_.size() - decided - skipped},
            {"decisions", journal_.size()},
            {"buckets", buckets},
            {"test_mentions_by_bucket", test_buckets},
            {"categories", known_categories_}};
}

nlohmann::json ReviewSession::stats() const {
    std::lock_guard lock(mutex_);
    return stats_locked();
}

nlohmann::json ReviewSession::candidate_page(std::size_t offset, std::size_t limit) const {
    std::lock_guard lock(mutex_);
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = offset; i < candidates_.size() && i - offset < limit; ++i)
        items.push_back(candidate_summary(candidates_[i], candidate_state(candidates_[i])));
    return {{"total", candidates_.size()}, {"offset", offset}, {"limit", limit}, {"items", items}};
}

nlohmann::json ReviewSession::candidate_detail(std::size_t id) const {
    std::lock_guard lock(mutex_);
    if (id >= candidates_.size()) throw Error("no candidate with id " + std::to_string(id));
    const auto& c = candidates_[id];
    auto j = to_json(c);
    j["state"] = candidate_state(c);
    std::map<std::string, const Sentence*> by_id;
    for (const auto& s : test_.sentences) by_id[s.id] = &s;
    for (auto& occ : j["occurrences"]) {
        const Sentence& s = *by_id.at(occ["sentence_id"].get<std::string>());
        nlohmann::json tokens = nlohmann::json::array();
        for (const auto& t : s.tokens) tokens.push_back({{"surface", t.surface}, {"tag", t.gold_tag}});
        occ["tokens"] = tokens;
        occ["decision"] = nullptr;
        for (auto it = journal_.rbegin(); it != journal_.rend(); ++it) {
            if (it->split == "test" && it->sentence_id == s.id && it->start == occ["start"].get<std::size_t>() &&
                it->end == occ["end"].get<std::size_t>()) {
                occ["decision"] = to_json(*it);
                break;
            }
        }
    }
    j["categories"] = known_categories_;
    return j;
}

nlohmann::json ReviewSession::submit(RevisionDecision decision) {
    std::lock_guard lock(mutex_);
    const Dataset& target = corpus(decision.split);
    if (decision.timestamp.empty()) decision.timestamp = utc_now();
    auto trial = decisions_for(journal_, decision.split);
    trial.push_back(decision);
    apply_revisions(target, trial, known_categories_);
    append_durably(journal_path_, to_json(decision).dump() + "\n");
    journal_.push_back(std::move(decision));
    return stats_locked();
}

ExportResult ReviewSession::export_files() const {
    std::lock_guard lock(mutex_);
    return export_revised(train_, test_, read_journal(journal_path_), export_dir_);
}

struct ReviewServer::Impl {
    httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::size_t query_size(const httplib::Request& req, const std::string& key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    auto v = req.get_param_value(key);
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw Error(key + " must be a non-negative integer");
    return out;
}

const char* kPlaceholder =
    "<!doctype html><html><head><title>nerdiag review</title></head><body>"
    "<p>Review UI assets are not installed. The JSON API is available under /api/.</p></body></html>";

}  // namespace

ReviewServer::ReviewServer(ReviewSession& session, std::string ui_dir) : impl_(std::make_unique<Impl>()) {
    auto& svr = impl_->server;
    // The library default adds SO_REUSEPORT, which would let a second
    // instance share the port instead of failing to start.
    svr.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    svr.Get("/api/candidates", [&session](const httplib::Request& req, httplib::Response& res) {
        try {
            reply(res, 200, session.candidate_page(query_size(req, "offset", 0), query_size(req, "limit", 50)));
        } catch (const Error& e) {
            reply(res, 400, {{"error", e.what()}});
        }
    });
    svr.Get(R"(/api/candidate/(\d+))", [&session](const httplib::Request& req, httplib::Response& res) {
        try {
            reply(res, 200, session.candidate_detail(std::stoul(req.matches[1].str())));
        } catch (const std::exception& e) {
            reply(res, 404, {{"error", e.what()}});
        }
    });
    svr.Post("/api/decision", [&session](const httplib::Request& req, httplib::Response& res) {
        RevisionDecision d;
        try {
            d = decision_from_json(nlohmann::json::parse(req.body));
        } catch (const std::exception& e) {
            reply(res, 400, {{"error", std::string("malformed decision: ") + e.what()}});
            return;
        }
        try {
            reply(res, 200, session.submit(std::move(d)));
        } catch (const Error& e) {
            reply(res, 400, {{"error", e.what()}});
        }
    });
    svr.Get("/api/stats", [&session](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, session.stats());
    });
    svr.Post("/api/export", [&session](const httplib::Request&, httplib::Response& res) {
        try {
            reply(res, 200, to_json(session.export_files()));
        } catch (const std::exception& e) {
            reply(res, 500, {{"error", e.what()}});
        }
    });
    std::error_code ec;
    if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir, ec)) {
        svr.set_mount_point("/", ui_dir);
    } else {
        svr.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholder, "text/html"); });
    }
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind(int port, const std::string& host) {
    auto& svr = impl_->server;
    if (port == 0) {
        port_ = svr.bind_to_any_port(host);
        if (port_ < 0) throw Error("cannot bind to " + host);
    } else {
        if (!svr.bind_to_port(host, port)) throw Error("cannot bind to " + host + ":" + std::to_string(port) + " (port busy?)");
        port_ = port;
    }
    return port_;
}

void ReviewServer::serve() {
    if (port_ < 0) throw Error("serve() called before bind()");
    impl_->server.listen_after_bind();
}

void ReviewServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace nerdiag
