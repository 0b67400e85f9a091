#pragma once

#include "nerdiag/corpus.hpp"
#include "nerdiag/coverage.hpp"

#include "json.hpp"

#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace nerdiag {

struct ExportResult {
    std::string train_path;
    std::string test_path;
    std::size_t changed_train = 0;  // sentences whose tags differ from the input
    std::size_t changed_test = 0;
};

/// Applies the journal to both corpora and writes "train.revised.conll" and
/// "test.revised.conll" under `dir`. Shared by the service and the offline path.
ExportResult export_revised(const Dataset& train, const Dataset& test, const std::vector<RevisionDecision>& journal,
                            const std::string& dir);

nlohmann::json to_json(const ExportResult& r);

/// Review state: corpora, ranked candidates and the decision journal.
/// Mutations are serialized; the journal on disk is the source of truth.
class ReviewSession {
public:
    ReviewSession(Dataset train, Dataset test, std::string journal_path, std::string export_dir,
                  MentionOptions options = {});

    const std::vector<ErrorCandidate>& candidates() const { return candidates_; }
    std::vector<RevisionDecision> journal() const;

    nlohmann::json stats() const;
    nlohmann::json candidate_page(std::size_t offset, std::size_t limit) const;
    /// Throws Error for an unknown id.
    nlohmann::json candidate_detail(std::size_t id) const;

    /// Validates the decision against the corpora, appends it durably to the
    /// journal and returns the updated statistics. Throws Error when invalid.
    nlohmann::json submit(RevisionDecision decision);

    /// Re-reads the journal from disk and writes the revised corpora.
    ExportResult export_files() const;

private:
    nlohmann::json stats_locked() const;
    std::string candidate_state(const ErrorCandidate& c) const;
    const Dataset& corpus(const std::string& split) const;

    Dataset train_;
    Dataset test_;
    std::string journal_path_;
    std::string export_dir_;
    MentionOptions options_;
    std::vector<std::string> known_categories_;
    std::vector<ErrorCandidate> candidates_;
    std::vector<RevisionDecision> journal_;
    mutable std::mutex mutex_;
};

/// HTTP front end of a session. Binds to loopback by default.
class ReviewServer {
public:
    ReviewServer(ReviewSession& session, std::string ui_dir = {});
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    /// Binds the socket; port 0 picks a free port. Throws Error when the port is taken.
    int bind(int port, const std::string& host = "127.0.0.1");
    /// Serves until stop() is called. Requires a successful bind().
    void serve();
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = -1;
};

}  // namespace nerdiag
