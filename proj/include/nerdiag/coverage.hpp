#pragma once

#include "nerdiag/corpus.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nerdiag {

/// Train/test label counts of one normalized surface form.
struct SurfaceStats {
    std::map<std::string, std::int64_t> train_counts;
    std::map<std::string, std::int64_t> test_counts;
    std::int64_t c_tr = 0;
    std::int64_t c_te = 0;
    double test_mention_freq = 0.0;
};

struct EntityStatsTable {
    std::map<std::string, SurfaceStats> surfaces;
    std::int64_t total_test_mentions = 0;

    const SurfaceStats* find(const std::string& surface) const;
};

struct EcrValue {
    double rho = 0.0;
    std::int64_t c_tr = 0;
    std::int64_t c_te = 0;
};

/// Test-set regions induced by the coverage ratio and train presence.
enum class Bucket { RhoOne, RhoHigh, RhoLow, ZeroCovered, Unseen };

inline constexpr std::array<Bucket, 5> kAllBuckets{Bucket::RhoOne, Bucket::RhoHigh, Bucket::RhoLow,
                                                   Bucket::ZeroCovered, Bucket::Unseen};

/// Identifier used in JSON ("RHO_ONE", ...).
std::string bucket_id(Bucket b);
/// Column label used in TSV tables ("rho=1", "(0.5,1)", ...).
std::string bucket_label(Bucket b);
Bucket parse_bucket(const std::string& id);

EntityStatsTable compute_entity_stats(const Dataset& train, const Dataset& test, const MentionOptions& options = {});

/// Coverage ratio of a surface from its counts; 0 when it never occurs in train.
EcrValue ecr(const SurfaceStats& s);
/// Coverage ratio of a test entity. Throws if `surface` never occurs in test.
EcrValue ecr(const std::string& surface, const EntityStatsTable& stats);

Bucket bucket(const EcrValue& v);

double eecr(const EntityStatsTable& stats);
double eecr(const Dataset& train, const Dataset& test, const MentionOptions& options = {});

struct Scores {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool empty() const { return tp + fp + fn == 0; }
    /// Fills precision/recall/f1 from the counts (0 for empty denominators).
    void finalize();
};

struct BreakdownReport {
    std::array<Scores, 5> buckets{};
    Scores overall;

    const Scores& at(Bucket b) const { return buckets[static_cast<std::size_t>(b)]; }
    Scores& at(Bucket b) { return buckets[static_cast<std::size_t>(b)]; }
};

/// Bucket a predicted mention is charged to when it is a false positive.
Bucket predicted_bucket(const EntityMention& predicted, const EntityStatsTable& stats);

BreakdownReport breakdown_f1(const Dataset& test, const Dataset& predictions, const EntityStatsTable& stats,
                             const MentionOptions& options = {});

nlohmann::json to_json(const BreakdownReport& r);
std::string to_tsv(const BreakdownReport& r);

struct Occurrence {
    std::string sentence_id;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string category;

    bool operator==(const Occurrence&) const = default;
};

struct ErrorCandidate {
    std::size_t id = 0;  // rank in the candidate list
    std::string surface_form;
    EcrValue rho;
    Bucket bucket = Bucket::Unseen;
    std::vector<Occurrence> occurrences;
    std::map<std::string, std::int64_t> train_counts;
    std::map<std::string, std::int64_t> test_counts;
    std::string suggested_label;
    double score = 0.0;
};

/// Test surfaces in the zero-covered and low-coverage buckets, ranked by
/// C_tr * (1 - rho) descending, ties by surface.
std::vector<ErrorCandidate> detect_annotation_candidates(const EntityStatsTable& stats, const Dataset& test,
                                                         const MentionOptions& options = {});

nlohmann::json to_json(const ErrorCandidate& c);
std::string to_jsonl(const std::vector<ErrorCandidate>& candidates);

enum class RevisionAction { AcceptGold, Relabel, Respan, Skip };

std::string to_string(RevisionAction a);
RevisionAction parse_revision_action(const std::string& s);

struct RevisionDecision {
    std::string surface;
    std::string split = "test";  // which corpus the occurrence lives in
    std::string sentence_id;
    std::size_t start = 0;
    std::size_t end = 0;
    RevisionAction action = RevisionAction::Skip;
    std::string category;  // RELABEL and RESPAN target
    std::size_t new_start = 0;
    std::size_t new_end = 0;
    std::string timestamp;
    std::string note;
};

nlohmann::json to_json(const RevisionDecision& d);
RevisionDecision decision_from_json(const nlohmann::json& j);

/// Reads a JSON Lines journal. A final line without a newline that fails to
/// parse is treated as a torn write and ignored.
std::vector<RevisionDecision> read_journal(const std::string& path);
std::vector<RevisionDecision> parse_journal(const std::string& text);

/// Decisions of `journal` whose split equals `split`.
std::vector<RevisionDecision> decisions_for(const std::vector<RevisionDecision>& journal, const std::string& split);

/// Applies relabel/respan decisions. The last decision on an occurrence wins.
/// RELABEL/RESPAN categories must be in `known_categories` (d.categories when empty).
Dataset apply_revisions(const Dataset& d, const std::vector<RevisionDecision>& journal,
                        const std::vector<std::string>& known_categories = {});

}  // namespace nerdiag
