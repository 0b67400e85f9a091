#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nerdiag {

enum class TagScheme { IOB1, IOB2, BIOES };

std::string to_string(TagScheme scheme);
TagScheme parse_tag_scheme(std::string_view name);

struct Token {
    std::string surface;
    std::string gold_tag;

    bool operator==(const Token&) const = default;
};

struct Sentence {
    std::string id;
    std::vector<Token> tokens;

    std::size_t size() const { return tokens.size(); }
    bool operator==(const Sentence&) const = default;
};

/// A tokenized corpus in canonical IOB2 form. `categories` is kept sorted and
/// equals the set of categories present in the tags.
struct Dataset {
    std::string name;
    std::vector<Sentence> sentences;
    TagScheme scheme = TagScheme::IOB2;
    std::vector<std::string> categories;

    bool operator==(const Dataset&) const = default;
};

struct EntityMention {
    std::string sentence_id;
    std::size_t sentence_index = 0;
    std::size_t start = 0;  // inclusive token index
    std::size_t end = 0;    // exclusive token index
    std::string category;
    std::string surface_form;

    bool operator==(const EntityMention&) const = default;
};

/// Source category -> target category, or nullopt to drop the mention.
struct CategoryMap {
    std::map<std::string, std::optional<std::string>> mapping;

    static CategoryMap identity(const std::vector<std::string>& categories);
    static CategoryMap from_json(std::string_view text);
    static CategoryMap load(const std::string& path);
};

struct ConllOptions {
    std::string name;
    /// Column holding the tag; negative counts from the end (-1 is the last column).
    int tag_column = -1;
    TagScheme scheme = TagScheme::IOB2;
    /// Strict mode rejects tag sequences that violate the scheme; lenient mode repairs them.
    bool strict = true;
};

struct MentionOptions {
    bool lowercase = true;
};

// Tag helpers. A tag is "O" or "<prefix>-<category>".
bool is_outside(std::string_view tag);
char tag_prefix(std::string_view tag);
std::string tag_category(std::string_view tag);

/// Rewrites orphan I-X tags (not continuing an X entity) as B-X.
std::vector<std::string> repair_iob2(const std::vector<std::string>& tags);
bool is_valid_iob2(const std::vector<std::string>& tags);

Dataset parse_conll(std::istream& in, const ConllOptions& options = {});
Dataset parse_conll(std::string_view text, const ConllOptions& options = {});
Dataset load_conll(const std::string& path, ConllOptions options = {});

/// Canonical serialization: "surface tag" per line, blank line after each
/// sentence. Ids that differ from the positional default "s<index>" are kept
/// in a "# id = <id>" line so that parsing restores them.
std::string write_conll(const Dataset& d);
void write_conll(std::ostream& out, const Dataset& d);
void save_conll(const std::string& path, const Dataset& d);

/// Three-column output "surface gold predicted" for aligned datasets.
std::string write_conll_predictions(const Dataset& gold, const Dataset& predicted);

std::string positional_sentence_id(std::size_t index);

std::string normalize_surface(const Sentence& s, std::size_t start, std::size_t end, bool lowercase = true);

std::vector<EntityMention> extract_mentions(const Sentence& s, std::size_t sentence_index,
                                            const MentionOptions& options = {});
std::vector<EntityMention> extract_mentions(const Dataset& d, const MentionOptions& options = {});

/// Overwrites the sentence's tags with O plus the given spans (all must lie in `s`).
void retag(Sentence& s, const std::vector<EntityMention>& mentions);

/// Recomputes `d.categories` from the tags.
void refresh_categories(Dataset& d);

Dataset collapse_labels(const Dataset& d, const CategoryMap& map);

/// Uniform sample of `n` sentences without replacement, original order kept.
Dataset sample_sentences(const Dataset& d, std::size_t n, std::uint64_t seed);

/// Seeded split into (train, test); `train_fraction` of the sentences go to train.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed);

/// Concatenates datasets; sentence ids are prefixed with each part's name.
Dataset concatenate(const std::vector<const Dataset*>& parts, std::string name);

/// Throws unless `b` has the same sentences and token surfaces as `a`.
void check_aligned(const Dataset& a, const Dataset& b);

std::size_t count_tokens(const Dataset& d);

}  // namespace nerdiag
