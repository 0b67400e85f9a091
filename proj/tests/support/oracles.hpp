#pragma once

// Deliberately naive reference implementations. They share no code with the
// library beyond the data types, the tagger's dense gradient and the
// embedding provider.

#include "nerdiag/context.hpp"
#include "nerdiag/corpus.hpp"
#include "nerdiag/tagger.hpp"

#include <optional>
#include <string>
#include <vector>

namespace nerdiag::oracle {

struct Mention {
    std::size_t sentence = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string category;
    std::string surface;
};

/// Left-to-right IOB2 scan.
std::vector<Mention> mentions(const Dataset& d, bool lowercase = true);

double ecr(const Dataset& train, const Dataset& test, const std::string& surface);
/// Mean over test mentions of the coverage ratio of their surface.
double eecr(const Dataset& train, const Dataset& test);

double ccr_category(const Dataset& train, const Dataset& test, const std::string& category,
                    const EmbeddingProvider& e, std::size_t window = 3, std::size_t bigrams = 30,
                    std::size_t trigrams = 20);

struct Ccr {
    double raw = 0.0;
    double normalized = 0.0;
};
Ccr ccr(const Dataset& train, const Dataset& test, const EmbeddingProvider& e);

/// Class-level consistency over all validation mentions (no subsampling),
/// from dense gradients. Row-major over `categories`.
std::vector<std::optional<double>> delta(const TaggerModel& model, const Dataset& val,
                                         const std::vector<std::string>& categories);

struct Errors {
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::vector<double> values;
};
Errors error_matrix(const Dataset& gold, const Dataset& predicted);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace nerdiag::oracle
