#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nerdiag {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an input file does not follow the expected format.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Seeded generator with a platform-independent output sequence.
///
/// The standard distributions are implementation-defined, so bounded
/// integers and unit reals are derived from the raw engine output here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t uniform_index(std::uint64_t bound);

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform_unit();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_unit(); }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// Sorted indices of a uniform sample of `count` items out of `population`.
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t seed);

std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view line);
std::string_view trim(std::string_view s);

/// 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 14695981039346656037ULL);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace nerdiag
