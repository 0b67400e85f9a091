#include "nerdiag/common.hpp"

#include "doctest.h"

#include <set>

using namespace nerdiag;

TEST_SUITE("common") {

TEST_CASE("rng is reproducible and seed dependent") {
    Rng a(7), b(7), c(8);
    for (int i = 0; i < 16; ++i) {
        auto x = a.next_u64();
        CHECK(x == b.next_u64());
        (void)c.next_u64();
    }
    CHECK(Rng(7).next_u64() != Rng(8).next_u64());
}

TEST_CASE("rng bounded outputs stay in range") {
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        CHECK(r.uniform_index(5) < 5);
        double u = r.uniform_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("shuffle is a permutation") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng r(11);
    r.shuffle(v);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 10);
}

TEST_CASE("sample_indices is sorted and unique") {
    auto idx = sample_indices(100, 30, 5);
    REQUIRE(idx.size() == 30);
    for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i - 1] < idx[i]);
    CHECK(idx.back() < 100);
    CHECK(sample_indices(100, 30, 5) == idx);
    CHECK(sample_indices(10, 10, 1).size() == 10);
}

TEST_CASE("string helpers") {
    CHECK(to_lower("New York") == "new york");
    CHECK(split_whitespace("  a\tb  c ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(trim("  x y \n") == "x y");
    CHECK(fnv1a("") == 14695981039346656037ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("format_double round trips") {
    CHECK(format_double(0.52) == "0.52");
    CHECK(format_double(1.0) == "1");
    double third = 1.0 / 3.0;
    CHECK(std::stod(format_double(third)) == third);
}

TEST_CASE("parse error carries the line") {
    ParseError e(4, "bad");
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()) == "line 4: bad");
}

}
