#include <doctest.h>

#include <atomic>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "pedsafe/common.hpp"
#include "pedsafe/csv.hpp"

using namespace pedsafe;

TEST_CASE("rng streams are reproducible and label-separated") {
    Rng a(42, "split"), b(42, "split"), c(42, "smote"), d(42, "split", 1);
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
    CHECK(x != d.next_u64());
}

TEST_CASE("rng below stays in range and hits every value") {
    Rng r(1);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = r.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("parallel_for output does not depend on worker count") {
    std::vector<double> one(1000), many(1000);
    parallel_for(one.size(), 1, [&](std::size_t i) { one[i] = Rng(9, "x", i).uniform(); });
    parallel_for(many.size(), 8, [&](std::size_t i) { many[i] = Rng(9, "x", i).uniform(); });
    CHECK(one == many);
}

TEST_CASE("parallel_for rethrows worker exceptions") {
    CHECK_THROWS_AS(parallel_for(100, 4,
                                 [](std::size_t i) {
                                     if (i == 37) throw ModelError("boom");
                                 }),
                    ModelError);
}

TEST_CASE("format_double round-trips") {
    Rng r(3);
    for (int i = 0; i < 500; ++i) {
        const double v = (r.uniform() - 0.5) * std::pow(10.0, static_cast<double>(r.below(20)) - 10.0);
        const auto s = format_double(v);
        double back = 0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        REQUIRE(back == v);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("checksum sees a single changed value") {
    std::vector<double> v{1.0, 2.0, 3.0};
    const auto h = checksum(v);
    v[1] = 2.0000000001;
    CHECK(h != checksum(v));
}

TEST_CASE("sigmoid is symmetric") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(3.0) + sigmoid(-3.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("csv reader handles quotes, CRLF and a BOM") {
    std::istringstream in("\xEF\xBB\xBF" "a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n\r\n2,\"multi\nline\"\n");
    const auto t = csv::read(in);
    REQUIRE(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][0] == "x,1");
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.rows[1][1] == "multi\nline");
    CHECK(t.column("b") == 1);
    CHECK(t.column("zz") == -1);
}

TEST_CASE("csv writer output reads back unchanged") {
    const std::vector<std::vector<std::string>> rows{{"h1", "h2"}, {"plain", "with,comma"}, {"q\"uote", ""}};
    std::ostringstream out;
    for (const auto& r : rows) csv::write_row(out, r);
    std::istringstream in(out.str());
    const auto t = csv::read(in);
    CHECK(t.header == rows[0]);
    CHECK(t.rows[0] == rows[1]);
    CHECK(t.rows[1] == rows[2]);
}

TEST_CASE("csv rejects an unterminated quote") {
    std::istringstream in("a\n\"open\n");
    CHECK_THROWS_AS(csv::read(in), Error);
}
