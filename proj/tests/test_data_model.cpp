#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "stratx/csv.hpp"
#include "stratx/errors.hpp"
#include "stratx/rng.hpp"
#include "stratx/types.hpp"

using namespace stratx;

namespace {

ExperimentData two_block_data() {
    ExperimentData d;
    d.blocks.block_of = {0, 0, 0, 0, 1, 1, 1, 1};
    d.blocks.sizes = {4, 4};
    d.blocks.treated = {2, 2};
    d.X.resize(8, 2);
    d.X << 0.3, 1.2, -0.7, 0.4, 1.5, -0.2, 0.9, 2.2, -1.1, 0.5, 0.2, -0.8, 1.9, 0.1, -0.4, 1.3;
    d.Z.resize(8);
    d.Z << 1, 1, 0, 0, 1, 0, 1, 0;
    d.Y.resize(8);
    d.Y << 1.0, 2.0, 0.5, 1.5, 3.0, 2.5, 4.0, 3.5;
    return d;
}

}  // namespace

TEST_CASE("validate accepts a clean two-block dataset") {
    const auto rep = validate(two_block_data());
    CHECK(rep.ok());
    CHECK(rep.drop_x.empty());
}

TEST_CASE("validate is pure and deterministic") {
    const auto d = two_block_data();
    const auto r1 = validate(d);
    const auto r2 = validate(d);
    CHECK(r1.violations == r2.violations);
    CHECK(r1.drop_x == r2.drop_x);
}

TEST_CASE("validate flags a block-indicator column") {
    auto d = two_block_data();
    for (int i = 0; i < 8; ++i) d.X(i, 1) = d.blocks.block_of[static_cast<std::size_t>(i)] == 0 ? 1.0 : 0.0;
    const auto rep = validate(d);
    CHECK(!rep.ok());
    REQUIRE(rep.drop_x.size() == 1);
    CHECK(rep.drop_x[0] == 1);

    const auto cleaned = drop_columns(d, rep);
    CHECK(cleaned.p() == 1);
    CHECK(validate(cleaned).ok());
}

TEST_CASE("validate flags an under-treated block") {
    auto d = two_block_data();
    d.blocks.treated = {1, 2};
    d.Z << 1, 0, 0, 0, 1, 0, 1, 0;
    const auto rep = validate(d);
    CHECK(!rep.ok());
    bool found = false;
    for (const auto& v : rep.violations)
        found = found || v.find("fewer than 2 treated units in block 1") != std::string::npos;
    CHECK(found);
}

TEST_CASE("validate flags non-finite entries and count mismatches") {
    auto d = two_block_data();
    d.Y(3) = std::numeric_limits<double>::quiet_NaN();
    CHECK(!validate(d).ok());

    auto d2 = two_block_data();
    d2.Z << 1, 1, 1, 0, 1, 0, 1, 0;  // block 1 now has 3 treated
    CHECK(!validate(d2).ok());
}

TEST_CASE("ingest_csv parses roles and re-indexes blocks") {
    const std::string text =
        "b,z,y,x1,x2,x3\n"
        "a,1,1.5,0.1,0.2,0.3\n"
        "a,0,2.5,0.4,0.5,0.6\n"
        "a,1,0.5,0.7,0.8,0.9\n"
        "a,0,1.0,1.0,1.1,1.2\n"
        "b,1,2.0,1.3,1.4,1.5\n"
        "b,0,2.2,1.6,1.7,1.8\n"
        "b,1,2.4,1.9,2.0,2.1\n"
        "b,0,2.6,2.2,2.3,2.4\n";
    std::istringstream in(text);
    CsvSchema schema;
    schema.block = "b";
    schema.assignment = "z";
    schema.outcome = "y";
    schema.covariates = {"x1", "x2", "x3"};
    const auto data = ingest_csv(read_csv(in), schema);
    CHECK(data.n() == 8);
    CHECK(data.p() == 3);
    CHECK(data.blocks.num_blocks() == 2);
    CHECK(data.blocks.block_of[0] == 0);  // "a" -> 1 (first appearance)
    CHECK(data.blocks.block_of[4] == 1);  // "b" -> 2
    CHECK(data.blocks.treated == std::vector<int>{2, 2});
    CHECK(data.Y(1) == 2.5);
}

TEST_CASE("ingest_csv reports NA cells with location") {
    const std::string text = "b,z,y\n1,1,2.0\n1,0,NA\n";
    std::istringstream in(text);
    CsvSchema schema;
    schema.block = "b";
    schema.assignment = "z";
    schema.outcome = "y";
    try {
        ingest_csv(read_csv(in), schema);
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(e.row == 3);
        CHECK(e.col == 3);
    }
}

TEST_CASE("ingest_csv errors: missing column, ragged row") {
    {
        std::istringstream in("b,z\n1,1\n");
        CsvSchema schema;
        schema.block = "b";
        schema.outcome = "y";
        CHECK_THROWS_AS(ingest_csv(read_csv(in), schema), CsvError);
    }
    {
        std::istringstream in("b,z,y\n1,1,2.0\n1,0\n");
        CHECK_THROWS_AS(read_csv(in), CsvError);
    }
}

TEST_CASE("csv round trip is bit-exact") {
    Rng rng(7, 0);
    ExperimentData d;
    const int n = 12;
    d.blocks.block_of.assign(static_cast<std::size_t>(n), 0);
    for (int i = 6; i < n; ++i) d.blocks.block_of[static_cast<std::size_t>(i)] = 1;
    d.blocks.sizes = {6, 6};
    d.blocks.treated = {3, 3};
    d.X.resize(n, 3);
    d.W.resize(n, 1);
    d.Y.resize(n);
    d.Z.resize(n);
    for (int i = 0; i < n; ++i) {
        d.Z(i) = i % 2;
        d.Y(i) = rng.standard_normal() * 1e3;
        d.W(i, 0) = rng.standard_normal() * 1e-7;
        for (int j = 0; j < 3; ++j) d.X(i, j) = rng.standard_normal();
    }
    const std::string text = emit_csv_string(d);
    std::istringstream in(text);
    const auto back = ingest_csv(read_csv(in), canonical_schema(d));
    CHECK(back.n() == d.n());
    CHECK(back.blocks.block_of == d.blocks.block_of);
    CHECK((back.Z - d.Z).cwiseAbs().maxCoeff() == 0);
    for (int i = 0; i < n; ++i) {
        CHECK(back.Y(i) == d.Y(i));
        CHECK(back.W(i, 0) == d.W(i, 0));
        for (int j = 0; j < 3; ++j) CHECK(back.X(i, j) == d.X(i, j));
    }
}

TEST_CASE("rfc4180 quoting") {
    std::istringstream in("a,b\n\"1,5\",\"say \"\"hi\"\"\"\n");
    const auto t = read_csv(in);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "1,5");
    CHECK(t.rows[0][1] == "say \"hi\"");
}
