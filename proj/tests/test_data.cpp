#include "doctest.h"

#include <cmath>
#include <set>

#include "stratrob/data.hpp"
#include "stratrob/error.hpp"
#include "support.hpp"

using namespace stratrob;
using namespace stratrob::data;

namespace {

double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

TEST_CASE("class means in the exact regime") {
    SynthParams p;
    p.intra_sep = 1.5;
    p.inter_sep = 5.0;
    const auto m = class_means(p);
    REQUIRE(m.size() == 6);
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = a + 1; b < 6; ++b) {
            CHECK(m[a].size() == 5);
            const double want = p.partition.same_group(a, b) ? 1.5 : 5.0;
            CHECK(dist(m[a], m[b]) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("class means in the compact regime") {
    SynthParams p;
    p.K = 10;
    p.d = 6;
    p.partition = utility::SemanticPartition({0, 0, 0, 0, 1, 1, 1, 1, 1, 1});
    p.intra_sep = 0.5;
    p.inter_sep = 8.0;
    const auto m = class_means(p);
    for (std::size_t a = 0; a < 10; ++a)
        for (std::size_t b = a + 1; b < 10; ++b) {
            if (p.partition.same_group(a, b)) CHECK(dist(m[a], m[b]) == doctest::Approx(0.5).epsilon(1e-12));
            else CHECK(dist(m[a], m[b]) > 7.0);
        }
    p.d = 3;
    CHECK_THROWS_AS(class_means(p), ConfigError);
}

TEST_CASE("generator output") {
    SynthParams p;
    p.n_per_class = 30;
    p.seed = 5;
    const auto ds = synth_gaussian_groups(p);
    CHECK(ds.size() == 180);
    CHECK(ds.class_counts() == std::vector<std::size_t>(6, 30));
    CHECK(ds.partition == p.partition);
    CHECK(synth_gaussian_groups(p) == ds);
    p.seed = 6;
    CHECK_FALSE(synth_gaussian_groups(p) == ds);

    p.noise_sd = 0.0;
    const auto exact = synth_gaussian_groups(p);
    const auto means = class_means(p);
    for (std::size_t i = 0; i < exact.size(); ++i) {
        const auto x = exact.x(i);
        CHECK(std::vector<double>(x.begin(), x.end()) == means[exact.y(i)]);
    }
}

TEST_CASE("csv round trip") {
    SynthParams p;
    p.n_per_class = 5;
    const auto ds = synth_gaussian_groups(p);
    auto back = parse_csv(to_csv(ds), 6);
    back.partition = ds.partition;
    CHECK(back == ds);

    const auto dir = testsupport::temp_dir("csv");
    save_csv(ds, (dir / "d.csv").string());
    auto loaded = load_csv((dir / "d.csv").string());
    CHECK(loaded.features == ds.features);
    CHECK(loaded.K == 6);
}

TEST_CASE("csv errors carry line numbers") {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_csv(text, 3);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("f0,f1,label\n1,2,0\n1,x,1\n") == 3);
    CHECK(line_of("f0,f1,label\n1,2,0\n1,2\n") == 3);
    CHECK(line_of("f0,f1,label\n1,2,3\n") == 2);
    CHECK(line_of("a,b,label\n1,2,0\n") == 1);
    CHECK(line_of("f0,f1,label\n1,2,-1\n") == 2);
    CHECK_THROWS_AS(parse_csv("f0,label\n"), DataError);
}

TEST_CASE("stratified split") {
    SynthParams p;
    p.n_per_class = 21;
    const auto ds = synth_gaussian_groups(p);
    const auto s = train_test_split(ds, 0.3, 4);
    CHECK(s.test.class_counts() == std::vector<std::size_t>(6, 6));
    CHECK(s.train.class_counts() == std::vector<std::size_t>(6, 15));
    CHECK(s.train.partition == ds.partition);
    const auto s2 = train_test_split(ds, 0.3, 4);
    CHECK(s2.test == s.test);

    std::multiset<std::vector<double>> all, parts;
    for (std::size_t i = 0; i < ds.size(); ++i) all.insert({ds.x(i).begin(), ds.x(i).end()});
    for (const auto* part : {&s.train, &s.test})
        for (std::size_t i = 0; i < part->size(); ++i) parts.insert({part->x(i).begin(), part->x(i).end()});
    CHECK(all == parts);
    CHECK_THROWS_AS(train_test_split(ds, 1.0, 1), ConfigError);
}

TEST_CASE("batches cover every index once") {
    const auto batches = batch_iter(50, 16, 3);
    CHECK(batches.size() == 4);
    CHECK(batches.back().size() == 2);
    std::set<std::size_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 50);
    CHECK(batch_iter(50, 16, 3) == batches);
    CHECK_FALSE(batch_iter(50, 16, 4) == batches);
}

TEST_CASE("dataset validation") {
    Dataset ds;
    ds.d = 2;
    ds.K = 2;
    ds.add(std::vector<double>{1.0, 2.0}, 1);
    CHECK_NOTHROW(ds.validate());
    CHECK_THROWS_AS(ds.add(std::vector<double>{1.0}, 0), DataError);
    ds.labels[0] = 2;
    CHECK_THROWS_AS(ds.validate(), DataError);
}
