#include <doctest.h>

#include "ttx/models.hpp"
#include "ttx/ttcross.hpp"

using namespace ttx;

namespace {

GridConfig uniform(std::vector<Index> sizes, std::vector<int> procs) {
    return GridConfig{std::move(sizes), procs, procs};
}

std::vector<MultiIndex> all_indices(const DimSpec& dims) {
    std::vector<MultiIndex> out;
    for (Index f = 0; f < dims.total(); ++f)
        out.push_back(delinearize(f, dims));
    return out;
}

MultiIndex concat(const MultiIndex& a, Index i, const MultiIndex& b) {
    MultiIndex out = a;
    out.push_back(i);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace

TEST_CASE("nestedness checker") {
    PivotSets p;
    p.i_le = {{{1}, {2}}, {{1, 0}, {2, 3}}};
    p.j_gt = {{{0, 4}, {3, 1}}, {{4}, {1}}};
    CHECK(nestedness_violation(p).empty());
    CHECK(p.ranks() == std::vector<Index>{2, 2});
    p.i_le[1][1] = {5, 3};
    CHECK_FALSE(nestedness_violation(p).empty());
    p.i_le[1][1] = {2, 3};
    p.j_gt[0][0] = {0, 7};
    CHECK_FALSE(nestedness_violation(p).empty());
}

TEST_CASE("TT cores layout and evaluation") {
    TTCores ones({3, 4, 5}, {1, 1, 1, 1});
    for (int k = 0; k < 3; ++k)
        for (auto& v : ones.raw(k))
            v = 1.0;
    CHECK(tt_eval(ones, MultiIndex{2, 3, 4}) == 1.0);
    CHECK_THROWS_AS(tt_eval(ones, MultiIndex{0, 0}), StructureError);
    CHECK_THROWS_AS(tt_eval(ones, MultiIndex{3, 0, 0}), BoundsError);
    CHECK_THROWS_AS(TTCores({3, 4}, {2, 1, 1}), StructureError);
    CHECK_THROWS_AS(TTCores({3, 4}, {1, 1}), StructureError);

    TTCores t({2, 3}, {1, 2, 1});
    t.at(0, 0, 1, 0) = 2.0;
    t.at(0, 0, 1, 1) = 3.0;
    t.at(1, 0, 2, 0) = 5.0;
    t.at(1, 1, 2, 0) = 7.0;
    CHECK(t.raw(0)[0 + 1 * (1 + 2 * 1)] == 3.0); // a + s0 (i + n b)
    CHECK(t.raw(1)[1 + 2 * (2 + 3 * 0)] == 7.0);
    CHECK(tt_eval(t, MultiIndex{1, 2}) == 2.0 * 5.0 + 3.0 * 7.0);
}

TEST_CASE("rank schedule") {
    const Index a[] = {10, 5, 20};
    const auto s = rank_schedule(a);
    CHECK(s.front() == std::vector<Index>{2, 2, 2});
    CHECK(s[3] == std::vector<Index>{5, 5, 5});
    CHECK(s[4] == std::vector<Index>{6, 5, 6});
    CHECK(s.back() == std::vector<Index>{10, 5, 20});
    const Index b[] = {2, 2};
    CHECK(rank_schedule(b) == std::vector<std::vector<Index>>{{2, 2}});
    const Index c[] = {3, 2};
    CHECK(rank_schedule(c) == std::vector<std::vector<Index>>{{2, 2}, {3, 2}});
    const Index d[] = {1, 4};
    CHECK(rank_schedule(d).front() == std::vector<Index>{1, 2});
}

TEST_CASE("SplitMix64 reference stream") {
    SplitMix64 g(0);
    CHECK(g.next() == 0xE220A8397B1DCDAFULL);
    CHECK(g.next() == 0x6E789E6AA1B965F4ULL);
    SplitMix64 h(42);
    for (int i = 0; i < 1000; ++i) {
        const Index v = h.below(7);
        CHECK(v >= 0);
        CHECK(v < 7);
    }
}

TEST_CASE("rank-1 tensor: one pivot per dimension, exact cores") {
    const DimSpec dims({2, 2, 2});
    auto oracle = models::make_rank_one(dims);
    DecomposeOptions opt;
    opt.ranks = {1, 1};
    const auto r = decompose(*oracle, uniform({2, 2, 2}, {1, 1, 1}), opt);
    CHECK(r.cores.ranks() == std::vector<Index>{1, 1, 1, 1});
    for (const auto& idx : all_indices(dims))
        CHECK(std::abs(tt_eval(r.cores, idx) - oracle->peek(idx)) <= 1e-14 * oracle->peek(idx));
    CHECK(sampled_error(*oracle, r.cores, 100, 1) <= 1e-13);
    CHECK(sampled_error(*oracle, r.cores, 1, 9) <= 1e-13);
}

TEST_CASE("requested rank above the attainable rank caps with a warning") {
    const DimSpec dims({6, 5, 4});
    auto oracle = models::make_rank_one(dims);
    DecomposeOptions opt;
    opt.ranks = {3, 3};
    const auto r = decompose(*oracle, uniform({6, 5, 4}, {2, 1, 2}), opt);
    CHECK(r.cores.ranks() == std::vector<Index>{1, 1, 1, 1});
    CHECK(r.selection.warnings.size() == 2);
    CHECK(sampled_error(*oracle, r.cores, 200, 3) <= 1e-13);
}

TEST_CASE("sampled error needs a nonzero reference") {
    const DimSpec dims({3, 3});
    ElementOracle zero(dims, [](std::span<const Index>) { return 0.0; });
    TTCores t({3, 3}, {1, 1, 1});
    CHECK_THROWS_AS(sampled_error(zero, t, 10, 1), UndefinedMetricError);
}

TEST_CASE("access fraction") {
    const DimSpec dims({4, 3});
    auto oracle = models::make_hilbert(dims);
    for (const auto& idx : all_indices(dims))
        (*oracle)(idx);
    CHECK(access_fraction(*oracle) == 1.0);
}

TEST_CASE("Hilbert n=40: shapes, interpolation, G_d raw data, distributed equals serial") {
    const DimSpec dims({40, 40, 40});
    DecomposeOptions opt;
    opt.ranks = {5, 5};
    auto serial_oracle = models::make_hilbert(dims);
    const auto serial = decompose(*serial_oracle, uniform({40, 40, 40}, {1, 1, 1}), opt);
    const auto& c = serial.cores;
    CHECK(c.ranks() == std::vector<Index>{1, 5, 5, 1});
    CHECK(c.raw(0).size() == 1 * 40 * 5);
    CHECK(c.raw(1).size() == 5 * 40 * 5);
    CHECK(c.raw(2).size() == 5 * 40 * 1);
    CHECK(nestedness_violation(serial.selection.pivots).empty());
    CHECK(serial.access_fraction < 0.5);

    const auto& p = serial.selection.pivots;
    // Last core holds raw tensor entries.
    for (std::size_t a = 0; a < p.i_le[1].size(); ++a)
        for (Index i = 0; i < 40; ++i)
            CHECK(c.at(2, static_cast<Index>(a), i, 0) == serial_oracle->peek(concat(p.i_le[1][a], i, {})));
    // Interpolation on every cross fibre.
    for (int k = 0; k <= 2; ++k) {
        const std::vector<MultiIndex> left = k == 0 ? std::vector<MultiIndex>{{}} : p.i_le[static_cast<std::size_t>(k - 1)];
        const std::vector<MultiIndex> right = k == 2 ? std::vector<MultiIndex>{{}} : p.j_gt[static_cast<std::size_t>(k)];
        for (const auto& l : left)
            for (const auto& r : right)
                for (Index i = 0; i < 40; ++i) {
                    const auto idx = concat(l, i, r);
                    const double x = serial_oracle->peek(idx);
                    CHECK(std::abs(tt_eval(c, idx) - x) <= 1e-9 * std::abs(x));
                }
    }

    for (auto procs : {std::vector<int>{2, 2, 2}, std::vector<int>{1, 4, 1}, std::vector<int>{4, 1, 2}}) {
        auto oracle = models::make_hilbert(dims);
        const auto dist = decompose(*oracle, uniform({40, 40, 40}, procs), opt);
        CHECK(dist.selection.pivots == serial.selection.pivots);
        CHECK(dist.cores == serial.cores);
        CHECK(dist.access_fraction == serial.access_fraction);
    }
}

TEST_CASE("observer sees nested sets after every pivot") {
    const DimSpec dims({12, 10, 8, 6});
    auto oracle = models::make_hilbert(dims);
    DecomposeOptions opt;
    opt.ranks = {4, 5, 3};
    int calls = 0;
    opt.pivots.observer = [&](const PivotSets& p, int) {
        ++calls;
        CHECK(nestedness_violation(p).empty());
    };
    const auto r = decompose(*oracle, uniform({12, 10, 8, 6}, {2, 1, 2, 1}), opt);
    CHECK(calls == 1 + (4 - 1) + (5 - 1) + (3 - 1));
    CHECK(r.cores.ranks() == std::vector<Index>{1, 4, 5, 3, 1});
}

TEST_CASE("per-dimension-complete mode") {
    const DimSpec dims({16, 16, 16});
    auto a = models::make_hilbert(dims);
    auto b = models::make_hilbert(dims);
    DecomposeOptions opt;
    opt.ranks = {6, 6};
    const auto rr = decompose(*a, uniform({16, 16, 16}, {1, 1, 1}), opt);
    opt.pivots.per_dimension_complete = true;
    const auto pd = decompose(*b, uniform({16, 16, 16}, {2, 2, 1}), opt);
    CHECK(nestedness_violation(pd.selection.pivots).empty());
    CHECK(pd.cores.ranks() == rr.cores.ranks());
    CHECK(sampled_error(*b, pd.cores, 2000, 5) < 1e-3);
}

TEST_CASE("order two and order one") {
    auto m = models::make_hilbert(DimSpec({30, 20}));
    DecomposeOptions opt;
    opt.ranks = {8};
    const auto r = decompose(*m, uniform({30, 20}, {2, 2}), opt);
    CHECK(r.cores.ranks() == std::vector<Index>{1, 8, 1});
    CHECK(sampled_error(*m, r.cores, 500, 2) < 1e-6);

    auto v = models::make_hilbert(DimSpec({9}));
    opt.ranks = {};
    const auto one = decompose(*v, uniform({9}, {3}), opt);
    for (Index i = 0; i < 9; ++i)
        CHECK(tt_eval(one.cores, MultiIndex{i}) == v->peek(MultiIndex{i}));
}

TEST_CASE("error decreases along the rank schedule on Hilbert tensors") {
    const DimSpec dims({24, 24, 24});
    const Index targets[] = {9, 9};
    double prev = 1e300;
    for (const auto& ranks : rank_schedule(targets)) {
        auto oracle = models::make_hilbert(dims);
        DecomposeOptions opt;
        opt.ranks = ranks;
        const auto r = decompose(*oracle, uniform({24, 24, 24}, {2, 1, 1}), opt);
        const double e = sampled_error(*oracle, r.cores, 2000, 17);
        CHECK(e <= 10 * prev);
        prev = e;
    }
    CHECK(prev < 1e-5);
}

TEST_CASE("bad inputs") {
    auto oracle = models::make_hilbert(DimSpec({8, 8, 8}));
    DecomposeOptions opt;
    opt.ranks = {2};
    CHECK_THROWS_AS(decompose(*oracle, uniform({8, 8, 8}, {1, 1, 1}), opt), ArgumentError);
    opt.ranks = {2, 2};
    CHECK_THROWS_AS(decompose(*oracle, uniform({8, 8, 4}, {1, 1, 1}), opt), ConfigError);
}
