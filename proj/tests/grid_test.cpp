#include <gtest/gtest.h>

#include <sstream>

#include "qpattern/grid.hpp"
#include "test_util.hpp"

using namespace qpattern;

TEST(Generate, PaddedHalfFilledArrayHasDensityHalf) {
    const auto g = generate_padded_grid(32, 20, std::nullopt, {0.5, 17});
    EXPECT_EQ(g.width(), 32u);
    EXPECT_EQ(g.height(), 32u);
    std::size_t white = 0;
    for (std::size_t y = 0; y < 20; ++y)
        for (std::size_t x = 0; x < 32; ++x) white += g.at(x, y);
    EXPECT_NEAR(static_cast<double>(white) / 640.0, 0.5, 0.05);
    for (std::size_t y = 20; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) EXPECT_FALSE(g.at(x, y));
}

TEST(Generate, RhoOneIsAllWhite) {
    const auto g = generate_grid({3, 4}, std::nullopt, {1.0, 3});
    EXPECT_EQ(g.white_count(), g.size());
    EXPECT_DOUBLE_EQ(g.rho(), 1.0);
}

TEST(Generate, VerticalLinesShowPeriodFourColumnExcess) {
    LinePatternSpec p;
    p.spacing = 4;
    p.theta = 0;
    p.delta_rho = 0.5;
    p.region = {0, 0, 32, 32};
    const auto g = generate_grid({5, 5}, p, {0.5, 9});
    std::vector<int> col(32, 0);
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) col[x] += g.at(x, y);
    // full contrast: width-2 lines centred on x = 0 mod 4 cover x mod 4 in {3, 0}
    for (std::size_t x = 0; x < 32; ++x) {
        const bool on = x % 4 == 0 || x % 4 == 3;
        EXPECT_EQ(col[x], on ? 32 : 0) << "column " << x;
    }
}

TEST(Generate, PartialContrastKeepsRegionDensity) {
    LinePatternSpec p;
    p.spacing = 6;
    p.theta = 0.3;
    p.delta_rho = 0.25;
    p.region = {0, 0, 128, 128};
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) acc += generate_grid({7, 7}, p, {0.5, seed}).rho();
    EXPECT_NEAR(acc / 20, 0.5, 0.01);
}

TEST(Generate, DensityWithinThreeSigmaOverSeeds) {
    const int n = 5, m = 5;
    const double S = 1024, rho = 0.3;
    double sum = 0.0;
    const int seeds = 120;
    for (int s = 0; s < seeds; ++s) sum += generate_grid({n, m}, std::nullopt, {rho, std::uint64_t(s)}).rho();
    const double sigma = std::sqrt(rho * (1 - rho) / (S * seeds));
    EXPECT_LT(std::abs(sum / seeds - rho), 3 * sigma);
}

TEST(Generate, DeterministicGivenSeed) {
    LinePatternSpec p;
    p.region = {2, 3, 10, 9};
    p.z0 = 2 + 32 * 3;
    EXPECT_EQ(generate_grid({5, 4}, p, {0.4, 77}), generate_grid({5, 4}, p, {0.4, 77}));
    EXPECT_FALSE(generate_grid({5, 4}, p, {0.4, 77}) == generate_grid({5, 4}, p, {0.4, 78}));
}

TEST(Generate, RejectsBadSpecs) {
    LinePatternSpec p;
    p.region = {0, 0, 8, 8};
    p.delta_rho = 0.6;
    EXPECT_THROW(generate_grid({3, 3}, p, {0.5, 1}), InvalidArgument);
    p.delta_rho = 0.25;
    p.region = {4, 4, 8, 8};
    EXPECT_THROW(generate_grid({3, 3}, p, {0.5, 1}), InvalidArgument);
    p.region = {0, 0, 8, 8};
    p.spacing = 1.5;
    EXPECT_THROW(generate_grid({3, 3}, p, {0.5, 1}), InvalidArgument);
    EXPECT_THROW(generate_grid({3, 3}, std::nullopt, {0.0, 1}), InvalidArgument);
}

TEST(Flatten, Examples) {
    CellGrid g(3, 2);
    EXPECT_EQ(flatten(0, 0, g), 0u);
    EXPECT_EQ(flatten(3, 2, g), 19u);
    EXPECT_THROW(flatten(8, 0, g), InvalidArgument);
    EXPECT_THROW(flatten(0, 4, g), InvalidArgument);
}

TEST(Flatten, RoundTripIsBijective) {
    CellGrid g(4, 3);
    std::vector<int> seen(g.size(), 0);
    for (std::size_t y = 0; y < g.height(); ++y)
        for (std::size_t x = 0; x < g.width(); ++x) {
            const auto z = flatten(x, y, g);
            ++seen[z];
            EXPECT_EQ(unflatten(z, g), std::make_pair(x, y));
        }
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Transpose, InvolutionAndSwappedDims) {
    const auto g = qtest::random_grid(4, 3, 0.5, 5);
    const auto t = transpose(g);
    EXPECT_EQ(t.width(), g.height());
    EXPECT_EQ(t.height(), g.width());
    EXPECT_EQ(t.white_count(), g.white_count());
    for (std::size_t y = 0; y < g.height(); ++y)
        for (std::size_t x = 0; x < g.width(); ++x) EXPECT_EQ(t.at(y, x), g.at(x, y));
    EXPECT_EQ(transpose(t), g);
}

TEST(Transpose, AllWhiteStaysAllWhite) {
    const auto g = generate_grid({2, 4}, std::nullopt, {1.0, 0});
    const auto t = transpose(g);
    EXPECT_EQ(t.n(), 4);
    EXPECT_EQ(t.m(), 2);
    EXPECT_EQ(t.white_count(), t.size());
}

TEST(Transpose, VerticalLinesBecomeHorizontal) {
    LinePatternSpec p;
    p.spacing = 4;
    p.delta_rho = 0.5;
    p.region = {0, 0, 16, 16};
    const auto g = generate_grid({4, 4}, p, {0.5, 2});
    const auto t = transpose(g);
    for (std::size_t i = 0; i < 16; ++i) {
        int col = 0, row = 0;
        for (std::size_t j = 0; j < 16; ++j) {
            col += g.at(i, j);
            row += t.at(j, i);
        }
        EXPECT_EQ(col, row);
    }
}

TEST(PointList, Examples) {
    const auto all = generate_grid({2, 2}, std::nullopt, {1.0, 0});
    const auto pl = point_list(all);
    ASSERT_EQ(pl.size(), 16u);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(pl[i], i);

    CellGrid one(2, 2);
    one.set(1, 1, true);
    EXPECT_EQ(point_list(one), std::vector<std::size_t>{5});

    const auto r = qtest::random_grid(5, 5, 0.37, 8);
    const auto list = point_list(r);
    EXPECT_EQ(list.size(), r.white_count());
    EXPECT_TRUE(std::is_sorted(list.begin(), list.end()));
    EXPECT_EQ(std::adjacent_find(list.begin(), list.end()), list.end());
}

TEST(Subgrid, WholeArrayIsIdentity) {
    const auto g = qtest::random_grid(4, 4, 0.5, 1);
    EXPECT_EQ(subgrid(g, g.bounds()), g);
}

TEST(Subgrid, QuadrantsPartitionThePoints) {
    const auto g = qtest::random_grid(5, 5, 0.5, 2);
    std::size_t total = 0;
    for (std::size_t y : {0u, 16u})
        for (std::size_t x : {0u, 16u}) total += subgrid(g, {x, y, 16, 16}).white_count();
    EXPECT_EQ(total, g.white_count());
}

TEST(Subgrid, RejectsNonPowerOfTwoOrOutside) {
    const auto g = qtest::random_grid(4, 4, 0.5, 3);
    EXPECT_THROW(subgrid(g, {0, 0, 3, 4}), InvalidArgument);
    EXPECT_THROW(subgrid(g, {8, 8, 16, 16}), InvalidArgument);
}

TEST(GridText, RoundTripIsBitExact) {
    const auto g = qtest::random_grid(5, 3, 0.5, 4);
    std::stringstream ss;
    write_grid(ss, g, {"config_hash=abc", "seed=1"});
    const auto back = read_grid(ss);
    EXPECT_EQ(back, g);
}

TEST(GridText, NonPowerOfTwoFileIsPaddedBlack) {
    std::stringstream ss("P1\n# small\n3 2\n101\n011\n");
    const auto g = read_grid(ss);
    EXPECT_EQ(g.width(), 4u);
    EXPECT_EQ(g.height(), 2u);
    EXPECT_EQ(point_list(g), (std::vector<std::size_t>{0, 2, 5, 6}));
}

TEST(GridText, RejectsMalformedInput) {
    std::stringstream bad_magic("P4\n2 2\n0101\n");
    EXPECT_THROW(read_grid(bad_magic), InvalidArgument);
    std::stringstream truncated("P1\n4 4\n0101\n");
    EXPECT_THROW(read_grid(truncated), InvalidArgument);
    std::stringstream junk("P1\n2 2\n01x1\n");
    EXPECT_THROW(read_grid(junk), InvalidArgument);
}

TEST(CellGrid, RejectsBadCells) {
    EXPECT_THROW(CellGrid(1, 1, {0, 1, 2, 0}), InvalidArgument);
    EXPECT_THROW(CellGrid(1, 1, {0, 1}), InvalidArgument);
}
