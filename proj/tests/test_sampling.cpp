#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "relmesh/sampling.hpp"
#include "relmesh/synth.hpp"

using namespace relmesh;

namespace {

std::vector<Vec3> line_points(std::size_t n, double x0) {
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({x0 + static_cast<double>(i), 0, 0});
    return out;
}

} // namespace

TEST_CASE("split partitions by flag and preserves order") {
    const std::vector<Vec3> pts = line_points(10, 0.0);

    SECTION("all regular") {
        const auto s = split(pts, std::vector<std::uint8_t>(10, 0));
        CHECK(s.critical.empty());
        CHECK(s.regular.size() == 10);
    }

    SECTION("alternating flags, order preserved") {
        std::vector<std::uint8_t> flags(10);
        for (std::size_t i = 0; i < 10; ++i) flags[i] = i % 2;
        const auto s = split(pts, flags);
        REQUIRE(s.critical.size() == 5);
        REQUIRE(s.regular.size() == 5);
        for (std::size_t i = 0; i + 1 < 5; ++i) {
            CHECK(s.critical[i].x < s.critical[i + 1].x);
            CHECK(s.regular[i].x < s.regular[i + 1].x);
        }
    }

    SECTION("subsets reassemble the input multiset") {
        relmesh::detail::Rng rng(9);
        std::vector<std::uint8_t> flags(10);
        for (auto &f : flags) f = rng.next_below(2);
        const auto s = split(pts, flags);
        std::multiset<double> in, out;
        for (const auto &p : pts) in.insert(p.x);
        for (const auto &p : s.critical) out.insert(p.x);
        for (const auto &p : s.regular) out.insert(p.x);
        CHECK(in == out);
    }
}

TEST_CASE("pick_random draws without replacement") {
    const std::vector<Vec3> pool = line_points(8, 0.0);
    relmesh::detail::Rng rng(17);

    SECTION("k equal to pool size returns the whole pool") {
        auto rng2 = rng;
        const auto got = pick_random(pool, 8, rng2);
        std::set<double> xs;
        for (const auto &p : got) xs.insert(p.x);
        CHECK(xs.size() == 8);
    }

    SECTION("k zero returns nothing") {
        auto rng2 = rng;
        CHECK(pick_random(pool, 0, rng2).empty());
    }

    SECTION("k beyond the pool is an error") {
        auto rng2 = rng;
        CHECK_THROWS_AS(pick_random(pool, 9, rng2), std::invalid_argument);
    }

    SECTION("chi-square uniformity of single draws") {
        const std::vector<Vec3> ten = line_points(10, 0.0);
        std::array<int, 10> counts{};
        relmesh::detail::Rng stream(1234);
        for (int i = 0; i < 10000; ++i) {
            auto draw_rng = stream.derive({static_cast<std::uint64_t>(i)});
            const auto got = pick_random(ten, 1, draw_rng);
            counts[static_cast<int>(got[0].x)]++;
        }
        double chi2 = 0.0;
        for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
        CHECK(chi2 < 21.666); // chi-square 9 dof, p = 0.01
    }
}

TEST_CASE("split_and_score draws the budgeted mix") {
    const TriMesh mesh = icosphere(1, 1.0);
    // critical points parked far away on +x so they are identifiable
    auto make_pools = [&](std::size_t n_regular, std::size_t n_critical) {
        std::vector<Vec3> pts = line_points(n_regular, -100.0);
        std::vector<std::uint8_t> flags(n_regular, 0);
        const auto crit = line_points(n_critical, 1000.0);
        pts.insert(pts.end(), crit.begin(), crit.end());
        flags.insert(flags.end(), n_critical, 1);
        return std::make_pair(pts, flags);
    };

    SECTION("m = floor(rho n) when both critical pools are large") {
        auto [pp, pf] = make_pools(3000, 1000);
        auto [np, nf] = make_pools(3000, 1000);
        SamplingConfig cfg;
        cfg.n = 2000;
        cfg.rho = 0.2;
        cfg.seed = 5;
        const auto out = split_and_score(mesh, pp, pf, np, nf, cfg);
        CHECK(out.positive_scores.size() == 2000);
        CHECK(out.negative_scores.size() == 2000);
        CHECK(out.m_critical == 400);
        auto count_crit = [](const std::vector<Vec3> &pts) {
            return std::count_if(pts.begin(), pts.end(), [](const Vec3 &p) { return p.x > 500; });
        };
        CHECK(count_crit(out.positive_points) == 400);
        CHECK(count_crit(out.negative_points) == 400);
    }

    SECTION("m clamps to the smaller critical pool") {
        auto [pp, pf] = make_pools(3000, 1000);
        auto [np, nf] = make_pools(3000, 50);
        SamplingConfig cfg;
        cfg.n = 2000;
        cfg.rho = 0.2;
        cfg.seed = 6;
        const auto out = split_and_score(mesh, pp, pf, np, nf, cfg);
        CHECK(out.m_critical == 50);
    }

    SECTION("rho zero means no dedicated critical draws") {
        auto [pp, pf] = make_pools(3000, 1000);
        auto [np, nf] = make_pools(3000, 1000);
        SamplingConfig cfg;
        cfg.n = 2000;
        cfg.rho = 0.0;
        cfg.seed = 7;
        const auto out = split_and_score(mesh, pp, pf, np, nf, cfg);
        CHECK(out.m_critical == 0);
        CHECK(out.positive_scores.size() == 2000);
    }

    SECTION("empty pool is an error") {
        auto [pp, pf] = make_pools(100, 0);
        SamplingConfig cfg;
        cfg.n = 10;
        CHECK_THROWS_AS(split_and_score(mesh, pp, pf, {}, {}, cfg), std::invalid_argument);
    }

    SECTION("short pools clamp with a warning counter") {
        auto [pp, pf] = make_pools(30, 0);
        auto [np, nf] = make_pools(40, 0);
        SamplingConfig cfg;
        cfg.n = 100;
        cfg.rho = 0.0;
        const auto out = split_and_score(mesh, pp, pf, np, nf, cfg);
        CHECK(out.positive_scores.size() == 30);
        CHECK(out.negative_scores.size() == 40);
        CHECK(out.clamped_draws == 2);
    }

    SECTION("fixed seed reproduces draws bitwise") {
        auto [pp, pf] = make_pools(500, 80);
        auto [np, nf] = make_pools(700, 90);
        SamplingConfig cfg;
        cfg.n = 300;
        cfg.rho = 0.2;
        cfg.seed = 99;
        const auto a = split_and_score(mesh, pp, pf, np, nf, cfg);
        const auto b = split_and_score(mesh, pp, pf, np, nf, cfg);
        CHECK(a.positive_scores == b.positive_scores);
        CHECK(a.negative_scores == b.negative_scores);
        for (std::size_t i = 0; i < a.positive_points.size(); ++i)
            CHECK(a.positive_points[i].x == b.positive_points[i].x);
    }

    SECTION("expected critical draws are nondecreasing in rho") {
        auto [pp, pf] = make_pools(4000, 500);
        auto [np, nf] = make_pools(4000, 500);
        auto mean_crit = [&](double rho) {
            double total = 0.0;
            for (int seed = 0; seed < 40; ++seed) {
                SamplingConfig cfg;
                cfg.n = 1000;
                cfg.rho = rho;
                cfg.seed = static_cast<std::uint64_t>(seed);
                const auto out = split_and_score(mesh, pp, pf, np, nf, cfg);
                total += std::count_if(out.positive_points.begin(), out.positive_points.end(),
                                       [](const Vec3 &p) { return p.x > 500; });
            }
            return total / 40.0;
        };
        const double at0 = mean_crit(0.0);
        const double at02 = mean_crit(0.2);
        const double at05 = mean_crit(0.5);
        CHECK(at0 <= at02 + 1e-9);
        CHECK(at02 <= at05 + 1e-9);
    }
}
