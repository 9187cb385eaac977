// sampling.hpp — budgeted mixed sampling of regular and violation-critical
// points, plus their occupancy scoring. Draws are uniform without
// replacement and fully determined by the seed; independent streams derive
// from (seed, stream keys) so evaluation order never changes results.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "relmesh/core.hpp"
#include "relmesh/detail/rng.hpp"
#include "relmesh/occupancy.hpp"

namespace relmesh {

struct SamplingConfig {
    std::size_t n = 2000;  // per-class sample budget
    double rho = 0.2;      // critical-point ratio; 0 = plain occupancy sampling
    std::uint64_t seed = 0;

    void check() const {
        if (n == 0) throw std::invalid_argument("sampling: n must be positive");
        if (rho < 0.0 || rho > 1.0)
            throw std::invalid_argument("sampling: rho must lie in [0,1]");
    }
};

// Stable partition of a flagged pool into (critical, regular).
struct SplitPools {
    std::vector<Vec3> critical;
    std::vector<Vec3> regular;
};

inline SplitPools split(const std::vector<Vec3> &points,
                        const std::vector<std::uint8_t> &is_critical) {
    if (points.size() != is_critical.size())
        throw std::invalid_argument("split: flag array length mismatch");
    SplitPools out;
    for (std::size_t i = 0; i < points.size(); ++i)
        (is_critical[i] ? out.critical : out.regular).push_back(points[i]);
    return out;
}

// k-point uniform draw without replacement; deterministic given the stream.
inline std::vector<Vec3> pick_random(const std::vector<Vec3> &pool, std::size_t k,
                                     detail::Rng &rng) {
    if (k > pool.size())
        throw std::invalid_argument("pick_random: k exceeds pool size");
    std::vector<Vec3> out;
    out.reserve(k);
    for (std::size_t idx : detail::sample_indices(pool.size(), k, rng))
        out.push_back(pool[idx]);
    return out;
}

struct ScoredSamples {
    std::vector<double> positive_scores;
    std::vector<double> negative_scores;
    std::vector<Vec3> positive_points;
    std::vector<Vec3> negative_points;
    std::size_t m_critical = 0; // dedicated critical draws per side (0 when rho = 0)
    int clamped_draws = 0;      // times a pool fell short of the requested count
};

namespace detail {

struct SideDraw {
    std::vector<Vec3> points;
    int clamped = 0;
};

inline SideDraw draw_side(const SplitPools &pools, std::size_t n, double rho,
                          std::size_t m, Rng &rng) {
    SideDraw out;
    if (rho == 0.0) {
        std::vector<Vec3> full = pools.regular;
        full.insert(full.end(), pools.critical.begin(), pools.critical.end());
        std::size_t take = n;
        if (take > full.size()) { take = full.size(); out.clamped = 1; }
        out.points = pick_random(full, take, rng);
        return out;
    }
    out.points = pick_random(pools.critical, m, rng);
    std::size_t want_regular = n - m;
    if (want_regular > pools.regular.size()) {
        want_regular = pools.regular.size();
        out.clamped = 1;
    }
    std::vector<Vec3> reg = pick_random(pools.regular, want_regular, rng);
    out.points.insert(out.points.end(), reg.begin(), reg.end());
    return out;
}

} // namespace detail

// Draw step alone: both sides sampled, nothing scored. Loss evaluation uses
// this to freeze the drawn points before differentiating.
struct DrawnSamples {
    std::vector<Vec3> positive_points;
    std::vector<Vec3> negative_points;
    std::size_t m_critical = 0;
    int clamped_draws = 0;
};

inline DrawnSamples draw_pools(const std::vector<Vec3> &positives,
                               const std::vector<std::uint8_t> &positives_critical,
                               const std::vector<Vec3> &negatives,
                               const std::vector<std::uint8_t> &negatives_critical,
                               const SamplingConfig &cfg) {
    cfg.check();
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("split_and_score: empty pool");

    const SplitPools plus = split(positives, positives_critical);
    const SplitPools minus = split(negatives, negatives_critical);

    std::size_t m = 0;
    if (cfg.rho > 0.0) {
        m = static_cast<std::size_t>(cfg.rho * static_cast<double>(cfg.n));
        m = std::min({m, plus.critical.size(), minus.critical.size()});
    }

    detail::Rng base(cfg.seed);
    detail::Rng rng_plus = base.derive({0x706c7573ull});   // "plus"
    detail::Rng rng_minus = base.derive({0x6d696e7573ull}); // "minus"

    DrawnSamples out;
    detail::SideDraw dp = detail::draw_side(plus, cfg.n, cfg.rho, m, rng_plus);
    detail::SideDraw dm = detail::draw_side(minus, cfg.n, cfg.rho, m, rng_minus);
    out.positive_points = std::move(dp.points);
    out.negative_points = std::move(dm.points);
    out.m_critical = m;
    out.clamped_draws = dp.clamped + dm.clamped;
    return out;
}

// Mixed sampling and scoring of one positive/negative pool pair against a
// mesh. With rho > 0, m = min(|critical+|, |critical-|, floor(rho*n))
// critical points are drawn from each side and the remainder comes from the
// regular subsets; with rho = 0 both draws come from the full pools.
inline ScoredSamples split_and_score(const TriMesh &mesh,
                                     const std::vector<Vec3> &positives,
                                     const std::vector<std::uint8_t> &positives_critical,
                                     const std::vector<Vec3> &negatives,
                                     const std::vector<std::uint8_t> &negatives_critical,
                                     const SamplingConfig &cfg,
                                     const OccupancyConfig &occ_cfg = {}) {
    DrawnSamples drawn =
        draw_pools(positives, positives_critical, negatives, negatives_critical, cfg);
    ScoredSamples out;
    out.positive_points = std::move(drawn.positive_points);
    out.negative_points = std::move(drawn.negative_points);
    out.m_critical = drawn.m_critical;
    out.clamped_draws = drawn.clamped_draws;
    out.positive_scores = occupancy_score(mesh, out.positive_points, occ_cfg);
    out.negative_scores = occupancy_score(mesh, out.negative_points, occ_cfg);
    return out;
}

} // namespace relmesh
