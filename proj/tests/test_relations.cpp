#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "relmesh/relations.hpp"
#include "relmesh/synth.hpp"

using namespace relmesh;

namespace {

LabelGrid make_grid(std::array<int, 3> dims) {
    LabelGrid g;
    g.dims = dims;
    g.labels.assign(g.voxel_count(), 0);
    g.affine = Affine::identity();
    return g;
}

LabelGrid random_grid(std::array<int, 3> dims, int max_label, relmesh::detail::Rng &rng) {
    LabelGrid g = make_grid(dims);
    for (auto &l : g.labels)
        l = static_cast<std::uint8_t>(rng.next_below(max_label + 1));
    return g;
}

} // namespace

TEST_CASE("neighborhood overlap of a single voxel is the 6-cross") {
    LabelGrid g = make_grid({3, 3, 3});
    g.labels[g.index(1, 1, 1)] = 5;
    const BinaryGrid n = neighborhood_overlap(g, 5);
    CHECK(n.popcount() == 7);
    CHECK(n.at(1, 1, 1));
    CHECK(n.at(0, 1, 1));
    CHECK(n.at(2, 1, 1));
    CHECK(n.at(1, 0, 1));
    CHECK(n.at(1, 2, 1));
    CHECK(n.at(1, 1, 0));
    CHECK(n.at(1, 1, 2));
}

TEST_CASE("neighborhood overlap of an absent label is empty") {
    const LabelGrid g = make_grid({3, 3, 3});
    CHECK(neighborhood_overlap(g, 9).popcount() == 0);
}

TEST_CASE("neighborhood overlap equals the brute-force scan") {
    relmesh::detail::Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const LabelGrid g = random_grid({8, 8, 8}, 3, rng);
        const BinaryGrid got = neighborhood_overlap(g, 1);
        const BinaryGrid want = oracles::brute_dilate6(oracles::brute_label_mask(g, 1));
        CHECK(got.bits == want.bits);
    }
}

TEST_CASE("exclusion flags adjacency") {
    LabelGrid g = make_grid({3, 3, 3});
    g.labels[g.index(0, 1, 1)] = 1;
    g.labels[g.index(1, 1, 1)] = 2;
    const BinaryGrid vio = violation_map(g, {1, 2, 0});
    CHECK(vio.popcount() == 1);
    CHECK(vio.at(0, 1, 1));
}

TEST_CASE("inclusion: subject inside a thick closed shell is compliant") {
    // 9^3 grid, box shell of label 2 around a centered subject voxel
    LabelGrid g = make_grid({9, 9, 9});
    for (int k = 0; k < 9; ++k)
        for (int j = 0; j < 9; ++j)
            for (int i = 0; i < 9; ++i) {
                const int d = std::max({std::abs(i - 4), std::abs(j - 4), std::abs(k - 4)});
                if (d == 2 || d == 3) g.labels[g.index(i, j, k)] = 2;
            }
    g.labels[g.index(4, 4, 4)] = 1;
    const BinaryGrid vio = violation_map(g, {1, 2, 1});
    CHECK(vio.popcount() == 0);
}

TEST_CASE("inclusion: isolated subject voxel far from the object violates") {
    LabelGrid g = make_grid({9, 9, 9});
    g.labels[g.index(1, 1, 1)] = 2;
    g.labels[g.index(7, 7, 7)] = 1;
    const BinaryGrid vio = violation_map(g, {1, 2, 1});
    CHECK(vio.popcount() == 1);
    CHECK(vio.at(7, 7, 7));
}

TEST_CASE("violation maps equal brute-force evaluation on random grids") {
    relmesh::detail::Rng rng(97);
    for (int trial = 0; trial < 25; ++trial) {
        const LabelGrid g = random_grid({8, 8, 8}, 2, rng);
        for (int relation : {0, 1}) {
            const Rule rule{1, 2, relation};
            const BinaryGrid got = violation_map(g, rule);
            const BinaryGrid want = oracles::brute_violation_map(g, rule);
            CHECK(got.bits == want.bits);
        }
    }
}

TEST_CASE("exclusion violations are monotone in subject support") {
    relmesh::detail::Rng rng(53);
    for (int trial = 0; trial < 10; ++trial) {
        LabelGrid g = random_grid({8, 8, 8}, 2, rng);
        const BinaryGrid before = violation_map(g, {1, 2, 0});
        // add a subject voxel on a background cell
        for (int attempts = 0; attempts < 50; ++attempts) {
            const std::size_t idx = rng.next_below(g.labels.size());
            if (g.labels[idx] == 0) {
                g.labels[idx] = 1;
                break;
            }
        }
        const BinaryGrid after = violation_map(g, {1, 2, 0});
        for (std::size_t i = 0; i < before.bits.size(); ++i)
            if (before.bits[i]) CHECK(after.bits[i]);
    }
}

TEST_CASE("critical points lift violating voxels to world space") {
    LabelGrid g = make_grid({8, 8, 8});
    RuleSet rules;
    rules.rules = {{1, 2, 1}};
    CHECK(critical_points(g, RuleSet{}).empty());

    g.labels[g.index(1, 1, 1)] = 2;
    g.labels[g.index(2, 3, 4)] = 1; // far from the object, violates inclusion
    const CriticalPointSet set = critical_points(g, rules);
    REQUIRE(set.size() == 1);
    CHECK(set.points[0].pos.x == Catch::Approx(2.5));
    CHECK(set.points[0].pos.y == Catch::Approx(3.5));
    CHECK(set.points[0].pos.z == Catch::Approx(4.5));
    CHECK(set.points[0].source_label == 1);
    CHECK(set.points[0].rule_index == 0);
}

TEST_CASE("interleaved columns give one critical point per subject voxel") {
    // x-even columns subject, x-odd columns object: every subject voxel is
    // face-adjacent to the object
    LabelGrid g = make_grid({6, 3, 3});
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 6; ++i)
                g.labels[g.index(i, j, k)] = (i % 2 == 0) ? 1 : 2;
    RuleSet rules;
    rules.rules = {{1, 2, 0}};
    const BinaryGrid vio = violation_map(g, rules.rules[0]);
    CHECK(vio.popcount() == 27);
    const CriticalPointSet set = critical_points(g, rules);
    CHECK(set.size() == vio.popcount());
}

TEST_CASE("assemble_rule_pools routes critical points") {
    QueryBatch q;
    relmesh::detail::Rng rng(3);
    for (int i = 0; i < 40; ++i) {
        q.points.push_back({rng.next_double() * 10, rng.next_double() * 10, rng.next_double() * 10});
        q.labels.push_back(i < 15 ? 1 : 2);
        q.is_critical.push_back(0);
        q.target.push_back(i < 15);
    }
    TriMesh mesh = icosphere(1, 1.0, {5, 5, 5});
    mesh.structure_label = 1;

    SECTION("no critical points leaves base pools untouched") {
        const auto pools = assemble_rule_pools(q, CriticalPointSet{}, {1, 2, 0}, 0, mesh);
        CHECK(pools.positives.size() == 15);
        CHECK(pools.negatives.size() == 25);
    }

    SECTION("exclusion appends all selected critical points to the negatives") {
        CriticalPointSet critical;
        for (int i = 0; i < 5; ++i)
            critical.points.push_back({{1.0 * i, 0, 0}, 2, 0}); // object-labeled
        const auto pools = assemble_rule_pools(q, critical, {1, 2, 0}, 0, mesh);
        CHECK(pools.positives.size() == 15);
        CHECK(pools.negatives.size() == 30);
        std::size_t flagged = 0;
        for (auto f : pools.negatives_critical) flagged += f;
        CHECK(flagged == 5);
    }

    SECTION("inclusion splits critical points by current occupancy") {
        CriticalPointSet critical;
        for (int i = 0; i < 3; ++i) // inside the template sphere
            critical.points.push_back({{5.0 + 0.1 * i, 5.0, 5.0}, 2, 0});
        for (int i = 0; i < 5; ++i) // far away
            critical.points.push_back({{9.0, 9.0, 9.0 - 0.2 * i}, 2, 0});
        const auto pools = assemble_rule_pools(q, critical, {1, 2, 1}, 0, mesh);
        CHECK(pools.positives.size() == 15 + 3);
        CHECK(pools.negatives.size() == 25 + 5);
        // conservation
        CHECK(pools.positives.size() + pools.negatives.size() == 40 + 8);
    }

    SECTION("object-label filter falls back to the subject label") {
        CriticalPointSet critical;
        critical.points.push_back({{0, 0, 0}, 1, 0}); // subject-labeled, as lifted
        const auto pools = assemble_rule_pools(q, critical, {1, 2, 0}, 0, mesh);
        CHECK(pools.negatives.size() == 26);
    }

    SECTION("mesh/rule label mismatch is an error") {
        TriMesh wrong = mesh;
        wrong.structure_label = 7;
        CHECK_THROWS_AS(assemble_rule_pools(q, CriticalPointSet{}, {1, 2, 0}, 0, wrong),
                        std::invalid_argument);
    }
}
