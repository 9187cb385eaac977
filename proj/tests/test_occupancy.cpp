#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "relmesh/occupancy.hpp"
#include "relmesh/synth.hpp"

using namespace relmesh;

namespace {

// 12-triangle unit cube, outward orientation
TriMesh unit_cube() {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    m.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
               {2, 3, 7}, {2, 7, 6}, {1, 2, 6}, {1, 6, 5}, {3, 0, 4}, {3, 4, 7}};
    return m;
}

TriMesh flat_patch(int half_cells, double spacing) {
    TriMesh m;
    const int n = 2 * half_cells + 1;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            m.vertices.push_back({(i - half_cells) * spacing, (j - half_cells) * spacing, 0.0});
    auto vid = [&](int i, int j) { return j * n + i; };
    for (int j = 0; j + 1 < n; ++j)
        for (int i = 0; i + 1 < n; ++i) {
            m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
            m.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
        }
    return m;
}

} // namespace

TEST_CASE("vertex area normals: closed surface sums to zero") {
    const auto an = vertex_area_normals(unit_cube());
    Vec3 sum{};
    double total_area = 0.0;
    for (const auto &a : an.normals) {
        sum += a;
        total_area += a.norm();
    }
    CHECK(sum.norm() < 1e-6 * total_area);
}

TEST_CASE("vertex area normals: single triangle splits evenly") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    const auto an = vertex_area_normals(m);
    for (const auto &a : an.normals) {
        CHECK(a.x == Catch::Approx(0.0).margin(1e-15));
        CHECK(a.y == Catch::Approx(0.0).margin(1e-15));
        CHECK(a.z == Catch::Approx(1.0 / 6.0));
    }
}

TEST_CASE("vertex area normals: icosphere total approximates sphere area") {
    const auto an = vertex_area_normals(icosphere(3, 1.0));
    double total = 0.0;
    for (const auto &a : an.normals) total += a.norm();
    CHECK(total == Catch::Approx(4.0 * 3.14159265358979323846).epsilon(0.02));
}

TEST_CASE("occupancy inside, outside, and on a plane") {
    const TriMesh sphere = icosphere(3, 1.0);
    const auto vals = occupancy(sphere, {{0, 0, 0}, {10, 0, 0}});
    CHECK(vals[0] == Catch::Approx(1.0).margin(0.01));
    CHECK(vals[1] == Catch::Approx(0.0).margin(0.01));

    relmesh::detail::Rng rng(3);
    CHECK(oracles::ray_cast_inside(sphere, {0, 0, 0}, rng));

    // large flat patch: a point just below its center sees half the sphere
    const TriMesh patch = flat_patch(40, 1.0);
    const auto half = occupancy(patch, {{0.0, 0.0, -0.5}});
    CHECK(half[0] == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("occupancy input handling") {
    const TriMesh sphere = icosphere(1, 1.0);
    CHECK(occupancy(sphere, {}).empty());
    CHECK_THROWS_AS(
        occupancy(sphere, {{std::numeric_limits<double>::quiet_NaN(), 0, 0}}),
        std::invalid_argument);
    TriMesh empty;
    CHECK_THROWS_AS(occupancy(empty, {{0, 0, 0}}), std::invalid_argument);
}

TEST_CASE("occupancy scores through the centered sigmoid") {
    OccupancyConfig cfg;
    CHECK(occupancy_to_score(0.5, cfg) == Catch::Approx(0.5));
    CHECK(occupancy_to_score(1.0, cfg) == Catch::Approx(0.99330714907571527));
    CHECK(occupancy_to_score(0.0, cfg) == Catch::Approx(0.0066928509242848554));

    const TriMesh sphere = icosphere(2, 1.0);
    const auto occ = occupancy(sphere, {{0, 0, 0}});
    const auto score = occupancy_score(sphere, {{0, 0, 0}});
    CHECK(score[0] == Catch::Approx(occupancy_to_score(occ[0], cfg)));
}

TEST_CASE("occupancy gradient matches finite differences") {
    const TriMesh sphere = icosphere(2, 1.0);
    const OccupancyConfig cfg;
    const double h = 1e-5 * sphere.bbox_diagonal();
    relmesh::detail::Rng rng(11);

    std::vector<Vec3> points;
    for (int i = 0; i < 5; ++i)
        points.push_back({rng.next_double() * 2.4 - 1.2, rng.next_double() * 2.4 - 1.2,
                          rng.next_double() * 2.4 - 1.2});

    const auto grads = occupancy_gradient(sphere, points, cfg);
    for (std::size_t p = 0; p < points.size(); ++p) {
        for (int rep = 0; rep < 4; ++rep) {
            const std::size_t v = rng.next_below(sphere.vertices.size());
            for (int axis = 0; axis < 3; ++axis) {
                const double fd = oracles::central_difference(
                    [&](const TriMesh &m) { return occupancy(m, {points[p]}, cfg)[0]; },
                    sphere, v, axis, h);
                const double an = axis == 0 ? grads.d_vertices[p][v].x
                                  : axis == 1 ? grads.d_vertices[p][v].y
                                              : grads.d_vertices[p][v].z;
                if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
                CHECK(oracles::rel_error(an, fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("occupancy gradient translation identity") {
    // O depends on v - p only, so summing dO/dv over vertices gives -dO/dp
    const TriMesh sphere = icosphere(2, 1.0);
    const std::vector<Vec3> pts{{0.3, -0.2, 0.5}, {1.5, 0.1, -0.4}};
    const auto grads = occupancy_gradient(sphere, pts);
    const auto pgrads = occupancy_point_gradient(sphere, pts);
    for (std::size_t p = 0; p < pts.size(); ++p) {
        Vec3 sum{};
        for (const auto &g : grads.d_vertices[p]) sum += g;
        CHECK((sum + pgrads[p]).norm() < 1e-9);
    }
}

TEST_CASE("occupancy gradient far-field decay") {
    const TriMesh sphere = icosphere(2, 1.0);
    const auto grads = occupancy_gradient(sphere, {{100, 0, 0}});
    double biggest = 0.0;
    for (const auto &g : grads.d_vertices[0]) biggest = std::max(biggest, g.norm());
    CHECK(biggest < 1e-4);
}

TEST_CASE("inside/outside agrees with ray casting") {
    relmesh::detail::Rng rng(23);
    for (int subdiv : {2, 3}) {
        const TriMesh sphere = icosphere(subdiv, 1.0);
        int agree = 0;
        const int total = 2000;
        std::vector<Vec3> pts;
        for (int i = 0; i < total; ++i)
            pts.push_back({rng.next_double() * 4.0 - 2.0, rng.next_double() * 4.0 - 2.0,
                           rng.next_double() * 4.0 - 2.0});
        const auto occ = occupancy(sphere, pts);
        for (int i = 0; i < total; ++i) {
            const bool inside = occ[i] > 0.5;
            if (inside == oracles::ray_cast_inside(sphere, pts[i], rng)) ++agree;
        }
        CHECK(static_cast<double>(agree) / total >= 0.995);
    }
}

TEST_CASE("occupancy is rigid-motion invariant") {
    relmesh::detail::Rng rng(5);
    const TriMesh sphere = icosphere(2, 1.0);
    const std::vector<Vec3> pts{{0.2, 0.1, -0.3}, {1.4, -0.6, 0.9}, {0, 0, 0}};
    const auto before = occupancy(sphere, pts);
    const auto motion = oracles::random_rigid(rng);
    TriMesh moved = sphere;
    for (auto &v : moved.vertices) v = motion.apply(v);
    std::vector<Vec3> moved_pts;
    for (const auto &p : pts) moved_pts.push_back(motion.apply(p));
    const auto after = occupancy(moved, moved_pts);
    for (std::size_t i = 0; i < pts.size(); ++i)
        CHECK(std::abs(before[i] - after[i]) < 1e-9);
}

TEST_CASE("nested meshes preserve containment ordering") {
    const TriMesh inner = icosphere(2, 0.5);
    const TriMesh outer = icosphere(2, 1.0);
    relmesh::detail::Rng rng(13);
    std::vector<Vec3> pts;
    for (int i = 0; i < 500; ++i)
        pts.push_back({rng.next_double() * 3.0 - 1.5, rng.next_double() * 3.0 - 1.5,
                       rng.next_double() * 3.0 - 1.5});
    const auto o_in = occupancy(inner, pts);
    const auto o_out = occupancy(outer, pts);
    for (std::size_t i = 0; i < pts.size(); ++i)
        CHECK(o_out[i] >= o_in[i] - 0.02);
}

TEST_CASE("occupancy is deterministic across thread counts") {
    const TriMesh sphere = icosphere(3, 1.0);
    relmesh::detail::Rng rng(31);
    std::vector<Vec3> pts;
    for (int i = 0; i < 1500; ++i)
        pts.push_back({rng.next_double() * 4 - 2, rng.next_double() * 4 - 2,
                       rng.next_double() * 4 - 2});
    relmesh::detail::set_max_threads(1);
    const auto single = occupancy(sphere, pts);
    std::vector<double> weights(pts.size(), 1.0);
    std::vector<Vec3> grad1;
    relmesh::detail::occupancy_accumulate_gradient(sphere, pts, weights, OccupancyConfig{}, grad1);

    relmesh::detail::set_max_threads(4);
    const auto multi = occupancy(sphere, pts);
    std::vector<Vec3> grad4;
    relmesh::detail::occupancy_accumulate_gradient(sphere, pts, weights, OccupancyConfig{}, grad4);
    relmesh::detail::set_max_threads(1);

    CHECK(single == multi);
    for (std::size_t i = 0; i < grad1.size(); ++i) {
        CHECK(grad1[i].x == grad4[i].x);
        CHECK(grad1[i].y == grad4[i].y);
        CHECK(grad1[i].z == grad4[i].z);
    }
}
