// oracles.hpp — test-only reference implementations, kept independent of the
// library paths they check: ray-casting parity for inside/outside, exhaustive
// per-voxel morphology scans, brute-force point-set distances, and a central
// finite-difference engine for gradient verification.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "relmesh/core.hpp"
#include "relmesh/detail/rng.hpp"
#include "relmesh/relations.hpp"

namespace oracles {

using relmesh::BinaryGrid;
using relmesh::LabelGrid;
using relmesh::Rule;
using relmesh::TriMesh;
using relmesh::Vec3;

// Moller-Trumbore; returns 0/1 hit, -1 for a numerically unstable hit.
inline int ray_triangle(const Vec3 &origin, const Vec3 &dir, const Vec3 &v0, const Vec3 &v1,
                        const Vec3 &v2) {
    const Vec3 e1 = v1 - v0, e2 = v2 - v0;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-12) return -1;
    const double inv = 1.0 / det;
    const Vec3 t = origin - v0;
    const double u = t.dot(p) * inv;
    if (u < -1e-9 || u > 1.0 + 1e-9) return 0;
    const Vec3 q = t.cross(e1);
    const double v = dir.dot(q) * inv;
    if (v < -1e-9 || u + v > 1.0 + 1e-9) return 0;
    const double dist = e2.dot(q) * inv;
    if (dist <= 1e-12) return 0;
    // grazing hits near edges are unstable; ask for a different ray
    if (u < 1e-7 || v < 1e-7 || u + v > 1.0 - 1e-7) return -1;
    return 1;
}

// Parity test with re-randomized ray direction on unstable hits.
inline bool ray_cast_inside(const TriMesh &mesh, const Vec3 &point, relmesh::detail::Rng &rng) {
    for (int attempt = 0; attempt < 32; ++attempt) {
        Vec3 dir{rng.next_double() - 0.5, rng.next_double() - 0.5, rng.next_double() - 0.5};
        const double n = dir.norm();
        if (n < 1e-3) continue;
        dir = dir / n;
        int crossings = 0;
        bool unstable = false;
        for (const auto &f : mesh.faces) {
            const int hit = ray_triangle(point, dir, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                         mesh.vertices[f[2]]);
            if (hit < 0) { unstable = true; break; }
            crossings += hit;
        }
        if (!unstable) return (crossings % 2) == 1;
    }
    return false; // no stable ray found; callers use generous tolerances
}

// Exhaustive 6-neighborhood scan (dilation including the center).
inline BinaryGrid brute_dilate6(const BinaryGrid &mask) {
    BinaryGrid out;
    out.dims = mask.dims;
    out.bits.assign(mask.voxel_count(), 0);
    const int offs[7][3] = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                            {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int k = 0; k < mask.dims[2]; ++k)
        for (int j = 0; j < mask.dims[1]; ++j)
            for (int i = 0; i < mask.dims[0]; ++i) {
                bool any = false;
                for (const auto &o : offs) {
                    const int ii = i + o[0], jj = j + o[1], kk = k + o[2];
                    if (ii < 0 || jj < 0 || kk < 0 || ii >= mask.dims[0] ||
                        jj >= mask.dims[1] || kk >= mask.dims[2])
                        continue;
                    if (mask.at(ii, jj, kk)) { any = true; break; }
                }
                out.bits[out.index(i, j, k)] = any;
            }
    return out;
}

// Hole filling by fixpoint sweep: voxels connected to the boundary through
// non-mask voxels are outside, the rest is mask + cavities.
inline BinaryGrid brute_fill6(const BinaryGrid &mask) {
    const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
    std::vector<std::uint8_t> outside(mask.voxel_count(), 0);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if ((i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1) &&
                    !mask.at(i, j, k))
                    outside[mask.index(i, j, k)] = 1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const std::size_t idx = mask.index(i, j, k);
                    if (outside[idx] || mask.bits[idx]) continue;
                    const int offs[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                            {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
                    for (const auto &o : offs) {
                        const int ii = i + o[0], jj = j + o[1], kk = k + o[2];
                        if (ii < 0 || jj < 0 || kk < 0 || ii >= nx || jj >= ny || kk >= nz)
                            continue;
                        if (outside[mask.index(ii, jj, kk)]) {
                            outside[idx] = 1;
                            changed = true;
                            break;
                        }
                    }
                }
    }
    BinaryGrid out;
    out.dims = mask.dims;
    out.bits.resize(mask.voxel_count());
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
    return out;
}

inline BinaryGrid brute_label_mask(const LabelGrid &grid, int label) {
    BinaryGrid out;
    out.dims = grid.dims;
    out.bits.resize(grid.voxel_count());
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = grid.labels[i] == label;
    return out;
}

// Independent evaluation of one rule's violation voxels.
inline BinaryGrid brute_violation_map(const LabelGrid &grid, const Rule &rule) {
    const BinaryGrid subject = brute_label_mask(grid, rule.subject);
    BinaryGrid zone;
    if (rule.relation == 0) {
        zone = brute_dilate6(brute_label_mask(grid, rule.object));
    } else {
        zone = brute_dilate6(brute_fill6(brute_label_mask(grid, rule.object)));
        for (auto &b : zone.bits) b = b ? 0 : 1;
    }
    BinaryGrid out;
    out.dims = grid.dims;
    out.bits.resize(grid.voxel_count());
    for (std::size_t i = 0; i < out.bits.size(); ++i)
        out.bits[i] = subject.bits[i] && zone.bits[i];
    return out;
}

inline double brute_chamfer(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    double s1 = 0.0, s2 = 0.0;
    for (const auto &p : a) {
        double best = 1e300;
        for (const auto &q : b) best = std::min(best, (p - q).norm2());
        s1 += best;
    }
    for (const auto &q : b) {
        double best = 1e300;
        for (const auto &p : a) best = std::min(best, (q - p).norm2());
        s2 += best;
    }
    return s1 / a.size() + s2 / b.size();
}

inline double brute_hausdorff(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    auto directed = [](const std::vector<Vec3> &from, const std::vector<Vec3> &to) {
        double worst = 0.0;
        for (const auto &p : from) {
            double best = 1e300;
            for (const auto &q : to) best = std::min(best, (p - q).norm());
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, b), directed(b, a));
}

// Central finite difference of a scalar function of one vertex coordinate.
inline double central_difference(const std::function<double(const TriMesh &)> &f, TriMesh mesh,
                                 std::size_t vertex, int axis, double h) {
    auto shift = [&](double delta) {
        (axis == 0 ? mesh.vertices[vertex].x
                   : (axis == 1 ? mesh.vertices[vertex].y : mesh.vertices[vertex].z)) += delta;
    };
    shift(+h);
    const double fp = f(mesh);
    shift(-2.0 * h);
    const double fm = f(mesh);
    shift(+h);
    return (fp - fm) / (2.0 * h);
}

inline double rel_error(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-10});
    return std::abs(got - want) / denom;
}

// Random rigid motion (rotation about a random axis plus translation).
struct RigidMotion {
    double r[3][3];
    Vec3 t;

    Vec3 apply(const Vec3 &p) const {
        return {r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t.x,
                r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t.y,
                r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t.z};
    }
};

inline RigidMotion random_rigid(relmesh::detail::Rng &rng) {
    Vec3 axis{rng.next_double() - 0.5, rng.next_double() - 0.5, rng.next_double() - 0.5};
    axis = axis / std::max(axis.norm(), 1e-9);
    const double angle = rng.next_double() * 6.283185307179586;
    const double c = std::cos(angle), s = std::sin(angle), ic = 1.0 - c;
    RigidMotion m;
    m.r[0][0] = c + axis.x * axis.x * ic;
    m.r[0][1] = axis.x * axis.y * ic - axis.z * s;
    m.r[0][2] = axis.x * axis.z * ic + axis.y * s;
    m.r[1][0] = axis.y * axis.x * ic + axis.z * s;
    m.r[1][1] = c + axis.y * axis.y * ic;
    m.r[1][2] = axis.y * axis.z * ic - axis.x * s;
    m.r[2][0] = axis.z * axis.x * ic - axis.y * s;
    m.r[2][1] = axis.z * axis.y * ic + axis.x * s;
    m.r[2][2] = c + axis.z * axis.z * ic;
    m.t = {rng.next_double() * 10.0 - 5.0, rng.next_double() * 10.0 - 5.0,
           rng.next_double() * 10.0 - 5.0};
    return m;
}

} // namespace oracles
