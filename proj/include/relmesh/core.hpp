// core.hpp — shared domain types: triangle meshes, label grids, relation
// rules, critical point sets, query batches, and the affine transforms
// between voxel index space and world space (millimeters).
//
// Conventions:
// - Faces are counter-clockwise when viewed from outside the surface.
// - Voxel grids are stored x-fastest; the affine maps index space to mm.
// - Lifted voxel points use the voxel CENTER (index + 0.5).
// - Class ID 0 is background; anatomical labels are 1..255.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace relmesh {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

    Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 &operator+=(const Vec3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3 &operator-=(const Vec3 &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3 &operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    Vec3 operator-() const { return {-x, -y, -z}; }

    double dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3 &o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3 &v) { return v * s; }

// 4x4 voxel-index-to-world matrix, row-major. Last row must be (0,0,0,1).
struct Affine {
    std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    static Affine identity() { return Affine{}; }

    static Affine scaling(double s) {
        Affine a;
        a.m[0] = a.m[5] = a.m[10] = s;
        return a;
    }

    double &at(int r, int c) { return m[r * 4 + c]; }
    double at(int r, int c) const { return m[r * 4 + c]; }

    Vec3 apply(const Vec3 &p) const {
        return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
    }

    bool last_row_valid() const {
        return m[12] == 0.0 && m[13] == 0.0 && m[14] == 0.0 && m[15] == 1.0;
    }

    double det3() const {
        return m[0] * (m[5] * m[10] - m[6] * m[9]) -
               m[1] * (m[4] * m[10] - m[6] * m[8]) +
               m[2] * (m[4] * m[9] - m[5] * m[8]);
    }

    // Inverse of the affine part; throws if the linear block is singular.
    Affine inverse() const {
        const double d = det3();
        if (std::abs(d) < 1e-12)
            throw std::invalid_argument("affine: linear block is singular");
        Affine inv;
        const double id = 1.0 / d;
        inv.m[0] = (m[5] * m[10] - m[6] * m[9]) * id;
        inv.m[1] = (m[2] * m[9] - m[1] * m[10]) * id;
        inv.m[2] = (m[1] * m[6] - m[2] * m[5]) * id;
        inv.m[4] = (m[6] * m[8] - m[4] * m[10]) * id;
        inv.m[5] = (m[0] * m[10] - m[2] * m[8]) * id;
        inv.m[6] = (m[2] * m[4] - m[0] * m[6]) * id;
        inv.m[8] = (m[4] * m[9] - m[5] * m[8]) * id;
        inv.m[9] = (m[1] * m[8] - m[0] * m[9]) * id;
        inv.m[10] = (m[0] * m[5] - m[1] * m[4]) * id;
        // translation: -R^{-1} t
        inv.m[3] = -(inv.m[0] * m[3] + inv.m[1] * m[7] + inv.m[2] * m[11]);
        inv.m[7] = -(inv.m[4] * m[3] + inv.m[5] * m[7] + inv.m[6] * m[11]);
        inv.m[11] = -(inv.m[8] * m[3] + inv.m[9] * m[7] + inv.m[10] * m[11]);
        return inv;
    }
};

// Indexed triangle surface for one anatomical structure. Vertex positions
// are world-space millimeters.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    int structure_label = 0;

    std::pair<Vec3, Vec3> bounding_box() const {
        Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
        for (const auto &v : vertices) {
            lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
            hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
        }
        return {lo, hi};
    }

    double bbox_diagonal() const {
        if (vertices.empty()) return 0.0;
        auto [lo, hi] = bounding_box();
        return (hi - lo).norm();
    }
};

// Faces below this area (mm^2) count as degenerate.
inline constexpr double kDegenerateAreaTol = 1e-12;

struct MeshValidation {
    bool watertight = false;
    int degenerate_faces = 0;
    int boundary_edges = 0;
};

inline double face_area(const TriMesh &mesh, const std::array<int, 3> &f) {
    const Vec3 e1 = mesh.vertices[f[1]] - mesh.vertices[f[0]];
    const Vec3 e2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
    return 0.5 * e1.cross(e2).norm();
}

inline void check_face_indices(const TriMesh &mesh) {
    const int n = static_cast<int>(mesh.vertices.size());
    for (const auto &f : mesh.faces)
        for (int idx : f)
            if (idx < 0 || idx >= n)
                throw std::out_of_range("mesh: face index out of range");
}

// Pure topological/geometric report. Watertight means every undirected edge
// has exactly two incident faces, one in each direction.
inline MeshValidation validate_mesh(const TriMesh &mesh) {
    check_face_indices(mesh);
    MeshValidation rep;
    std::map<std::pair<int, int>, std::pair<int, int>> edges; // (count, direction sum)
    for (const auto &f : mesh.faces) {
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2] ||
            face_area(mesh, f) <= kDegenerateAreaTol)
            ++rep.degenerate_faces;
        for (int e = 0; e < 3; ++e) {
            const int a = f[e], b = f[(e + 1) % 3];
            if (a == b) continue;
            auto &slot = edges[{std::min(a, b), std::max(a, b)}];
            slot.first += 1;
            slot.second += (a < b) ? 1 : -1;
        }
    }
    bool closed = !edges.empty();
    for (const auto &[key, slot] : edges) {
        if (slot.first == 1) ++rep.boundary_edges;
        if (slot.first != 2 || slot.second != 0) closed = false;
    }
    rep.watertight = closed;
    return rep;
}

// Dense voxel volume of class IDs, x-fastest, plus index-to-world affine.
struct LabelGrid {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<std::uint8_t> labels;
    Affine affine;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }

    bool in_bounds(int i, int j, int k) const {
        return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
    }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }

    std::uint8_t at(int i, int j, int k) const { return labels[index(i, j, k)]; }
};

inline void check_grid(const LabelGrid &grid) {
    if (grid.dims[0] <= 0 || grid.dims[1] <= 0 || grid.dims[2] <= 0)
        throw std::invalid_argument("grid: dims must be positive");
    if (grid.labels.size() != grid.voxel_count())
        throw std::invalid_argument("grid: label payload size does not match dims");
    if (!grid.affine.last_row_valid())
        throw std::invalid_argument("grid: affine last row must be (0,0,0,1)");
    if (std::abs(grid.affine.det3()) < 1e-12)
        throw std::invalid_argument("grid: affine linear block is singular");
}

// World position of the voxel CENTER (index + 0.5), in mm.
inline Vec3 voxel_to_world(const LabelGrid &grid, const std::array<int, 3> &ijk) {
    if (!grid.in_bounds(ijk[0], ijk[1], ijk[2]))
        throw std::out_of_range("voxel_to_world: index outside grid");
    return grid.affine.apply({ijk[0] + 0.5, ijk[1] + 0.5, ijk[2] + 0.5});
}

// Nearest voxel whose center maps to the given world position.
inline std::array<int, 3> world_to_voxel(const LabelGrid &grid, const Vec3 &world) {
    const Vec3 c = grid.affine.inverse().apply(world);
    return {static_cast<int>(std::lround(c.x - 0.5)),
            static_cast<int>(std::lround(c.y - 0.5)),
            static_cast<int>(std::lround(c.z - 0.5))};
}

// One inclusion/exclusion constraint between two structures.
// relation 1: subject must lie inside object. relation 0: no overlap/contact.
struct Rule {
    int subject = 0;
    int object = 0;
    int relation = 0;
};

struct RuleSet {
    std::vector<Rule> rules;

    std::size_t size() const { return rules.size(); }
    bool empty() const { return rules.empty(); }
};

inline void check_rules(const RuleSet &rs) {
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        const Rule &r = rs.rules[i];
        if (r.relation != 0 && r.relation != 1)
            throw std::invalid_argument("rules: relation must be 0 or 1");
        if (r.subject == r.object)
            throw std::invalid_argument("rules: subject and object must differ");
        for (std::size_t j = 0; j < i; ++j)
            if (rs.rules[j].subject == r.subject && rs.rules[j].object == r.object)
                throw std::invalid_argument("rules: duplicate subject/object pair");
    }
}

// World-space point lifted from a violation voxel. source_label is the grid
// label at that voxel; the rule it came from is rule_index.
struct CriticalPoint {
    Vec3 pos;
    std::uint8_t source_label = 0;
    int rule_index = 0;
};

struct CriticalPointSet {
    std::vector<CriticalPoint> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Labeled sample points ready for occupancy scoring. target is the ground
// truth occupancy relative to one subject structure (1 own-label, 0 other).
struct QueryBatch {
    std::vector<Vec3> points;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> is_critical;
    std::vector<std::uint8_t> target;

    std::size_t size() const { return points.size(); }

    void check() const {
        if (labels.size() != points.size() || is_critical.size() != points.size() ||
            target.size() != points.size())
            throw std::invalid_argument("query batch: per-point arrays differ in length");
        for (auto t : target)
            if (t > 1) throw std::invalid_argument("query batch: target must be 0 or 1");
        for (const auto &p : points)
            if (!p.finite()) throw std::invalid_argument("query batch: non-finite point");
    }
};

} // namespace relmesh
