// synth.hpp — synthetic multi-chamber phantoms with controllable violations.
// Label grids are rasterized from sphere/ellipsoid primitives, later entries
// overwriting earlier ones, so grids stay single-label like clinical masks.
// Violation injections translate the subject primitive before rasterization:
//   overlap  — toward the object until the supports interpenetrate by
//              `magnitude` mm along the center line;
//   leakage  — along the object-to-subject axis until the subject pokes
//              `magnitude` mm beyond the object's outer surface;
//   gap      — directly away from the object by `magnitude` mm.
// Magnitude 0 always means "no injection".
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "relmesh/core.hpp"

namespace relmesh {

struct Primitive {
    Vec3 center;       // mm
    Vec3 radii;        // mm; equal components for a sphere
    int label = 0;     // 0 carves background
};

enum class ViolationType { Overlap, Leakage, Gap };

struct ViolationSpec {
    ViolationType type = ViolationType::Overlap;
    double magnitude = 0.0; // mm
    int subject = 0;
    int object = 0;
};

struct PhantomSpec {
    std::array<int, 3> dims{64, 64, 64};
    double voxel_mm = 1.0;
    std::vector<Primitive> structures;
    std::vector<ViolationSpec> violations;

    void check() const {
        if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
            throw std::invalid_argument("phantom: dims must be positive");
        if (!(voxel_mm > 0.0)) throw std::invalid_argument("phantom: voxel size must be positive");
        std::vector<int> seen;
        for (const auto &p : structures) {
            if (!(p.radii.x > 0.0 && p.radii.y > 0.0 && p.radii.z > 0.0))
                throw std::invalid_argument("phantom: radii must be positive");
            for (int s : seen)
                if (s == p.label) throw std::invalid_argument("phantom: duplicate structure label");
            seen.push_back(p.label);
        }
        for (const auto &v : violations) {
            if (v.magnitude < 0.0)
                throw std::invalid_argument("phantom: violation magnitude must be >= 0");
            if (v.subject == v.object)
                throw std::invalid_argument("phantom: violation subject equals object");
        }
    }
};

namespace detail {

inline bool inside_primitive(const Primitive &p, const Vec3 &q) {
    const Vec3 d = q - p.center;
    const double f = (d.x / p.radii.x) * (d.x / p.radii.x) +
                     (d.y / p.radii.y) * (d.y / p.radii.y) +
                     (d.z / p.radii.z) * (d.z / p.radii.z);
    return f <= 1.0;
}

// Support radius of an ellipsoid along a unit direction.
inline double support_radius(const Primitive &p, const Vec3 &u) {
    const double q = (u.x / p.radii.x) * (u.x / p.radii.x) +
                     (u.y / p.radii.y) * (u.y / p.radii.y) +
                     (u.z / p.radii.z) * (u.z / p.radii.z);
    return 1.0 / std::sqrt(q);
}

inline Primitive *find_primitive(std::vector<Primitive> &prims, int label) {
    for (auto &p : prims)
        if (p.label == label) return &p;
    return nullptr;
}

// Subject translation realizing one injection.
inline Vec3 injection_shift(const Primitive &subject, const Primitive &object,
                            const ViolationSpec &v) {
    if (v.magnitude == 0.0) return {};
    Vec3 axis = object.center - subject.center;
    double d = axis.norm();
    Vec3 u = (d > 1e-12) ? axis / d : Vec3{1, 0, 0};
    switch (v.type) {
    case ViolationType::Overlap: {
        const double gap = d - support_radius(subject, u) - support_radius(object, u * -1.0);
        return u * (std::max(gap, 0.0) + v.magnitude);
    }
    case ViolationType::Leakage: {
        // push outward along the object->subject axis until the far surface
        // clears the object's outer surface by `magnitude`
        Vec3 out_dir = (d > 1e-12) ? u * -1.0 : Vec3{1, 0, 0};
        const double subject_far = (subject.center - object.center).dot(out_dir) +
                                   support_radius(subject, out_dir);
        const double clearance = support_radius(object, out_dir) - subject_far;
        return out_dir * (std::max(clearance, 0.0) + v.magnitude);
    }
    case ViolationType::Gap:
        return u * (-v.magnitude);
    }
    return {};
}

} // namespace detail

// Subject primitives after applying all injections; exposed so template
// corruption can reuse the same displacements.
inline std::vector<Primitive> injected_primitives(const PhantomSpec &spec) {
    spec.check();
    std::vector<Primitive> prims = spec.structures;
    for (const auto &v : spec.violations) {
        Primitive *subj = detail::find_primitive(prims, v.subject);
        Primitive *obj = detail::find_primitive(prims, v.object);
        if (!subj || !obj)
            throw std::invalid_argument("phantom: violation references unknown label");
        subj->center += detail::injection_shift(*subj, *obj, v);
    }
    return prims;
}

// Rasterize the (injected) primitives: each voxel takes the label of the
// last primitive containing its center. The seed is reserved for future
// stochastic phantoms; generation is currently deterministic.
inline LabelGrid generate(const PhantomSpec &spec, std::uint64_t /*seed*/ = 0) {
    const std::vector<Primitive> prims = injected_primitives(spec);

    LabelGrid grid;
    grid.dims = spec.dims;
    grid.affine = Affine::scaling(spec.voxel_mm);
    grid.labels.assign(grid.voxel_count(), 0);

    const Vec3 world_max{spec.dims[0] * spec.voxel_mm, spec.dims[1] * spec.voxel_mm,
                         spec.dims[2] * spec.voxel_mm};
    for (const auto &p : prims) {
        if (p.center.x - p.radii.x < 0.0 || p.center.y - p.radii.y < 0.0 ||
            p.center.z - p.radii.z < 0.0 || p.center.x + p.radii.x > world_max.x ||
            p.center.y + p.radii.y > world_max.y || p.center.z + p.radii.z > world_max.z)
            throw std::invalid_argument("phantom: primitive (after injections) outside grid");
    }

    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const Vec3 c = voxel_to_world(grid, {i, j, k});
                for (const auto &p : prims)
                    if (detail::inside_primitive(p, c))
                        grid.labels[grid.index(i, j, k)] = static_cast<std::uint8_t>(p.label);
            }
    return grid;
}

// ---------------------------------------------------------------------------
// icosphere

// Watertight icosphere: 10*4^subdiv + 2 vertices, all at exact radius.
inline TriMesh icosphere(int subdiv, double radius, const Vec3 &center = {}) {
    if (subdiv < 0 || subdiv > 6)
        throw std::invalid_argument("icosphere: subdivision level must be in [0,6]");
    if (!(radius > 0.0)) throw std::invalid_argument("icosphere: radius must be positive");

    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh mesh;
    mesh.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                     {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                     {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                  {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                  {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto &v : mesh.vertices) v = v / v.norm();

    for (int level = 0; level < subdiv; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
            m = m / m.norm();
            mesh.vertices.push_back(m);
            const int idx = static_cast<int>(mesh.vertices.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(mesh.faces.size() * 4);
        for (const auto &f : mesh.faces) {
            const int m01 = mid(f[0], f[1]);
            const int m12 = mid(f[1], f[2]);
            const int m20 = mid(f[2], f[0]);
            next.push_back({f[0], m01, m20});
            next.push_back({f[1], m12, m01});
            next.push_back({f[2], m20, m12});
            next.push_back({m01, m12, m20});
        }
        mesh.faces = std::move(next);
    }

    for (auto &v : mesh.vertices) v = v * radius + center;
    return mesh;
}

// ---------------------------------------------------------------------------
// cardiac preset

// Three structures in a 64^3 1 mm grid: an LV sphere and an RV ellipsoid
// side by side inside the cavity of a thick spherical myocardium shell.
// Rules: LV inside Myo; LV and RV disjoint; RV and Myo disjoint.
inline constexpr int kPresetLV = 1;
inline constexpr int kPresetRV = 2;
inline constexpr int kPresetMyo = 3;

inline std::pair<PhantomSpec, RuleSet> cardiac_preset() {
    PhantomSpec spec;
    spec.dims = {64, 64, 64};
    spec.voxel_mm = 1.0;
    const Vec3 c{32.0, 32.0, 32.0};
    spec.structures = {
        {c, {17.5, 17.5, 17.5}, kPresetMyo},             // outer myocardium ball
        {c, {13.5, 13.5, 13.5}, 0},                      // carve the cavity
        {c + Vec3{-6.5, 0, 0}, {6.5, 6.5, 6.5}, kPresetLV},
        {c + Vec3{6.5, 0, 0}, {4.5, 5.0, 5.0}, kPresetRV},
    };
    RuleSet rules;
    rules.rules = {{kPresetLV, kPresetMyo, 1}, {kPresetLV, kPresetRV, 0},
                   {kPresetRV, kPresetMyo, 0}};
    return {spec, rules};
}

} // namespace relmesh
