// relations.hpp — voxel-level rule checking. Extracts violation voxels from
// a label grid under inclusion/exclusion rules, lifts them to world-space
// critical points, and assembles per-rule positive/negative sample pools.
//
// Exclusion (relation 0): subject voxels overlapping or face-adjacent to the
// object support violate. Inclusion (relation 1): subject voxels outside the
// dilated, hole-filled object support violate — "outside" means reachable
// from the grid boundary without crossing the object, so the cavity of a
// closed shell counts as inside.
#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "relmesh/core.hpp"
#include "relmesh/occupancy.hpp"

namespace relmesh {

struct BinaryGrid {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<std::uint8_t> bits;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }

    bool at(int i, int j, int k) const { return bits[index(i, j, k)] != 0; }

    std::size_t popcount() const {
        std::size_t n = 0;
        for (auto b : bits) n += (b != 0);
        return n;
    }
};

inline BinaryGrid label_mask(const LabelGrid &grid, int label) {
    BinaryGrid out;
    out.dims = grid.dims;
    out.bits.resize(grid.voxel_count());
    for (std::size_t i = 0; i < out.bits.size(); ++i)
        out.bits[i] = (grid.labels[i] == label) ? 1 : 0;
    return out;
}

namespace detail {

// Binary dilation by the 6-connected kernel including the center voxel.
// Out-of-grid neighbors are background.
inline BinaryGrid dilate6(const BinaryGrid &mask) {
    BinaryGrid out;
    out.dims = mask.dims;
    out.bits.assign(mask.voxel_count(), 0);
    const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                if (!mask.at(i, j, k)) continue;
                out.bits[out.index(i, j, k)] = 1;
                if (i > 0) out.bits[out.index(i - 1, j, k)] = 1;
                if (i + 1 < nx) out.bits[out.index(i + 1, j, k)] = 1;
                if (j > 0) out.bits[out.index(i, j - 1, k)] = 1;
                if (j + 1 < ny) out.bits[out.index(i, j + 1, k)] = 1;
                if (k > 0) out.bits[out.index(i, j, k - 1)] = 1;
                if (k + 1 < nz) out.bits[out.index(i, j, k + 1)] = 1;
            }
    return out;
}

// Mask plus any cavities it encloses: a voxel is outside only if a
// 6-connected path of non-mask voxels links it to the grid boundary.
inline BinaryGrid fill_holes6(const BinaryGrid &mask) {
    const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
    std::vector<std::uint8_t> outside(mask.voxel_count(), 0);
    std::vector<std::array<int, 3>> stack;
    auto push = [&](int i, int j, int k) {
        const std::size_t idx = mask.index(i, j, k);
        if (!outside[idx] && !mask.bits[idx]) {
            outside[idx] = 1;
            stack.push_back({i, j, k});
        }
    };
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if (i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1)
                    push(i, j, k);
    while (!stack.empty()) {
        auto [i, j, k] = stack.back();
        stack.pop_back();
        if (i > 0) push(i - 1, j, k);
        if (i + 1 < nx) push(i + 1, j, k);
        if (j > 0) push(i, j - 1, k);
        if (j + 1 < ny) push(i, j + 1, k);
        if (k > 0) push(i, j, k - 1);
        if (k + 1 < nz) push(i, j, k + 1);
    }
    BinaryGrid out;
    out.dims = mask.dims;
    out.bits.resize(mask.voxel_count());
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
    return out;
}

} // namespace detail

// Support of label_j thickened by one 6-connected step (center included).
inline BinaryGrid neighborhood_overlap(const LabelGrid &grid, int label_j) {
    check_grid(grid);
    return detail::dilate6(label_mask(grid, label_j));
}

// Violation voxels of one rule. Empty masks are valid and yield all-false.
inline BinaryGrid violation_map(const LabelGrid &grid, const Rule &rule) {
    check_grid(grid);
    if (rule.relation != 0 && rule.relation != 1)
        throw std::invalid_argument("violation_map: relation must be 0 or 1");
    if (rule.subject == rule.object)
        throw std::invalid_argument("violation_map: subject equals object");
    const BinaryGrid subject = label_mask(grid, rule.subject);
    BinaryGrid region;
    if (rule.relation == 0) {
        region = detail::dilate6(label_mask(grid, rule.object)); // contact zone
    } else {
        region = detail::dilate6(detail::fill_holes6(label_mask(grid, rule.object)));
        for (auto &b : region.bits) b = b ? 0 : 1; // exterior of the object
    }
    BinaryGrid out;
    out.dims = grid.dims;
    out.bits.resize(grid.voxel_count());
    for (std::size_t i = 0; i < out.bits.size(); ++i)
        out.bits[i] = (subject.bits[i] && region.bits[i]) ? 1 : 0;
    return out;
}

// Union of all rules' violation voxels lifted to world-space centers.
// Scan order: rule-major, then x-fastest over the grid.
inline CriticalPointSet critical_points(const LabelGrid &grid, const RuleSet &rules) {
    check_grid(grid);
    check_rules(rules);
    CriticalPointSet out;
    for (std::size_t r = 0; r < rules.rules.size(); ++r) {
        const BinaryGrid vio = violation_map(grid, rules.rules[r]);
        for (int k = 0; k < grid.dims[2]; ++k)
            for (int j = 0; j < grid.dims[1]; ++j)
                for (int i = 0; i < grid.dims[0]; ++i)
                    if (vio.at(i, j, k))
                        out.points.push_back({voxel_to_world(grid, {i, j, k}),
                                              grid.at(i, j, k), static_cast<int>(r)});
    }
    return out;
}

// Positive/negative pools for one rule and its subject mesh.
struct RuleSamplePools {
    std::vector<Vec3> positives;
    std::vector<std::uint8_t> positives_critical;
    std::vector<Vec3> negatives;
    std::vector<std::uint8_t> negatives_critical;
    int rule_index = -1;
};

// Which grid label selects a rule's critical points out of the full set.
// ObjectLabelThenSubject follows the loss assembly as written (filter on the
// object label) and falls back to the subject label when that is empty —
// violation voxels live inside the subject support, so the fallback is what
// usually fires. SubjectLabel filters on the subject label directly.
enum class CriticalFilter { ObjectLabelThenSubject, SubjectLabel };

namespace detail {

inline std::vector<Vec3> filter_critical(const CriticalPointSet &set, int label) {
    std::vector<Vec3> out;
    for (const auto &cp : set.points)
        if (cp.source_label == label) out.push_back(cp.pos);
    return out;
}

} // namespace detail

// Base pools come from the query batch labels; critical points are routed by
// the rule type. Inclusion routes each selected critical point by the
// subject mesh's current occupancy (inside -> positive), exclusion sends all
// of them to the negatives.
inline RuleSamplePools assemble_rule_pools(const QueryBatch &batch,
                                           const CriticalPointSet &critical,
                                           const Rule &rule, int rule_index,
                                           const TriMesh &subject_mesh,
                                           const OccupancyConfig &occ_cfg = {},
                                           CriticalFilter filter = CriticalFilter::ObjectLabelThenSubject) {
    batch.check();
    if (subject_mesh.structure_label != rule.subject)
        throw std::invalid_argument("assemble_rule_pools: mesh label does not match rule subject");

    RuleSamplePools pools;
    pools.rule_index = rule_index;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.labels[i] == rule.subject) {
            pools.positives.push_back(batch.points[i]);
            pools.positives_critical.push_back(0);
        } else {
            pools.negatives.push_back(batch.points[i]);
            pools.negatives_critical.push_back(0);
        }
    }

    std::vector<Vec3> selected = detail::filter_critical(critical, rule.object);
    if (filter == CriticalFilter::SubjectLabel ||
        (filter == CriticalFilter::ObjectLabelThenSubject && selected.empty()))
        selected = detail::filter_critical(critical, rule.subject);

    if (!selected.empty()) {
        if (rule.relation == 1) {
            const std::vector<double> occ = occupancy(subject_mesh, selected, occ_cfg);
            for (std::size_t i = 0; i < selected.size(); ++i) {
                if (occ[i] > occ_cfg.threshold) {
                    pools.positives.push_back(selected[i]);
                    pools.positives_critical.push_back(1);
                } else {
                    pools.negatives.push_back(selected[i]);
                    pools.negatives_critical.push_back(1);
                }
            }
        } else {
            for (const auto &p : selected) {
                pools.negatives.push_back(p);
                pools.negatives_critical.push_back(1);
            }
        }
    }
    return pools;
}

} // namespace relmesh
