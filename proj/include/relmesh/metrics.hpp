// metrics.hpp — evaluation-only measures: volumetric Dice, Chamfer and
// Hausdorff distances over surface samples, cotangent-Laplacian smoothness
// energy, and the violation-aware rates VR (thresholded fraction per rule)
// and SVR (mean violation score per rule), both summed over rules.
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "relmesh/core.hpp"
#include "relmesh/losses.hpp"
#include "relmesh/occupancy.hpp"
#include "relmesh/relations.hpp"

namespace relmesh {

// 2|A^B| / (|A|+|B|); two empty masks count as a perfect match.
inline double dsc(const BinaryGrid &pred, const BinaryGrid &gt) {
    if (pred.dims != gt.dims) throw std::invalid_argument("dsc: grid dims mismatch");
    std::size_t inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        const bool pa = pred.bits[i] != 0, pb = gt.bits[i] != 0;
        a += pa; b += pb; inter += (pa && pb);
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

// Symmetric Hausdorff distance between point sets (mm).
inline double hausdorff(const std::vector<Vec3> &p, const std::vector<Vec3> &q) {
    if (p.empty() || q.empty()) throw std::invalid_argument("hausdorff: empty point set");
    auto directed = [](const std::vector<Vec3> &from, const std::vector<Vec3> &to) {
        double worst = 0.0;
        for (const auto &a : from) {
            double best = 1e300;
            for (const auto &b : to) best = std::min(best, (a - b).norm2());
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::sqrt(std::max(directed(p, q), directed(q, p)));
}

// Occupancy of the mesh sampled at voxel centers, thresholded. Voxels well
// outside the mesh bounding box are outside a closed surface and are
// skipped.
inline BinaryGrid voxelize_mesh(const TriMesh &mesh, const LabelGrid &grid,
                                const OccupancyConfig &cfg = {}) {
    check_grid(grid);
    BinaryGrid out;
    out.dims = grid.dims;
    out.bits.assign(grid.voxel_count(), 0);
    if (mesh.vertices.empty()) return out;

    auto [lo, hi] = mesh.bounding_box();
    const double margin = std::max(0.05 * mesh.bbox_diagonal(), 2.0);
    lo -= Vec3{margin, margin, margin};
    hi += Vec3{margin, margin, margin};

    std::vector<Vec3> centers;
    std::vector<std::size_t> idx;
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const Vec3 c = voxel_to_world(grid, {i, j, k});
                if (c.x < lo.x || c.y < lo.y || c.z < lo.z ||
                    c.x > hi.x || c.y > hi.y || c.z > hi.z)
                    continue;
                centers.push_back(c);
                idx.push_back(grid.index(i, j, k));
            }
    const std::vector<double> occ = occupancy(mesh, centers, cfg);
    for (std::size_t t = 0; t < centers.size(); ++t)
        if (occ[t] > cfg.threshold) out.bits[idx[t]] = 1;
    return out;
}

// Cotangent-Laplacian smoothness energy. Every edge needs both opposite
// angles, so open meshes are rejected.
inline double lse(const TriMesh &mesh) {
    check_face_indices(mesh);
    std::map<std::pair<int, int>, std::vector<int>> opposite;
    for (const auto &f : mesh.faces)
        for (int e = 0; e < 3; ++e) {
            const int a = f[e], b = f[(e + 1) % 3], o = f[(e + 2) % 3];
            opposite[{std::min(a, b), std::max(a, b)}].push_back(o);
        }

    std::vector<std::map<int, double>> weights(mesh.vertices.size());
    for (const auto &[edge, opps] : opposite) {
        if (opps.size() != 2)
            throw std::invalid_argument("lse: boundary or non-manifold edge");
        double w = 0.0;
        for (int o : opps) {
            const Vec3 u = mesh.vertices[edge.first] - mesh.vertices[o];
            const Vec3 v = mesh.vertices[edge.second] - mesh.vertices[o];
            const double cross = u.cross(v).norm();
            if (cross > 1e-15) w += 0.5 * u.dot(v) / cross;
        }
        weights[edge.first][edge.second] = w;
        weights[edge.second][edge.first] = w;
    }

    double energy = 0.0;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        double wsum = 0.0;
        Vec3 acc{};
        for (const auto &[j, w] : weights[i]) {
            wsum += w;
            acc += w * mesh.vertices[j];
        }
        if (std::abs(wsum) < 1e-12) continue; // collapsed ring, no displacement defined
        const Vec3 d = mesh.vertices[i] - acc / wsum;
        energy += d.norm2();
    }
    return energy / static_cast<double>(mesh.vertices.size());
}

// Occupancy scores of one rule's critical points against the subject mesh.
inline std::vector<double> rule_scores(const TriMesh &subject_mesh,
                                       const std::vector<Vec3> &critical_points,
                                       const OccupancyConfig &cfg = {}) {
    if (critical_points.empty()) return {};
    return occupancy_score(subject_mesh, critical_points, cfg);
}

namespace detail {

inline std::vector<Vec3> rule_points(const CriticalPointSet &critical, int rule_index) {
    std::vector<Vec3> out;
    for (const auto &cp : critical.points)
        if (cp.rule_index == rule_index) out.push_back(cp.pos);
    return out;
}

// Per-rule violation terms; thresholded fraction and mean score.
struct RuleViolation {
    double fraction = 0.0; // VR contribution
    double mean_score = 0.0; // SVR contribution
    std::size_t count = 0;
};

inline RuleViolation rule_violation(const MeshMap &meshes, const CriticalPointSet &critical,
                                    const RuleSet &rules, std::size_t rule_index,
                                    const OccupancyConfig &cfg) {
    RuleViolation out;
    const std::vector<Vec3> pts = rule_points(critical, static_cast<int>(rule_index));
    out.count = pts.size();
    if (pts.empty()) return out;
    const Rule &rule = rules.rules[rule_index];
    auto it = meshes.find(rule.subject);
    if (it == meshes.end())
        throw std::invalid_argument("vr/svr: missing mesh for rule subject");
    const std::vector<double> scores = rule_scores(it->second, pts, cfg);
    std::size_t violating = 0;
    double acc = 0.0;
    for (double s : scores) {
        const double v = (rule.relation == 0) ? s : 1.0 - s;
        if (v > 0.5) ++violating;
        acc += v;
    }
    out.fraction = static_cast<double>(violating) / static_cast<double>(pts.size());
    out.mean_score = acc / static_cast<double>(pts.size());
    return out;
}

} // namespace detail

// Violation rate: per rule, the fraction of its critical points whose
// occupancy contradicts the relation; summed over rules. Rules with no
// critical points contribute zero.
inline double vr(const MeshMap &meshes, const CriticalPointSet &critical,
                 const RuleSet &rules, const OccupancyConfig &cfg = {}) {
    double total = 0.0;
    for (std::size_t r = 0; r < rules.rules.size(); ++r)
        total += detail::rule_violation(meshes, critical, rules, r, cfg).fraction;
    return total;
}

// Severity-weighted violation: per rule, the mean violation score without
// thresholding; summed over rules.
inline double svr(const MeshMap &meshes, const CriticalPointSet &critical,
                  const RuleSet &rules, const OccupancyConfig &cfg = {}) {
    double total = 0.0;
    for (std::size_t r = 0; r < rules.rules.size(); ++r)
        total += detail::rule_violation(meshes, critical, rules, r, cfg).mean_score;
    return total;
}

// ---------------------------------------------------------------------------
// full report

struct StructureMetrics {
    int label = 0;
    double dsc = 0.0;
    double cd = 0.0;  // mm^2
    double hd = 0.0;  // mm
    double lse = 0.0;
    double vr = 0.0;  // over rules whose subject is this structure
    double svr = 0.0;
};

struct MetricReport {
    std::vector<StructureMetrics> structures;
    StructureMetrics total; // column sums
    std::uint64_t seed = 0;
    std::size_t eval_samples = 0;
    double occupancy_threshold = 0.5;
    double sharpness = 10.0;
    double vr_per_rule_mean = 0.0;  // normalized companions to the rule sums
    double svr_per_rule_mean = 0.0;
};

// Assembles the per-structure table. references holds the surface sample
// points each structure's CD/HD is measured against; predicted surfaces are
// sampled here with the report seed.
inline MetricReport build_metric_report(const MeshMap &meshes, const LabelGrid &grid,
                                        const RuleSet &rules,
                                        const std::map<int, std::vector<Vec3>> &references,
                                        const OccupancyConfig &cfg = {},
                                        std::uint64_t seed = 0,
                                        std::size_t eval_samples = 5000) {
    check_grid(grid);
    check_rules(rules);
    const CriticalPointSet critical = critical_points(grid, rules);

    MetricReport rep;
    rep.seed = seed;
    rep.eval_samples = eval_samples;
    rep.occupancy_threshold = cfg.threshold;
    rep.sharpness = cfg.sharpness;

    for (const auto &[label, mesh] : meshes) {
        StructureMetrics m;
        m.label = label;
        m.dsc = dsc(voxelize_mesh(mesh, grid, cfg), label_mask(grid, label));
        auto ref = references.find(label);
        if (ref != references.end() && !ref->second.empty()) {
            detail::Rng rng = detail::Rng(seed).derive(
                {0x6d657472ull, static_cast<std::uint64_t>(label)}); // "metr"
            const SurfaceSamples ss = sample_surface(mesh, eval_samples, rng);
            const std::vector<Vec3> pred = surface_sample_positions(mesh, ss);
            m.cd = chamfer(pred, ref->second);
            m.hd = hausdorff(pred, ref->second);
        }
        m.lse = lse(mesh);
        for (std::size_t r = 0; r < rules.rules.size(); ++r) {
            if (rules.rules[r].subject != label) continue;
            const auto rv = detail::rule_violation(meshes, critical, rules, r, cfg);
            m.vr += rv.fraction;
            m.svr += rv.mean_score;
        }
        rep.structures.push_back(m);
    }

    for (const auto &m : rep.structures) {
        rep.total.dsc += m.dsc;
        rep.total.cd += m.cd;
        rep.total.hd += m.hd;
        rep.total.lse += m.lse;
        rep.total.vr += m.vr;
        rep.total.svr += m.svr;
    }
    if (!rules.rules.empty()) {
        rep.vr_per_rule_mean = rep.total.vr / static_cast<double>(rules.rules.size());
        rep.svr_per_rule_mean = rep.total.svr / static_cast<double>(rules.rules.size());
    }
    return rep;
}

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline std::string report_to_csv(const MetricReport &rep) {
    std::string out = "structure,dsc,cd,hd,lse,vr,svr,seed\n";
    auto row = [&](const std::string &name, const StructureMetrics &m) {
        out += name + ',' + detail::fmt_g17(m.dsc) + ',' + detail::fmt_g17(m.cd) + ',' +
               detail::fmt_g17(m.hd) + ',' + detail::fmt_g17(m.lse) + ',' +
               detail::fmt_g17(m.vr) + ',' + detail::fmt_g17(m.svr) + ',' +
               std::to_string(rep.seed) + '\n';
    };
    for (const auto &m : rep.structures) row(std::to_string(m.label), m);
    row("Sum", rep.total);
    return out;
}

inline std::string report_to_json(const MetricReport &rep) {
    std::string out = "{\n  \"structures\": [\n";
    auto obj = [&](const StructureMetrics &m) {
        return std::string("{\"label\": ") + std::to_string(m.label) +
               ", \"dsc\": " + detail::fmt_g17(m.dsc) + ", \"cd\": " + detail::fmt_g17(m.cd) +
               ", \"hd\": " + detail::fmt_g17(m.hd) + ", \"lse\": " + detail::fmt_g17(m.lse) +
               ", \"vr\": " + detail::fmt_g17(m.vr) + ", \"svr\": " + detail::fmt_g17(m.svr) + "}";
    };
    for (std::size_t i = 0; i < rep.structures.size(); ++i)
        out += "    " + obj(rep.structures[i]) + (i + 1 < rep.structures.size() ? ",\n" : "\n");
    out += "  ],\n  \"sum\": " + obj(rep.total) + ",\n";
    out += "  \"metadata\": {\"seed\": " + std::to_string(rep.seed) +
           ", \"eval_samples\": " + std::to_string(rep.eval_samples) +
           ", \"occupancy_threshold\": " + detail::fmt_g17(rep.occupancy_threshold) +
           ", \"sharpness\": " + detail::fmt_g17(rep.sharpness) +
           ", \"vr_per_rule_mean\": " + detail::fmt_g17(rep.vr_per_rule_mean) +
           ", \"svr_per_rule_mean\": " + detail::fmt_g17(rep.svr_per_rule_mean) + "}\n}\n";
    return out;
}

} // namespace relmesh
