// deform.hpp — direct gradient-based template fitting. Replaces a neural
// deformation model at desk scale: icosphere templates are initialized from
// the label grid and their vertices follow adaptive-moment (Adam) steps on
// the configured loss mix. Connectivity never changes.
//
// Query batches are regenerated every iteration (stratified voxel-center
// subsample per label, background included, critical voxels excluded so the
// pools stay disjoint from the rule supervision). Critical points come from
// the fixed ground-truth grid once; the per-iteration inclusion routing is
// recomputed inside the loss because it depends on the current mesh.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "relmesh/core.hpp"
#include "relmesh/detail/rng.hpp"
#include "relmesh/losses.hpp"
#include "relmesh/metrics.hpp"
#include "relmesh/relations.hpp"
#include "relmesh/synth.hpp"

namespace relmesh {

struct OptimConfig {
    int iterations = 500;
    double step = 1e-2;          // mm-scaled Adam step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights weights{0.0, 0.0, 1.0};
    SamplingConfig sampling;
    OccupancyConfig occ;
    std::size_t chamfer_samples = 5000;
    CriticalFilter filter = CriticalFilter::ObjectLabelThenSubject;
    double convergence_rel = 1e-5;
    int convergence_window = 20;

    void check() const {
        if (iterations < 0) throw std::invalid_argument("optim: iterations must be >= 0");
        if (!(step > 0.0)) throw std::invalid_argument("optim: step must be positive");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            throw std::invalid_argument("optim: moment decays must lie in (0,1)");
        weights.check();
        sampling.check();
        occ.check();
    }
};

struct TraceRecord {
    int iteration = 0;
    double total = 0.0;
    double mie = 0.0;
    double occ = 0.0;
    double chamfer = 0.0;
    double smooth = 0.0;
    double vr = 0.0;
    double svr = 0.0;
    double max_displacement = 0.0;
};

struct OptimTrace {
    std::vector<TraceRecord> records;
    bool aborted = false;       // NaN loss encountered
    bool converged = false;
    std::string abort_reason;
};

struct OptimResult {
    MeshMap meshes;
    OptimTrace trace;
};

// ---------------------------------------------------------------------------
// template initialization

// Volume-matched icosphere per structure, centered on the label's voxel
// centroid. Deliberately crude: the optimizer has to do the rest.
inline MeshMap init_templates(const LabelGrid &grid, const RuleSet &rules, int subdiv = 3) {
    check_grid(grid);
    check_rules(rules);

    std::map<int, std::pair<Vec3, std::size_t>> stats; // label -> (centroid sum, count)
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const int label = grid.at(i, j, k);
                if (label == 0) continue;
                auto &s = stats[label];
                s.first += voxel_to_world(grid, {i, j, k});
                s.second += 1;
            }
    for (const auto &rule : rules.rules)
        for (int label : {rule.subject, rule.object})
            if (!stats.count(label))
                throw std::invalid_argument("init_templates: rule label absent from grid");

    const double voxel_volume = std::abs(grid.affine.det3());
    MeshMap out;
    for (const auto &[label, s] : stats) {
        const Vec3 centroid = s.first / static_cast<double>(s.second);
        const double volume = static_cast<double>(s.second) * voxel_volume;
        const double radius = std::cbrt(3.0 * volume / (4.0 * 3.14159265358979323846));
        TriMesh mesh = icosphere(subdiv, radius, centroid);
        mesh.structure_label = label;
        out.emplace(label, std::move(mesh));
    }
    return out;
}

// Templates displaced into violation: overlap subjects get pushed toward
// their object, leakage subjects outward, so runs start with positive VR.
inline MeshMap corrupted_templates(const LabelGrid &grid, const RuleSet &rules,
                                   const PhantomSpec &spec, int subdiv = 3) {
    MeshMap out = init_templates(grid, rules, subdiv);
    for (const auto &v : spec.violations) {
        if (v.magnitude == 0.0 || v.type == ViolationType::Gap) continue;
        auto subj = out.find(v.subject);
        auto obj = out.find(v.object);
        if (subj == out.end() || obj == out.end()) continue;
        auto centroid = [](const TriMesh &m) {
            Vec3 c{};
            for (const auto &p : m.vertices) c += p;
            return c / static_cast<double>(m.vertices.size());
        };
        Vec3 axis = centroid(obj->second) - centroid(subj->second);
        const double d = axis.norm();
        Vec3 u = (d > 1e-12) ? axis / d : Vec3{1, 0, 0};
        if (v.type == ViolationType::Leakage) u = u * -1.0;
        const Vec3 shift = u * (v.magnitude + 2.0);
        for (auto &p : subj->second.vertices) p += shift;
    }
    return out;
}

// ---------------------------------------------------------------------------
// per-iteration query batches

namespace detail {

inline BinaryGrid union_violation_mask(const LabelGrid &grid, const RuleSet &rules) {
    BinaryGrid mask;
    mask.dims = grid.dims;
    mask.bits.assign(grid.voxel_count(), 0);
    for (const auto &rule : rules.rules) {
        const BinaryGrid vio = violation_map(grid, rule);
        for (std::size_t i = 0; i < mask.bits.size(); ++i)
            if (vio.bits[i]) mask.bits[i] = 1;
    }
    return mask;
}

struct StratifiedSource {
    std::vector<int> labels;                       // strata, ascending incl. background
    std::vector<std::vector<std::size_t>> voxels;  // linear voxel indices per stratum
};

inline StratifiedSource build_strata(const LabelGrid &grid, const BinaryGrid &exclude) {
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
        if (exclude.bits[i]) continue;
        by_label[grid.labels[i]].push_back(i);
    }
    StratifiedSource src;
    for (auto &[label, voxels] : by_label) {
        src.labels.push_back(label);
        src.voxels.push_back(std::move(voxels));
    }
    return src;
}

inline QueryBatch stratified_batch(const LabelGrid &grid, const StratifiedSource &src,
                                   std::size_t per_stratum, Rng &rng) {
    QueryBatch q;
    for (std::size_t s = 0; s < src.labels.size(); ++s) {
        const auto &pool = src.voxels[s];
        const std::size_t take = std::min(per_stratum, pool.size());
        Rng stream = rng.derive({0x7374726154ull, static_cast<std::uint64_t>(src.labels[s])});
        for (std::size_t idx : sample_indices(pool.size(), take, stream)) {
            const std::size_t lin = pool[idx];
            const int nx = grid.dims[0], ny = grid.dims[1];
            const int i = static_cast<int>(lin % nx);
            const int j = static_cast<int>((lin / nx) % ny);
            const int k = static_cast<int>(lin / (static_cast<std::size_t>(nx) * ny));
            q.points.push_back(voxel_to_world(grid, {i, j, k}));
            q.labels.push_back(static_cast<std::uint8_t>(src.labels[s]));
            q.is_critical.push_back(0);
            q.target.push_back(src.labels[s] != 0);
        }
    }
    return q;
}

} // namespace detail

// ---------------------------------------------------------------------------
// optimization

using IterationSink = std::function<void(const TraceRecord &, const MeshMap &)>;

// Adam on vertex positions under the configured loss mix. references feed
// the chamfer component (required iff its weight is positive). The sink, if
// set, sees every recorded iteration (for trace streaming / checkpoints).
inline OptimResult optimize(const MeshMap &templates, const LabelGrid &grid,
                            const RuleSet &rules, const OptimConfig &cfg,
                            const std::map<int, std::vector<Vec3>> &references = {},
                            const IterationSink &sink = nullptr) {
    cfg.check();
    check_grid(grid);
    check_rules(rules);
    for (const auto &rule : rules.rules)
        if (!templates.count(rule.subject))
            throw std::invalid_argument("optimize: no template for rule subject");

    OptimResult result;
    result.meshes = templates;
    if (cfg.iterations == 0) return result;

    const CriticalPointSet critical = critical_points(grid, rules);
    const BinaryGrid exclude = detail::union_violation_mask(grid, rules);
    const detail::StratifiedSource strata = detail::build_strata(grid, exclude);

    std::map<int, std::vector<Vec3>> adam_m, adam_v;
    for (const auto &[label, mesh] : result.meshes) {
        adam_m[label].assign(mesh.vertices.size(), Vec3{});
        adam_v[label].assign(mesh.vertices.size(), Vec3{});
    }

    TotalLossConfig loss_cfg;
    loss_cfg.weights = cfg.weights;
    loss_cfg.sampling = cfg.sampling;
    loss_cfg.occupancy = cfg.occ;
    loss_cfg.chamfer_samples = cfg.chamfer_samples;
    loss_cfg.filter = cfg.filter;

    const detail::Rng master(cfg.sampling.seed);
    std::vector<double> loss_history;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        detail::Rng iter_rng = master.derive({0x69746572ull, static_cast<std::uint64_t>(iter)});
        loss_cfg.sampling.seed = iter_rng.next_u64();

        detail::Rng q_rng = master.derive({0x71626174ull, static_cast<std::uint64_t>(iter)});
        const QueryBatch q = detail::stratified_batch(grid, strata, cfg.sampling.n, q_rng);

        const PreparedTotalLoss prepared =
            prepare_total_loss(result.meshes, q, critical, rules, references, loss_cfg);
        const LossValue lv = eval_total_loss(result.meshes, prepared, references, loss_cfg);

        TraceRecord rec;
        rec.iteration = iter;
        rec.total = lv.value;
        rec.mie = lv.components.mie;
        rec.occ = lv.components.occ;
        rec.chamfer = lv.components.chamfer;
        rec.smooth = lv.components.smooth;
        rec.vr = vr(result.meshes, critical, rules, cfg.occ);
        rec.svr = svr(result.meshes, critical, rules, cfg.occ);

        if (!std::isfinite(lv.value)) {
            result.trace.aborted = true;
            result.trace.abort_reason = "non-finite loss at iteration " + std::to_string(iter);
            result.trace.records.push_back(rec);
            if (sink) sink(rec, result.meshes);
            return result;
        }

        // Adam step with bias correction
        const double t = static_cast<double>(iter + 1);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        double max_disp = 0.0;
        for (auto &[label, mesh] : result.meshes) {
            const auto &g = lv.gradients.at(label);
            auto &m = adam_m[label];
            auto &v = adam_v[label];
            for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i].x = cfg.beta2 * v[i].x + (1.0 - cfg.beta2) * g[i].x * g[i].x;
                v[i].y = cfg.beta2 * v[i].y + (1.0 - cfg.beta2) * g[i].y * g[i].y;
                v[i].z = cfg.beta2 * v[i].z + (1.0 - cfg.beta2) * g[i].z * g[i].z;
                const Vec3 mh = m[i] / bc1;
                const Vec3 vh = v[i] / bc2;
                const Vec3 step{cfg.step * mh.x / (std::sqrt(vh.x) + cfg.adam_eps),
                                cfg.step * mh.y / (std::sqrt(vh.y) + cfg.adam_eps),
                                cfg.step * mh.z / (std::sqrt(vh.z) + cfg.adam_eps)};
                mesh.vertices[i] -= step;
                max_disp = std::max(max_disp, step.norm());
            }
        }
        rec.max_displacement = max_disp;
        result.trace.records.push_back(rec);
        if (sink) sink(rec, result.meshes);

        loss_history.push_back(lv.value);
        const int w = cfg.convergence_window;
        if (static_cast<int>(loss_history.size()) > w) {
            const double before = loss_history[loss_history.size() - 1 - w];
            const double rel = std::abs(lv.value - before) / std::max(std::abs(before), 1e-12);
            if (rel < cfg.convergence_rel) {
                result.trace.converged = true;
                break;
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// ablation arms

struct ArmConfig {
    std::string name;
    LossWeights weights;
    double rho = 0.0;
};

// The five standard supervision arms.
inline ArmConfig arm_config(const std::string &name) {
    if (name == "chamfer") return {name, {1.0, 0.0, 0.0}, 0.0};
    if (name == "occ") return {name, {0.0, 1.0, 0.0}, 0.0};
    if (name == "occ02") return {name, {0.0, 1.0, 0.0}, 0.2};
    if (name == "mie") return {name, {0.0, 0.0, 1.0}, 0.0};
    if (name == "mie02") return {name, {0.0, 0.0, 1.0}, 0.2};
    throw std::invalid_argument("unknown arm: " + name);
}

struct ArmStats {
    StructureMetrics mean; // of the report totals across seeds
    StructureMetrics stddev;
};

struct ArmResult {
    ArmConfig arm;
    std::vector<MetricReport> reports; // one per seed
    std::vector<OptimTrace> traces;
    ArmStats stats;
};

namespace detail {

inline ArmStats aggregate(const std::vector<MetricReport> &reports) {
    ArmStats out;
    const double n = static_cast<double>(reports.size());
    auto fold = [&](auto get, double &mean, double &stddev) {
        double s = 0.0, s2 = 0.0;
        for (const auto &r : reports) {
            const double v = get(r.total);
            s += v;
            s2 += v * v;
        }
        mean = s / n;
        stddev = (reports.size() > 1) ? std::sqrt(std::max(0.0, s2 / n - mean * mean)) : 0.0;
    };
    fold([](const StructureMetrics &m) { return m.dsc; }, out.mean.dsc, out.stddev.dsc);
    fold([](const StructureMetrics &m) { return m.cd; }, out.mean.cd, out.stddev.cd);
    fold([](const StructureMetrics &m) { return m.hd; }, out.mean.hd, out.stddev.hd);
    fold([](const StructureMetrics &m) { return m.lse; }, out.mean.lse, out.stddev.lse);
    fold([](const StructureMetrics &m) { return m.vr; }, out.mean.vr, out.stddev.vr);
    fold([](const StructureMetrics &m) { return m.svr; }, out.mean.svr, out.stddev.svr);
    return out;
}

} // namespace detail

// Runs each arm across the seeds, evaluating full metric reports against the
// supplied references. Templates default to init_templates on the grid.
inline std::vector<ArmResult> ablation_run(const LabelGrid &grid, const RuleSet &rules,
                                           const std::vector<ArmConfig> &arms,
                                           const std::vector<std::uint64_t> &seeds,
                                           const OptimConfig &base_cfg,
                                           const std::map<int, std::vector<Vec3>> &references,
                                           const MeshMap *templates = nullptr) {
    if (seeds.empty()) throw std::invalid_argument("ablation_run: at least one seed required");
    MeshMap default_templates;
    if (!templates) {
        default_templates = init_templates(grid, rules);
        templates = &default_templates;
    }
    std::vector<ArmResult> out;
    for (const auto &arm : arms) {
        ArmResult res;
        res.arm = arm;
        for (std::uint64_t seed : seeds) {
            OptimConfig cfg = base_cfg;
            cfg.weights = arm.weights;
            cfg.sampling.rho = arm.rho;
            cfg.sampling.seed = seed;
            OptimResult run = optimize(*templates, grid, rules, cfg, references);
            if (run.trace.aborted)
                throw std::runtime_error("ablation_run: " + arm.name + " aborted: " +
                                         run.trace.abort_reason);
            res.reports.push_back(build_metric_report(run.meshes, grid, rules, references,
                                                      cfg.occ, seed));
            res.traces.push_back(std::move(run.trace));
        }
        res.stats = detail::aggregate(res.reports);
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace relmesh
