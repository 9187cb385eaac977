// losses.hpp — training objectives with analytic vertex gradients.
//
// The relational loss walks the structure meshes class by class: base
// positive/negative pools come from the labeled query batch, rule-selected
// critical points are routed on top (inclusion routes by the subject mesh's
// current occupancy, exclusion always penalizes), one mixed draw per class
// is scored and pushed through a mean binary cross-entropy. Per-class terms
// are summed, so an empty rule set reduces bit-for-bit to the plain
// occupancy loss summed over classes.
//
// Every stochastic choice (pool routing, draws, surface samples) happens in
// a prepare step; evaluation differentiates with those choices frozen. The
// optimizer re-prepares each iteration with an iteration-derived seed.
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "relmesh/core.hpp"
#include "relmesh/detail/rng.hpp"
#include "relmesh/occupancy.hpp"
#include "relmesh/relations.hpp"
#include "relmesh/sampling.hpp"

namespace relmesh {

inline constexpr double kScoreClamp = 1e-7;

struct LossWeights {
    double chamfer = 0.0;
    double occ = 0.0;
    double mie = 0.0;

    void check() const {
        if (!(chamfer >= 0.0) || !(occ >= 0.0) || !(mie >= 0.0))
            throw std::invalid_argument("loss weights must be nonnegative and finite");
    }
};

struct LossComponents {
    double mie = 0.0;
    double occ = 0.0;
    double chamfer = 0.0;
    double smooth = 0.0;
};

struct LossValue {
    double value = 0.0;
    LossComponents components;
    std::map<int, std::vector<Vec3>> gradients; // structure label -> per-vertex dL/dv
};

namespace detail {

inline std::vector<Vec3> &grad_slot(LossValue &lv, int label, std::size_t nverts) {
    auto &g = lv.gradients[label];
    if (g.empty()) g.assign(nverts, Vec3{});
    return g;
}

inline void axpy(std::vector<Vec3> &dst, double a, const std::vector<Vec3> &src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

} // namespace detail

// Mean binary cross-entropy over scores clamped to [1e-7, 1-1e-7].
inline double bce(const std::vector<double> &scores, const std::vector<std::uint8_t> &targets) {
    if (scores.size() != targets.size())
        throw std::invalid_argument("bce: score/target length mismatch");
    if (scores.empty()) throw std::invalid_argument("bce: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = std::clamp(scores[i], kScoreClamp, 1.0 - kScoreClamp);
        acc -= targets[i] ? std::log(s) : std::log(1.0 - s);
    }
    return acc / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------
// occupancy BCE losses (plain and relational)

// One class's frozen sample batch: points with the first positive_count
// carrying target 1, the rest target 0.
struct ClassScoreBatch {
    int label = 0;
    std::vector<Vec3> points;
    std::size_t positive_count = 0;
    int clamped_draws = 0;
};

using MeshMap = std::map<int, TriMesh>;

namespace detail {

// Routing + draws for one class; all randomness keyed by (seed, label).
inline ClassScoreBatch prepare_class_batch(const TriMesh &mesh, int label,
                                           const QueryBatch &batch,
                                           const CriticalPointSet &critical,
                                           const RuleSet &rules,
                                           const SamplingConfig &cfg,
                                           const OccupancyConfig &occ_cfg,
                                           CriticalFilter filter) {
    std::vector<Vec3> pos, neg;
    std::vector<std::uint8_t> pos_crit, neg_crit;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.labels[i] == label) {
            pos.push_back(batch.points[i]);
            pos_crit.push_back(batch.is_critical[i]);
        } else {
            neg.push_back(batch.points[i]);
            neg_crit.push_back(batch.is_critical[i]);
        }
    }
    for (std::size_t r = 0; r < rules.rules.size(); ++r) {
        const Rule &rule = rules.rules[r];
        if (rule.subject != label) continue;
        std::vector<Vec3> selected = filter_critical(critical, rule.object);
        if (filter == CriticalFilter::SubjectLabel ||
            (filter == CriticalFilter::ObjectLabelThenSubject && selected.empty()))
            selected = filter_critical(critical, rule.subject);
        if (selected.empty()) continue;
        if (rule.relation == 1) {
            const std::vector<double> occ = occupancy(mesh, selected, occ_cfg);
            for (std::size_t i = 0; i < selected.size(); ++i) {
                if (occ[i] > occ_cfg.threshold) {
                    pos.push_back(selected[i]);
                    pos_crit.push_back(1);
                } else {
                    neg.push_back(selected[i]);
                    neg_crit.push_back(1);
                }
            }
        } else {
            for (const auto &p : selected) {
                neg.push_back(p);
                neg_crit.push_back(1);
            }
        }
    }

    SamplingConfig class_cfg = cfg;
    class_cfg.seed = Rng(cfg.seed).derive({static_cast<std::uint64_t>(label)}).next_u64();
    DrawnSamples drawn = draw_pools(pos, pos_crit, neg, neg_crit, class_cfg);

    ClassScoreBatch out;
    out.label = label;
    out.positive_count = drawn.positive_points.size();
    out.points = std::move(drawn.positive_points);
    out.points.insert(out.points.end(), drawn.negative_points.begin(),
                      drawn.negative_points.end());
    out.clamped_draws = drawn.clamped_draws;
    return out;
}

// Mean BCE of one frozen batch plus dL/dv accumulated into grad.
inline double eval_class_batch(const TriMesh &mesh, const ClassScoreBatch &cb,
                               const OccupancyConfig &occ_cfg, bool want_grad,
                               std::vector<Vec3> *grad) {
    const std::vector<double> occ = occupancy(mesh, cb.points, occ_cfg);
    const double inv_n = 1.0 / static_cast<double>(cb.points.size());
    double value = 0.0;
    std::vector<double> weights(cb.points.size(), 0.0);
    for (std::size_t i = 0; i < cb.points.size(); ++i) {
        const double t = (i < cb.positive_count) ? 1.0 : 0.0;
        const double s_raw = occupancy_to_score(occ[i], occ_cfg);
        const double s = std::clamp(s_raw, kScoreClamp, 1.0 - kScoreClamp);
        value -= inv_n * (t > 0.5 ? std::log(s) : std::log(1.0 - s));
        if (want_grad && s_raw > kScoreClamp && s_raw < 1.0 - kScoreClamp) {
            const double dl_ds = inv_n * (s - t) / (s * (1.0 - s));
            weights[i] = dl_ds * occ_cfg.sharpness * s_raw * (1.0 - s_raw);
        }
    }
    if (want_grad)
        occupancy_accumulate_gradient(mesh, cb.points, weights, occ_cfg, *grad);
    return value;
}

} // namespace detail

struct PreparedOccBatches {
    std::vector<ClassScoreBatch> batches; // ascending structure label
};

// Freeze the relational batches for every mesh. Pass an empty rule set to
// get the plain occupancy batches.
inline PreparedOccBatches prepare_mie_batches(const MeshMap &meshes, const QueryBatch &batch,
                                              const CriticalPointSet &critical,
                                              const RuleSet &rules, const SamplingConfig &cfg,
                                              const OccupancyConfig &occ_cfg = {},
                                              CriticalFilter filter = CriticalFilter::ObjectLabelThenSubject) {
    batch.check();
    if (batch.size() == 0) throw std::invalid_argument("mie_loss: empty query batch");
    check_rules(rules);
    for (const auto &rule : rules.rules)
        if (!meshes.count(rule.subject))
            throw std::invalid_argument("mie_loss: no mesh for rule subject label");
    for (const auto &cp : critical.points)
        if (cp.rule_index < 0 || cp.rule_index >= static_cast<int>(rules.rules.size()))
            throw std::invalid_argument("mie_loss: critical point rule index out of range");

    PreparedOccBatches out;
    for (const auto &[label, mesh] : meshes)
        out.batches.push_back(detail::prepare_class_batch(mesh, label, batch, critical,
                                                          rules, cfg, occ_cfg, filter));
    return out;
}

// Sum of per-class mean BCE terms over frozen batches, with gradients.
inline LossValue eval_mie_batches(const MeshMap &meshes, const PreparedOccBatches &prepared,
                                  const OccupancyConfig &occ_cfg = {}, bool want_grad = true) {
    LossValue lv;
    for (const auto &cb : prepared.batches) {
        const TriMesh &mesh = meshes.at(cb.label);
        std::vector<Vec3> grad;
        lv.value += detail::eval_class_batch(mesh, cb, occ_cfg, want_grad, &grad);
        if (want_grad) {
            auto &slot = detail::grad_slot(lv, cb.label, mesh.vertices.size());
            detail::axpy(slot, 1.0, grad);
        }
    }
    lv.components.mie = lv.value;
    return lv;
}

// Relational mesh loss: routing, draws and scoring in one call.
inline LossValue mie_loss(const MeshMap &meshes, const QueryBatch &batch,
                          const CriticalPointSet &critical, const RuleSet &rules,
                          const SamplingConfig &cfg, const OccupancyConfig &occ_cfg = {},
                          CriticalFilter filter = CriticalFilter::ObjectLabelThenSubject) {
    const PreparedOccBatches prepared =
        prepare_mie_batches(meshes, batch, critical, rules, cfg, occ_cfg, filter);
    return eval_mie_batches(meshes, prepared, occ_cfg);
}

// Plain occupancy BCE for one mesh (no rules, no critical points).
inline LossValue occ_loss(const TriMesh &mesh, const QueryBatch &batch,
                          const SamplingConfig &cfg, const OccupancyConfig &occ_cfg = {}) {
    MeshMap meshes;
    meshes.emplace(mesh.structure_label, mesh);
    const PreparedOccBatches prepared =
        prepare_mie_batches(meshes, batch, CriticalPointSet{}, RuleSet{}, cfg, occ_cfg);
    LossValue lv = eval_mie_batches(meshes, prepared, occ_cfg);
    lv.components.mie = 0.0;
    lv.components.occ = lv.value;
    return lv;
}

// ---------------------------------------------------------------------------
// chamfer distance

// Squared symmetric Chamfer distance between two point sets (mm^2).
inline double chamfer(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
    auto one_sided = [](const std::vector<Vec3> &from, const std::vector<Vec3> &to) {
        double acc = 0.0;
        for (const auto &p : from) {
            double best = 1e300;
            for (const auto &q : to) best = std::min(best, (p - q).norm2());
            acc += best;
        }
        return acc / static_cast<double>(from.size());
    };
    return one_sided(a, b) + one_sided(b, a);
}

// Fixed barycentric surface samples; positions move with the vertices.
struct SurfaceSamples {
    std::vector<int> face;
    std::vector<std::array<double, 3>> bary;
};

inline SurfaceSamples sample_surface(const TriMesh &mesh, std::size_t count,
                                     detail::Rng &rng) {
    if (mesh.faces.empty()) throw std::invalid_argument("sample_surface: mesh has no faces");
    std::vector<double> cdf(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        total += face_area(mesh, mesh.faces[f]);
        cdf[f] = total;
    }
    if (total <= 0.0) throw std::invalid_argument("sample_surface: zero total area");
    SurfaceSamples out;
    out.face.resize(count);
    out.bary.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
        const double u = rng.next_double() * total;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        out.face[s] = static_cast<int>(std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1));
        const double r1 = std::sqrt(rng.next_double());
        const double r2 = rng.next_double();
        out.bary[s] = {1.0 - r1, r1 * (1.0 - r2), r1 * r2};
    }
    return out;
}

inline std::vector<Vec3> surface_sample_positions(const TriMesh &mesh,
                                                  const SurfaceSamples &samples) {
    std::vector<Vec3> out(samples.face.size());
    for (std::size_t s = 0; s < samples.face.size(); ++s) {
        const auto &f = mesh.faces[samples.face[s]];
        const auto &b = samples.bary[s];
        out[s] = mesh.vertices[f[0]] * b[0] + mesh.vertices[f[1]] * b[1] +
                 mesh.vertices[f[2]] * b[2];
    }
    return out;
}

// Chamfer loss of one mesh against fixed reference points, differentiated
// through the frozen surface samples (nearest-neighbor matches held fixed).
inline LossValue chamfer_loss(const TriMesh &mesh, const SurfaceSamples &samples,
                              const std::vector<Vec3> &reference, bool want_grad = true) {
    if (reference.empty()) throw std::invalid_argument("chamfer_loss: empty reference");
    if (samples.face.empty()) throw std::invalid_argument("chamfer_loss: no surface samples");
    const std::vector<Vec3> pred = surface_sample_positions(mesh, samples);

    std::vector<Vec3> g_pred(pred.size(), Vec3{});
    double value = 0.0;
    const double inv_p = 1.0 / static_cast<double>(pred.size());
    const double inv_q = 1.0 / static_cast<double>(reference.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double best = 1e300;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < reference.size(); ++j) {
            const double d = (pred[i] - reference[j]).norm2();
            if (d < best) { best = d; best_j = j; }
        }
        value += inv_p * best;
        g_pred[i] += (2.0 * inv_p) * (pred[i] - reference[best_j]);
    }
    for (std::size_t j = 0; j < reference.size(); ++j) {
        double best = 1e300;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = (reference[j] - pred[i]).norm2();
            if (d < best) { best = d; best_i = i; }
        }
        value += inv_q * best;
        g_pred[best_i] += (2.0 * inv_q) * (pred[best_i] - reference[j]);
    }

    LossValue lv;
    lv.value = value;
    lv.components.chamfer = value;
    if (want_grad) {
        auto &grad = detail::grad_slot(lv, mesh.structure_label, mesh.vertices.size());
        for (std::size_t s = 0; s < pred.size(); ++s) {
            const auto &f = mesh.faces[samples.face[s]];
            const auto &b = samples.bary[s];
            grad[f[0]] += b[0] * g_pred[s];
            grad[f[1]] += b[1] * g_pred[s];
            grad[f[2]] += b[2] * g_pred[s];
        }
    }
    return lv;
}

// ---------------------------------------------------------------------------
// smoothness

namespace detail {

inline std::vector<std::vector<int>> one_ring(const TriMesh &mesh) {
    std::vector<std::vector<int>> nb(mesh.vertices.size());
    auto add = [&](int a, int b) {
        auto &v = nb[a];
        if (std::find(v.begin(), v.end(), b) == v.end()) v.push_back(b);
    };
    for (const auto &f : mesh.faces) {
        add(f[0], f[1]); add(f[1], f[0]);
        add(f[1], f[2]); add(f[2], f[1]);
        add(f[2], f[0]); add(f[0], f[2]);
    }
    return nb;
}

} // namespace detail

// Uniform one-ring Laplacian energy: mean squared deviation of each vertex
// from its neighborhood centroid. Zero only when every vertex sits at the
// centroid of its ring.
inline LossValue smoothness(const TriMesh &mesh) {
    check_face_indices(mesh);
    const auto nb = detail::one_ring(mesh);
    for (const auto &ring : nb)
        if (ring.empty()) throw std::invalid_argument("smoothness: isolated vertex");

    const std::size_t nv = mesh.vertices.size();
    const double inv_v = 1.0 / static_cast<double>(nv);
    std::vector<Vec3> dev(nv);
    double value = 0.0;
    for (std::size_t i = 0; i < nv; ++i) {
        Vec3 c{};
        for (int u : nb[i]) c += mesh.vertices[u];
        dev[i] = mesh.vertices[i] - c / static_cast<double>(nb[i].size());
        value += inv_v * dev[i].norm2();
    }

    LossValue lv;
    lv.value = value;
    lv.components.smooth = value;
    auto &grad = detail::grad_slot(lv, mesh.structure_label, nv);
    for (std::size_t i = 0; i < nv; ++i) {
        Vec3 g = dev[i];
        for (int u : nb[i]) g -= dev[u] / static_cast<double>(nb[u].size());
        grad[i] = (2.0 * inv_v) * g;
    }
    return lv;
}

// ---------------------------------------------------------------------------
// weighted total

struct PreparedTotalLoss {
    PreparedOccBatches mie;
    PreparedOccBatches occ;
    std::map<int, SurfaceSamples> surface; // per structure, if chamfer active
};

struct TotalLossConfig {
    LossWeights weights;
    SamplingConfig sampling;
    OccupancyConfig occupancy;
    std::size_t chamfer_samples = 5000;
    CriticalFilter filter = CriticalFilter::ObjectLabelThenSubject;
};

// Freeze every stochastic choice of the active components.
inline PreparedTotalLoss prepare_total_loss(const MeshMap &meshes, const QueryBatch &batch,
                                            const CriticalPointSet &critical,
                                            const RuleSet &rules,
                                            const std::map<int, std::vector<Vec3>> &references,
                                            const TotalLossConfig &cfg) {
    cfg.weights.check();
    PreparedTotalLoss out;
    if (cfg.weights.mie > 0.0)
        out.mie = prepare_mie_batches(meshes, batch, critical, rules, cfg.sampling,
                                      cfg.occupancy, cfg.filter);
    if (cfg.weights.occ > 0.0) {
        // No rule routing here: critical points join the pools as ordinary
        // labeled samples, so rho > 0 merely oversamples the interface.
        QueryBatch augmented = batch;
        for (const auto &cp : critical.points) {
            augmented.points.push_back(cp.pos);
            augmented.labels.push_back(cp.source_label);
            augmented.is_critical.push_back(1);
            augmented.target.push_back(0);
        }
        SamplingConfig occ_cfg = cfg.sampling;
        occ_cfg.seed = detail::Rng(cfg.sampling.seed).derive({0x6f6363ull}).next_u64(); // "occ"
        out.occ = prepare_mie_batches(meshes, augmented, CriticalPointSet{}, RuleSet{},
                                      occ_cfg, cfg.occupancy, cfg.filter);
    }
    if (cfg.weights.chamfer > 0.0) {
        if (references.empty())
            throw std::invalid_argument("total_loss: chamfer weight set but no references");
        for (const auto &[label, mesh] : meshes) {
            if (!references.count(label))
                throw std::invalid_argument("total_loss: missing chamfer reference for a structure");
            detail::Rng rng =
                detail::Rng(cfg.sampling.seed)
                    .derive({0x63686d66ull, static_cast<std::uint64_t>(label)}); // "chmf"
            out.surface.emplace(label, sample_surface(mesh, cfg.chamfer_samples, rng));
        }
    }
    return out;
}

// Weighted sum over frozen choices. Components are stored unweighted;
// smoothness always contributes with weight 1.
inline LossValue eval_total_loss(const MeshMap &meshes, const PreparedTotalLoss &prepared,
                                 const std::map<int, std::vector<Vec3>> &references,
                                 const TotalLossConfig &cfg, bool want_grad = true) {
    LossValue lv;
    for (const auto &[label, mesh] : meshes)
        detail::grad_slot(lv, label, mesh.vertices.size());

    if (cfg.weights.chamfer > 0.0) {
        for (const auto &[label, mesh] : meshes) {
            LossValue part = chamfer_loss(mesh, prepared.surface.at(label),
                                          references.at(label), want_grad);
            lv.components.chamfer += part.components.chamfer;
            if (want_grad)
                detail::axpy(lv.gradients[label], cfg.weights.chamfer, part.gradients[label]);
        }
    }
    if (cfg.weights.occ > 0.0) {
        LossValue part = eval_mie_batches(meshes, prepared.occ, cfg.occupancy, want_grad);
        lv.components.occ = part.value;
        if (want_grad)
            for (auto &[label, g] : part.gradients)
                detail::axpy(lv.gradients[label], cfg.weights.occ, g);
    }
    if (cfg.weights.mie > 0.0) {
        LossValue part = eval_mie_batches(meshes, prepared.mie, cfg.occupancy, want_grad);
        lv.components.mie = part.value;
        if (want_grad)
            for (auto &[label, g] : part.gradients)
                detail::axpy(lv.gradients[label], cfg.weights.mie, g);
    }
    for (const auto &[label, mesh] : meshes) {
        LossValue part = smoothness(mesh);
        lv.components.smooth += part.value;
        if (want_grad)
            detail::axpy(lv.gradients[label], 1.0, part.gradients[label]);
    }

    lv.value = cfg.weights.chamfer * lv.components.chamfer +
               cfg.weights.occ * lv.components.occ +
               cfg.weights.mie * lv.components.mie + lv.components.smooth;
    return lv;
}

// One-call weighted total; zero-weight components are never evaluated.
inline LossValue total_loss(const MeshMap &meshes, const QueryBatch &batch,
                            const CriticalPointSet &critical, const RuleSet &rules,
                            const std::map<int, std::vector<Vec3>> &references,
                            const TotalLossConfig &cfg) {
    const PreparedTotalLoss prepared =
        prepare_total_loss(meshes, batch, critical, rules, references, cfg);
    return eval_total_loss(meshes, prepared, references, cfg);
}

} // namespace relmesh
