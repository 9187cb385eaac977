// relmesh CLI — reproducible phantom generation, violation extraction,
// metric reports and template optimization. Exit codes: 0 success,
// 2 usage/input error, 3 numerical failure.
//
// Every random choice funnels through --seed; fixed seeds give
// byte-identical outputs. The training objective here omits the 2D
// segmentation term of the full pipeline (no segmentation network in this
// tool); the mie/occ/chamfer weights plus an always-on smoothness term make
// up the whole loss.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relmesh/relmesh.hpp"

namespace fs = std::filesystem;
using namespace relmesh;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

void apply_threads(int threads) {
    if (threads <= 0) {
        if (const char *env = std::getenv("RELMESH_THREADS")) threads = std::atoi(env);
    }
    if (threads <= 0) threads = 1;
    relmesh::detail::set_max_threads(threads);
}

void write_text(const fs::path &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
}

std::map<int, std::vector<Vec3>> reference_samples(const LabelGrid &grid, const MeshMap &meshes,
                                                   std::uint64_t seed, std::size_t count) {
    std::map<int, std::vector<Vec3>> refs;
    for (const auto &[label, mesh] : meshes) {
        const TriMesh ref_mesh = marching_cubes(grid, label);
        relmesh::detail::Rng rng =
            relmesh::detail::Rng(seed).derive({0x726566ull, static_cast<std::uint64_t>(label)});
        const SurfaceSamples ss = sample_surface(ref_mesh, count, rng);
        refs.emplace(label, surface_sample_positions(ref_mesh, ss));
    }
    return refs;
}

std::string trace_csv_header() {
    return "iter,total,mie,occ,chamfer,smooth,vr,svr,max_disp\n";
}

std::string trace_csv_row(const TraceRecord &r) {
    auto g = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    return std::to_string(r.iteration) + ',' + g(r.total) + ',' + g(r.mie) + ',' + g(r.occ) +
           ',' + g(r.chamfer) + ',' + g(r.smooth) + ',' + g(r.vr) + ',' + g(r.svr) + ',' +
           g(r.max_displacement) + '\n';
}

int run_gen(const std::string &spec_path, const std::string &preset, std::uint64_t seed,
            const std::string &out_path, const std::string &templates_dir,
            const std::string &rules_out, int subdiv) {
    PhantomSpec spec;
    RuleSet rules;
    if (!preset.empty()) {
        if (preset != "cardiac") {
            std::cerr << "unknown preset: " << preset << "\n";
            return kExitUsage;
        }
        auto [pspec, prules] = cardiac_preset();
        spec = pspec;
        rules = prules;
    }
    if (!spec_path.empty()) spec = read_phantom_spec(spec_path, preset.empty() ? &rules : nullptr);

    const LabelGrid grid = generate(spec, seed);
    write_grid(out_path, grid);

    std::map<int, std::size_t> counts;
    for (auto l : grid.labels)
        if (l != 0) ++counts[l];
    for (const auto &[label, count] : counts)
        std::cout << "label " << label << ": " << count << " voxels\n";

    if (!rules_out.empty()) write_rules(rules_out, rules);

    if (!templates_dir.empty()) {
        fs::create_directories(templates_dir);
        const MeshMap templates = spec.violations.empty()
                                      ? init_templates(grid, rules, subdiv)
                                      : corrupted_templates(grid, rules, spec, subdiv);
        for (const auto &[label, mesh] : templates)
            write_mesh((fs::path(templates_dir) /
                        ("template_" + std::to_string(label) + ".off")).string(), mesh);
        std::cout << "templates: " << templates.size() << " written to " << templates_dir << "\n";
    }
    return 0;
}

int run_extract(const std::string &grid_path, const std::string &rules_path,
                const std::string &out_path) {
    const LabelGrid grid = read_grid(grid_path);
    const RuleSet rules = read_rules(rules_path);
    const CriticalPointSet critical = critical_points(grid, rules);

    std::string csv = "x,y,z,label,rule\n";
    for (const auto &cp : critical.points) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d,%d\n", cp.pos.x, cp.pos.y,
                      cp.pos.z, static_cast<int>(cp.source_label), cp.rule_index);
        csv += buf;
    }
    write_text(out_path, csv);

    std::vector<std::size_t> per_rule(rules.size(), 0);
    for (const auto &cp : critical.points) ++per_rule[cp.rule_index];
    for (std::size_t r = 0; r < per_rule.size(); ++r)
        std::cout << "rule " << r << ": " << per_rule[r] << " critical points\n";
    return 0;
}

MeshMap load_meshes(const std::vector<std::string> &mesh_args) {
    MeshMap meshes;
    for (const auto &arg : mesh_args) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("mesh argument must be label=path, got: " + arg);
        const int label = std::stoi(arg.substr(0, eq));
        TriMesh mesh = read_mesh(arg.substr(eq + 1));
        mesh.structure_label = label;
        meshes.emplace(label, std::move(mesh));
    }
    return meshes;
}

int run_check(const std::vector<std::string> &mesh_args, const std::string &grid_path,
              const std::string &rules_path, std::uint64_t seed, const std::string &out_path,
              const std::string &json_path, std::size_t eval_samples) {
    const LabelGrid grid = read_grid(grid_path);
    const RuleSet rules = read_rules(rules_path);
    const MeshMap meshes = load_meshes(mesh_args);
    for (const auto &rule : rules.rules)
        if (!meshes.count(rule.subject))
            throw std::runtime_error("no mesh supplied for rule subject label " +
                                     std::to_string(rule.subject));

    const auto refs = reference_samples(grid, meshes, seed, eval_samples);
    const MetricReport report =
        build_metric_report(meshes, grid, rules, refs, OccupancyConfig{}, seed, eval_samples);
    write_text(out_path, report_to_csv(report));
    if (!json_path.empty()) write_text(json_path, report_to_json(report));
    std::cout << report_to_csv(report);
    return 0;
}

int run_optimize(const std::string &grid_path, const std::string &rules_path,
                 const std::string &arm_name, int iters, std::uint64_t seed,
                 const std::string &out_dir, const std::string &templates_dir, int subdiv,
                 std::size_t n, int checkpoint_every, std::size_t eval_samples) {
    const LabelGrid grid = read_grid(grid_path);
    const RuleSet rules = read_rules(rules_path);
    const ArmConfig arm = arm_config(arm_name);

    MeshMap templates;
    if (!templates_dir.empty()) {
        for (const auto &entry : fs::directory_iterator(templates_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("template_", 0) != 0) continue;
            const int label = std::stoi(name.substr(9));
            TriMesh mesh = read_mesh(entry.path().string());
            mesh.structure_label = label;
            templates.emplace(label, std::move(mesh));
        }
        if (templates.empty())
            throw std::runtime_error("no template_<label>.off files in " + templates_dir);
    } else {
        templates = init_templates(grid, rules, subdiv);
    }

    OptimConfig cfg;
    cfg.iterations = iters;
    cfg.weights = arm.weights;
    cfg.sampling.rho = arm.rho;
    cfg.sampling.seed = seed;
    cfg.sampling.n = n;

    std::map<int, std::vector<Vec3>> refs;
    if (cfg.weights.chamfer > 0.0) refs = reference_samples(grid, templates, seed, eval_samples);

    fs::create_directories(out_dir);
    std::ofstream trace_out(fs::path(out_dir) / "trace.csv", std::ios::binary);
    trace_out << trace_csv_header();
    IterationSink sink = [&](const TraceRecord &rec, const MeshMap &meshes) {
        trace_out << trace_csv_row(rec);
        trace_out.flush();
        if (checkpoint_every > 0 && rec.iteration > 0 && rec.iteration % checkpoint_every == 0)
            for (const auto &[label, mesh] : meshes)
                write_mesh((fs::path(out_dir) / ("checkpoint_" + std::to_string(rec.iteration) +
                                                 "_label" + std::to_string(label) + ".off"))
                               .string(),
                           mesh);
    };

    const OptimResult result = optimize(templates, grid, rules, cfg, refs, sink);
    trace_out.close();

    for (const auto &[label, mesh] : result.meshes)
        write_mesh((fs::path(out_dir) / ("structure_" + std::to_string(label) + ".off")).string(),
                   mesh);

    const auto report_refs = reference_samples(grid, result.meshes, seed, eval_samples);
    const MetricReport report = build_metric_report(result.meshes, grid, rules, report_refs,
                                                    cfg.occ, seed, eval_samples);
    write_text(fs::path(out_dir) / "report.csv", report_to_csv(report));

    if (result.trace.aborted) {
        std::cerr << "aborted: " << result.trace.abort_reason << "\n";
        return kExitNumerical;
    }
    std::cout << "final VR "
              << (result.trace.records.empty() ? 0.0 : result.trace.records.back().vr)
              << " after " << result.trace.records.size() << " iterations\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"relational anatomical mesh supervision toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (default: RELMESH_THREADS or 1)");

    // gen
    auto *gen = app.add_subcommand("gen", "generate a phantom label grid");
    std::string gen_spec, gen_preset, gen_out = "phantom.lgrid", gen_templates, gen_rules;
    std::uint64_t gen_seed = 0;
    int gen_subdiv = 3;
    gen->add_option("spec", gen_spec, "phantom spec JSON (optional with --preset)");
    gen->add_option("--preset", gen_preset, "built-in phantom preset (cardiac)");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--out", gen_out, "output grid path")->required();
    gen->add_option("--templates", gen_templates,
                    "also write initialization templates to this directory");
    gen->add_option("--rules", gen_rules, "also write the preset/spec rule set (JSON)");
    gen->add_option("--subdiv", gen_subdiv, "template icosphere subdivision level");

    // extract
    auto *extract = app.add_subcommand("extract", "extract critical points to CSV");
    std::string ex_grid, ex_rules, ex_out = "points.csv";
    extract->add_option("grid", ex_grid, "label grid (.lgrid)")->required();
    extract->add_option("rules", ex_rules, "rule set (JSON)")->required();
    extract->add_option("--out", ex_out, "output CSV path")->required();

    // check
    auto *check = app.add_subcommand("check", "evaluate meshes against a grid and rules");
    std::vector<std::string> ck_meshes;
    std::string ck_grid, ck_rules, ck_out = "report.csv", ck_json;
    std::uint64_t ck_seed = 0;
    std::size_t ck_samples = 5000;
    check->add_option("--mesh", ck_meshes, "structure mesh as label=path (repeatable)")
        ->required();
    check->add_option("grid", ck_grid, "label grid (.lgrid)")->required();
    check->add_option("rules", ck_rules, "rule set (JSON)")->required();
    check->add_option("--seed", ck_seed, "evaluation seed");
    check->add_option("--out", ck_out, "report CSV path")->required();
    check->add_option("--json", ck_json, "also write a JSON report");
    check->add_option("--samples", ck_samples, "surface samples per structure for CD/HD");

    // optimize
    auto *opt = app.add_subcommand("optimize", "fit templates to a grid under a loss arm");
    std::string op_grid, op_rules, op_arm = "mie", op_out = "run", op_templates;
    int op_iters = 500, op_subdiv = 3, op_checkpoint = 0;
    std::uint64_t op_seed = 0;
    std::size_t op_n = 2000, op_samples = 5000;
    opt->add_option("grid", op_grid, "label grid (.lgrid)")->required();
    opt->add_option("rules", op_rules, "rule set (JSON)")->required();
    opt->add_option("--arm", op_arm, "loss arm: chamfer|occ|occ02|mie|mie02");
    opt->add_option("--iters", op_iters, "iteration cap");
    opt->add_option("--seed", op_seed, "master seed");
    opt->add_option("--out", op_out, "output directory")->required();
    opt->add_option("--templates", op_templates, "template directory (template_<label>.off)");
    opt->add_option("--subdiv", op_subdiv, "template icosphere subdivision level");
    opt->add_option("--n", op_n, "per-class sample budget");
    opt->add_option("--checkpoint-every", op_checkpoint, "write meshes every K iterations");
    opt->add_option("--samples", op_samples, "surface samples for chamfer references/report");

    CLI11_PARSE(app, argc, argv);
    apply_threads(threads);

    try {
        if (gen->parsed()) {
            if (gen_spec.empty() && gen_preset.empty()) {
                std::cerr << "gen: need a spec file or --preset\n";
                return kExitUsage;
            }
            return run_gen(gen_spec, gen_preset, gen_seed, gen_out, gen_templates, gen_rules,
                           gen_subdiv);
        }
        if (extract->parsed()) return run_extract(ex_grid, ex_rules, ex_out);
        if (check->parsed())
            return run_check(ck_meshes, ck_grid, ck_rules, ck_seed, ck_out, ck_json, ck_samples);
        if (opt->parsed())
            return run_optimize(op_grid, op_rules, op_arm, op_iters, op_seed, op_out,
                                op_templates, op_subdiv, op_n, op_checkpoint, op_samples);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
