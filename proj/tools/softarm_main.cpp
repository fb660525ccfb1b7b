// softarm CLI: mesh generation, the periodic and quadrant experiments, the
// numerical validation suite, and config dumping.
//
// Exit codes: 0 success, 1 validation/convergence failure, 2 config error.

#include "softarm/softarm.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <thread>

namespace {

using namespace softarm;

int max_threads_from_env() {
    const char* env = std::getenv("SOFTARM_THREADS");
    if (!env) return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int v = std::atoi(env);
    return v >= 1 ? v : 1;
}

SceneConfig load_config(const std::string& path, ActuationMode mode) {
    if (path.empty()) {
        return SceneConfig::defaults(mode);
    }
    SceneConfig cfg = SceneConfig::from_file(path);
    cfg.mode = mode;
    return cfg;
}

Vec3 parse_vec3(const std::string& s) {
    std::string tmp = s;
    for (auto& c : tmp)
        if (c == ',') c = ' ';
    std::istringstream in(tmp);
    Vec3 v;
    if (!(in >> v.x() >> v.y() >> v.z())) throw Error("expected 'x,y,z', got '" + s + "'");
    return v;
}

void print_quadrant_report(const QuadrantReport& r) {
    std::printf("quadrant Q%d: target (%.4f, %.4f, %.4f) m\n", r.quadrant, r.target.x(),
                r.target.y(), r.target.z());
    std::printf("  %s in %.2f s (e_k %.4f -> %.6f)\n",
                r.converged ? "converged" : "NOT converged", r.settle_time, r.initial_e_k,
                r.final_e_k);
    std::printf("  final tip offset (%.5f, %.5f, %.5f) m\n", r.final_tip_offset.x(),
                r.final_tip_offset.y(), r.final_tip_offset.z());
    std::printf("  final pressures P1..P4 = %.4f %.4f %.4f %.4f Pa\n", r.final_pressures[0],
                r.final_pressures[1], r.final_pressures[2], r.final_pressures[3]);
    std::printf("  max bilateral gap %.3e m, max fixed drift %.3e m\n", r.max_bilateral_gap,
                r.max_fixed_drift);
}

std::string quadrant_out_path(const std::string& pattern, int q) {
    const auto pos = pattern.find("%d");
    if (pos != std::string::npos)
        return pattern.substr(0, pos) + std::to_string(q) + pattern.substr(pos + 2);
    const auto dot = pattern.rfind('.');
    if (dot == std::string::npos) return pattern + "_q" + std::to_string(q);
    return pattern.substr(0, dot) + "_q" + std::to_string(q) + pattern.substr(dot);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"softarm: dynamic FEM simulator for a soft pneumatic arm"};
    app.require_subcommand(1);

    // --- gen-mesh ---------------------------------------------------------
    auto* gen = app.add_subcommand("gen-mesh", "generate the arm meshes and write tmesh files");
    std::string gen_out = ".";
    std::vector<std::string> gen_params;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--param", gen_params, "geometry override key=value (e.g. length=0.12)");

    // --- run periodic / run quadrant ---------------------------------------
    auto* run = app.add_subcommand("run", "run an experiment");
    run->require_subcommand(1);

    auto* periodic = run->add_subcommand("periodic", "sinusoidal left/right pair actuation");
    std::string per_config, per_out = "periodic.csv", per_plot;
    periodic->add_option("--config", per_config, "scene config file (defaults when omitted)");
    periodic->add_option("--out", per_out, "output CSV path");
    periodic->add_option("--plotdata", per_plot, "also write plot data files with this prefix");

    auto* quadrant = run->add_subcommand("quadrant", "closed-loop tip positioning");
    std::string quad_config, quad_out = "quadrant.csv", quad_target, quad_plot;
    int quad_q = 1;
    bool quad_all = false;
    quadrant->add_option("--q", quad_q, "quadrant index 1..4")->check(CLI::Range(1, 4));
    quadrant->add_flag("--all-quadrants", quad_all, "run all four quadrants concurrently");
    quadrant->add_option("--config", quad_config, "scene config file (defaults when omitted)");
    quadrant->add_option("--out", quad_out,
                         "output CSV path (use %d or get a _qN suffix with --all-quadrants)");
    quadrant->add_option("--target", quad_target, "override target displacement \"x,y,z\" [m]");
    quadrant->add_option("--plotdata", quad_plot, "also write plot data files with this prefix");

    // --- validate -----------------------------------------------------------
    auto* val = app.add_subcommand("validate", "run the numerical validation suite");

    // --- dump-config --------------------------------------------------------
    auto* dump = app.add_subcommand("dump-config", "print the default configuration");
    std::string dump_mode = "periodic";
    dump->add_option("--mode", dump_mode, "none|periodic|controller")
        ->check(CLI::IsMember({"none", "periodic", "controller"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            ArmParams p;
            for (const auto& kv : gen_params) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw Error("--param expects key=value, got " + kv);
                const std::string key = kv.substr(0, eq);
                const double value = std::stod(kv.substr(eq + 1));
                if (key == "length") p.length = value;
                else if (key == "width") p.width = value;
                else if (key == "height") p.height = value;
                else if (key == "cavity_width") p.cavity_width = value;
                else if (key == "cavity_height") p.cavity_height = value;
                else if (key == "cavity_offset_y") p.cavity_offset_y = value;
                else if (key == "cavity_offset_z") p.cavity_offset_z = value;
                else if (key == "cavity_margin") p.cavity_margin = value;
                else if (key == "spine_width") p.spine_width = value;
                else if (key == "spine_height") p.spine_height = value;
                else if (key == "element_size") p.element_size = value;
                else throw Error("unknown geometry parameter '" + key + "'");
            }
            const GeneratedArm arm = generate_arm(p);
            std::filesystem::create_directories(gen_out);
            write_mesh(arm.spa, gen_out + "/spa.tmesh");
            write_mesh(arm.spine, gen_out + "/spine.tmesh");
            std::printf("wrote %s/spa.tmesh (%d nodes, %d tets) and %s/spine.tmesh (%d nodes, %d tets)\n",
                        gen_out.c_str(), arm.spa.num_vertices(), arm.spa.num_tets(),
                        gen_out.c_str(), arm.spine.num_vertices(), arm.spine.num_tets());
            std::printf("spa volume %.6e m^3 (analytic %.6e), tip (%g, %g, %g)\n",
                        mesh_volume(arm.spa), arm_analytic_spa_volume(p), arm.tip.x(),
                        arm.tip.y(), arm.tip.z());
            return 0;
        }

        if (periodic->parsed()) {
            const SceneConfig cfg = load_config(per_config, ActuationMode::Periodic);
            const PeriodicReport rep = run_periodic(cfg);
            write_csv(rep.log, per_out);
            if (!per_plot.empty()) write_plotdata(rep.log, per_plot);
            std::printf("periodic: %zu rows -> %s\n", rep.log.rows.size(), per_out.c_str());
            std::printf("  peak-to-peak displacement: dX %.4f m, dY %.4f m, dZ %.4f m\n",
                        rep.delta_x, rep.delta_y, rep.delta_z);
            std::printf("  dominant tip-y period %.2f s\n", rep.dominant_period_y);
            std::printf("  max bilateral gap %.3e m, max fixed drift %.3e m\n",
                        rep.max_bilateral_gap, rep.max_fixed_drift);
            return 0;
        }

        if (quadrant->parsed()) {
            const SceneConfig cfg = load_config(quad_config, ActuationMode::Controller);
            std::optional<Vec3> target;
            if (!quad_target.empty()) target = parse_vec3(quad_target);
            bool all_ok = true;
            if (quad_all) {
                const int max_threads = std::min(4, max_threads_from_env());
                // bounded concurrency: launch in waves of max_threads
                std::vector<QuadrantReport> reports;
                for (int base = 1; base <= 4; base += max_threads) {
                    std::vector<std::future<QuadrantReport>> wave;
                    for (int q = base; q <= std::min(4, base + max_threads - 1); ++q)
                        wave.push_back(std::async(std::launch::async, [&cfg, &target, q] {
                            return run_quadrant(cfg, q, target);
                        }));
                    for (auto& f : wave) reports.push_back(f.get());
                }
                std::sort(reports.begin(), reports.end(),
                          [](const auto& a, const auto& b) { return a.quadrant < b.quadrant; });
                for (const auto& rep : reports) {
                    const std::string path = quadrant_out_path(quad_out, rep.quadrant);
                    write_csv(rep.log, path);
                    if (!quad_plot.empty())
                        write_plotdata(rep.log, quad_plot + "_q" + std::to_string(rep.quadrant));
                    print_quadrant_report(rep);
                    std::printf("  log -> %s\n", path.c_str());
                    all_ok = all_ok && rep.converged;
                }
            } else {
                const QuadrantReport rep = run_quadrant(cfg, quad_q, target);
                write_csv(rep.log, quad_out);
                if (!quad_plot.empty()) write_plotdata(rep.log, quad_plot);
                print_quadrant_report(rep);
                std::printf("  log -> %s\n", quad_out.c_str());
                all_ok = rep.converged;
            }
            if (!all_ok) {
                std::fprintf(stderr, "quadrant run did not converge within the duration cap\n");
                return 1;
            }
            return 0;
        }

        if (val->parsed()) {
            const ValidationReport rep = validate();
            for (const auto& c : rep.checks)
                std::printf("[%s] %s/%s: measured %.3e (tolerance %.3e)\n",
                            c.pass ? "PASS" : "FAIL", c.module.c_str(), c.name.c_str(),
                            c.measured, c.tolerance);
            std::printf("%s\n", rep.all_pass ? "all checks passed" : "VALIDATION FAILED");
            return rep.all_pass ? 0 : 1;
        }

        if (dump->parsed()) {
            ActuationMode m = actuation_mode_from_string(dump_mode);
            std::fputs(SceneConfig::defaults(m).dump().c_str(), stdout);
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
