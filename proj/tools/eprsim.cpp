// eprsim: simulate, correlate and analyze photon-counting image stacks for the
// position-momentum EPR test.
//
// Exit codes: 0 = violation, 1 = no violation, 2 = error (report and pipeline);
// other subcommands return 0 or 2.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "epr/config.hpp"
#include "epr/io.hpp"
#include "epr/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--config", c.config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "override run.seed");
    cmd->add_option("--workers", c.workers, "worker threads; never changes results")->check(CLI::PositiveNumber);
    cmd->add_option("--out", c.out, out_help);
}

std::string default_out_dir() {
    const char* env = std::getenv("EPR_OUT_DIR");
    return env && *env ? env : ".";
}

struct Loaded {
    epr::RunConfig cfg;
    std::string text;
};

Loaded load(const Common& c) {
    Loaded l;
    l.text = epr::io::detail::read_file(c.config);
    l.cfg = epr::parse_config(l.text, c.config);
    if (c.seed) l.cfg.seed = *c.seed;
    return l;
}

epr::Plane parse_plane(const std::string& s) {
    try {
        return epr::plane_from_string(s);
    } catch (const std::exception&) {
        throw epr::ConfigError("--plane must be 'near' or 'far', got '" + s + "'");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Photon-counting EPR imaging: simulation and analysis"};
    app.require_subcommand(1);

    Common sim_opt, cor_opt, rep_opt, pipe_opt, cal_opt;
    std::string sim_plane = "both", stack_path, nf_map, ff_map;

    auto* sim = app.add_subcommand("simulate", "simulate frame stacks into <out>/{near,far}.bpi");
    add_common(sim, sim_opt, "output directory (default $EPR_OUT_DIR or .)");
    sim->add_option("--plane", sim_plane, "near, far or both")->check(CLI::IsMember({"near", "far", "both"}));

    auto* cor = app.add_subcommand("correlate", "correlation and witness maps of one stack");
    add_common(cor, cor_opt, "output prefix (default <out dir>/<plane>)");
    cor->add_option("--stack", stack_path, "BPI1 stack")->required()->check(CLI::ExistingFile);

    auto* rep = app.add_subcommand("report", "fit both maps and write the EPR report");
    add_common(rep, rep_opt, "report path (default <out dir>/report.json)");
    rep->add_option("--nf", nf_map, "near-field map (.bin)")->required()->check(CLI::ExistingFile);
    rep->add_option("--ff", ff_map, "far-field map (.bin)")->required()->check(CLI::ExistingFile);

    auto* pipe = app.add_subcommand("pipeline", "simulate, correlate, fit and report into one directory");
    add_common(pipe, pipe_opt, "output directory (default $EPR_OUT_DIR or .)");

    auto* cal = app.add_subcommand("calibrate", "print the source widths and pair rates a config resolves to");
    add_common(cal, cal_opt, "unused");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : epr::kExitError;
    }

    try {
        if (*sim) {
            const Loaded l = load(sim_opt);
            const fs::path dir = sim_opt.out.empty() ? default_out_dir() : sim_opt.out;
            fs::create_directories(dir);
            for (epr::Plane p : {epr::Plane::NearField, epr::Plane::FarField}) {
                const std::string name(epr::to_string(p));
                if (sim_plane != "both" && sim_plane != name) continue;
                const fs::path path = dir / (name + ".bpi");
                epr::simulate_to_file(l.cfg, p, path, sim_opt.workers);
                std::printf("%s  %s\n", epr::io::sha256_file(path).c_str(), path.string().c_str());
            }
            return 0;
        }
        if (*cor) {
            const Loaded l = load(cor_opt);
            const epr::FrameStack stack = epr::io::read_stack(stack_path);
            const std::string prefix =
                cor_opt.out.empty() ? (fs::path(default_out_dir()) / std::string(epr::to_string(stack.plane))).string()
                                    : cor_opt.out;
            if (auto parent = fs::path(prefix).parent_path(); !parent.empty()) fs::create_directories(parent);
            const epr::CorrelationResult c = epr::correlate_stack(stack, l.cfg, cor_opt.workers);
            for (const auto& p : epr::write_correlation(c, prefix)) std::printf("%s\n", p.string().c_str());
            std::printf("witness max |F|/sigma = %.2f\n", c.witness_max_z);
            return 0;
        }
        if (*rep) {
            const Loaded l = load(rep_opt);
            const fs::path path = rep_opt.out.empty() ? fs::path(default_out_dir()) / "report.json" : fs::path(rep_opt.out);
            if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
            epr::EprReport r;
            try {
                r = epr::report_from_maps(epr::io::read_map_bin(nf_map), epr::io::read_map_bin(ff_map), l.cfg);
            } catch (const epr::Error& e) {
                nlohmann::ordered_json j;
                j["error"] = e.what();
                j["verdict"] = nullptr;
                epr::io::detail::write_file(path, j.dump(2) + "\n");
                throw;
            }
            epr::io::detail::write_file(path, epr::to_json(r).dump(2) + "\n");
            std::cout << epr::summary_text(r);
            return epr::exit_code(r);
        }
        if (*pipe) {
            const Loaded l = load(pipe_opt);
            const fs::path dir = pipe_opt.out.empty() ? default_out_dir() : pipe_opt.out;
            const epr::PipelineResult res = epr::run_pipeline(l.cfg, dir, l.text, pipe_opt.workers);
            std::cout << epr::summary_text(res.report);
            for (const auto* d : {&res.near, &res.far})
                std::printf("%s field: fluence %.4f%s, witness max |F|/sigma %.2f, 1 - VoD(bin %d) = %.4f +- %.4f\n",
                            d == &res.near ? "near" : "far", d->fluence.fluence,
                            d->fluence.out_of_regime ? " (outside 0.1-0.2)" : "", d->witness_max_z, d->vod.bin,
                            1.0 - d->vod.ratio, d->vod.std_error);
            return epr::exit_code(res.report);
        }
        if (*cal) {
            const Loaded l = load(cal_opt);
            for (epr::Plane p : {epr::Plane::NearField, epr::Plane::FarField}) {
                const epr::SourceParams s = l.cfg.source_for(p);
                std::printf("%s field: mean pairs/frame %.3f\n", std::string(epr::to_string(p)).c_str(),
                            s.mean_pairs_per_frame);
            }
            const epr::SourceParams s = l.cfg.source_for(epr::Plane::NearField);
            std::printf("nf_pair_sigma %.4f %.4f\nff_sum_sigma %.4f %.4f\nexpected violation factor %.4f\n",
                        s.nf_pair_sigma.x, s.nf_pair_sigma.y, s.ff_sum_sigma.x, s.ff_sum_sigma.y,
                        epr::expected_violation(s, l.cfg.geometry));
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "eprsim: error: %s\n", e.what());
        return epr::kExitError;
    }
    return epr::kExitError;
}
