#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "epr/config.hpp"
#include "epr/correlator.hpp"
#include "epr/detector.hpp"
#include "epr/eprreport.hpp"
#include "epr/io.hpp"
#include "epr/parallel.hpp"
#include "epr/peakfit.hpp"

namespace epr {

namespace detail {

inline rng::Purpose source_purpose(Plane p) {
    return p == Plane::NearField ? rng::Purpose::NearFieldSource : rng::Purpose::FarFieldSource;
}
inline rng::Purpose detector_purpose(Plane p) {
    return p == Plane::NearField ? rng::Purpose::NearFieldDetector : rng::Purpose::FarFieldDetector;
}

//! Frames generated per parallel batch when streaming to disk.
inline constexpr std::size_t kSimulateBatch = 256;

} // namespace detail

//! Frame t of `plane`: source stream (seed, t, source purpose), detector stream (seed, t, detector purpose).
inline Frame simulate_frame(const SourceParams& src, const DetectorParams& det, Plane plane, std::uint64_t seed,
                            std::int64_t t) {
    rng::CounterStream a(seed, static_cast<std::uint64_t>(t), detail::source_purpose(plane));
    rng::CounterStream b(seed, static_cast<std::uint64_t>(t), detail::detector_purpose(plane));
    return rasterize(sample_frame(src, plane, a), det, b, t);
}

//! Simulates frames [first, first + count) in parallel; the result never depends on workers.
inline std::vector<Frame> simulate_frames(const RunConfig& cfg, const SourceParams& src, Plane plane,
                                          std::int64_t first, std::size_t count, unsigned workers) {
    std::vector<Frame> frames(count);
    parallel_for(count, workers, [&](std::size_t i) {
        frames[i] = simulate_frame(src, cfg.detector, plane, cfg.seed, first + static_cast<std::int64_t>(i));
    });
    return frames;
}

inline FrameStack simulate_stack(const RunConfig& cfg, Plane plane, unsigned workers = 1) {
    const SourceParams src = cfg.source_for(plane);
    FrameStack s;
    s.width = cfg.geometry.sensor_width;
    s.height = cfg.geometry.sensor_height;
    s.plane = plane;
    s.seed = cfg.seed;
    s.frames = simulate_frames(cfg, src, plane, 0, static_cast<std::size_t>(cfg.n_frames), workers);
    return s;
}

//! Streams a simulated stack to a BPI1 file in batches, without holding it in memory.
inline void simulate_to_file(const RunConfig& cfg, Plane plane, const std::filesystem::path& path,
                             unsigned workers = 1) {
    const SourceParams src = cfg.source_for(plane);
    io::StackWriter w(path, {io::kStackVersion, static_cast<std::uint32_t>(cfg.geometry.sensor_width),
                             static_cast<std::uint32_t>(cfg.geometry.sensor_height),
                             static_cast<std::uint32_t>(cfg.n_frames), plane, 0, cfg.seed});
    const auto total = static_cast<std::size_t>(cfg.n_frames);
    for (std::size_t first = 0; first < total; first += detail::kSimulateBatch) {
        const std::size_t count = std::min(detail::kSimulateBatch, total - first);
        for (const Frame& f : simulate_frames(cfg, src, plane, static_cast<std::int64_t>(first), count, workers))
            w.write(f);
    }
    w.finish();
}

//! Signal and witness maps of one stack, both carrying the signal map's mask.
struct CorrelationResult {
    CorrMap corr;
    CorrMap witness;
    double witness_max_z = 0.0;
};

inline CorrelationResult correlate_stack(const FrameStack& stack, const RunConfig& cfg, unsigned workers = 1) {
    const RoiPair& rois = cfg.rois(stack.plane);
    CorrelationResult r;
    r.corr = build_mask(intercorrelation(stack, rois, workers), rois, cfg.analysis.mask);
    r.witness = witness(stack, rois, workers);
    r.witness.mask = r.corr.mask;
    r.witness_max_z = max_abs_z(r.witness);
    return r;
}

//! Writes <prefix>_corr.{csv,bin}, <prefix>_witness.{csv,bin} and <prefix>_mask.csv; returns the paths.
inline std::vector<std::filesystem::path> write_correlation(const CorrelationResult& r, const std::string& prefix) {
    const std::vector<std::filesystem::path> paths = {prefix + "_corr.csv", prefix + "_corr.bin",
                                                      prefix + "_witness.csv", prefix + "_witness.bin",
                                                      prefix + "_mask.csv"};
    const CorrMap& c = r.corr;
    io::detail::write_file(paths[0], io::encode_csv(c.width, c.height, c.values));
    io::write_map_bin(paths[1], c);
    io::detail::write_file(paths[2], io::encode_csv(c.width, c.height, r.witness.values));
    io::write_map_bin(paths[3], r.witness);
    io::detail::write_file(paths[4], io::encode_csv(c.width, c.height, c.mask));
    return paths;
}

/*!
 * Fits both maps and builds the report. Maps read back from disk carry no mask, so
 * the mask is rebuilt from the config's ROIs.
 */
inline EprReport report_from_maps(const CorrMap& nf, const CorrMap& ff, const RunConfig& cfg) {
    if (nf.plane != Plane::NearField) throw FormatError("near-field map is tagged as far field");
    if (ff.plane != Plane::FarField) throw FormatError("far-field map is tagged as near field");
    for (const CorrMap* m : {&nf, &ff}) {
        const RoiPair& r = cfg.rois(m->plane);
        if (m->width != r.width() || m->height != r.height())
            throw FormatError(std::string(to_string(m->plane)) + "-field map is " + std::to_string(m->width) + "x" +
                              std::to_string(m->height) + " but the config ROI is " + std::to_string(r.width()) +
                              "x" + std::to_string(r.height()));
    }
    const GaussFit nf_fit = analyze_map(nf, cfg.rois_near, cfg.analysis);
    const GaussFit ff_fit = analyze_map(ff, cfg.rois_far, cfg.analysis);
    EprReport rep = build_report(nf_fit, ff_fit, cfg.geometry);
    rep.n_frames_nf = nf.n_frames;
    rep.n_frames_ff = ff.n_frames;
    return rep;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const AxisTriple& t) {
    return {{"x", t.x}, {"y", t.y}, {"iso", t.iso}};
}

inline nlohmann::ordered_json to_json(const GaussFit& f) {
    nlohmann::ordered_json j;
    j["amplitude"] = f.amplitude;
    j["sigma_x"] = f.sigma.x;
    j["sigma_y"] = f.sigma.y;
    j["center_x"] = f.center.x;
    j["center_y"] = f.center.y;
    j["baseline"] = f.baseline;
    j["sd"] = {{"amplitude", f.sd(GaussFit::kAmplitude)}, {"sigma_x", f.sd(GaussFit::kSigmaX)},
               {"sigma_y", f.sd(GaussFit::kSigmaY)}, {"center_x", f.sd(GaussFit::kCenterX)},
               {"center_y", f.sd(GaussFit::kCenterY)}, {"baseline", f.sd(GaussFit::kBaseline)}};
    j["covariance"] = f.covariance;
    j["window"] = {f.window.x0, f.window.y0, f.window.w, f.window.h};
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    j["n_points"] = f.n_points;
    j["residual_rms"] = f.residual_rms;
    j["gradient_ratio"] = f.gradient_ratio;
    j["significance"] = f.significance();
    return j;
}

inline nlohmann::ordered_json to_json(const EprReport& r) {
    nlohmann::ordered_json j;
    j["nf"] = to_json(r.nf);
    j["ff"] = to_json(r.ff);
    j["delta_r"] = r.delta_r;
    j["delta_r_err"] = r.delta_r_err;
    j["delta_p"] = r.delta_p;
    j["delta_p_err"] = r.delta_p_err;
    j["r_n"] = r.r_n;
    j["r_n_err"] = r.r_n_err;
    j["r_p"] = r.r_p;
    j["r_p_err"] = r.r_p_err;
    j["products"] = to_json(r.products);
    j["products_err"] = to_json(r.products_err);
    j["factors"] = to_json(r.factors);
    j["factors_err"] = to_json(r.factors_err);
    if (r.bootstrap) {
        const BootstrapSpread& b = *r.bootstrap;
        j["bootstrap"] = {{"n_resamples", b.n_resamples},
                          {"n_failed", b.n_failed},
                          {"failures", b.failures},
                          {"nf_sigma", {b.nf_sigma.x, b.nf_sigma.y}},
                          {"ff_sigma", {b.ff_sigma.x, b.ff_sigma.y}},
                          {"delta_r", b.delta_r},
                          {"delta_p", b.delta_p},
                          {"r_n", b.r_n},
                          {"r_p", b.r_p},
                          {"products", to_json(b.products)},
                          {"factors", to_json(b.factors)}};
    } else {
        j["bootstrap"] = nullptr;
    }
    j["fluence_nf"] = r.fluence_nf ? nlohmann::ordered_json(*r.fluence_nf) : nlohmann::ordered_json(nullptr);
    j["fluence_ff"] = r.fluence_ff ? nlohmann::ordered_json(*r.fluence_ff) : nlohmann::ordered_json(nullptr);
    j["n_frames_nf"] = r.n_frames_nf;
    j["n_frames_ff"] = r.n_frames_ff;
    j["geometry"] = {{"pixel_pitch", r.geometry.pixel_pitch},
                     {"focal_length", r.geometry.focal_length},
                     {"wavelength", r.geometry.wavelength},
                     {"width", r.geometry.sensor_width},
                     {"height", r.geometry.sensor_height},
                     {"product_unit", r.geometry.product_unit()}};
    j["verdict"] = {{"x", r.verdict.x}, {"y", r.verdict.y}, {"iso", r.verdict.iso}};
    return j;
}

inline nlohmann::ordered_json to_json(const VarianceOfDifference& v) {
    return {{"ratio", v.ratio},
            {"one_minus_ratio", 1.0 - v.ratio},
            {"raw_ratio", v.raw_ratio},
            {"std_error", v.std_error},
            {"bin", v.bin},
            {"n_superpixels", v.n_superpixels},
            {"n_frames", v.n_frames}};
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

//! Exit codes: the verdict for scripted sweeps.
enum ExitCode : int { kExitViolation = 0, kExitNoViolation = 1, kExitError = 2 };

inline int exit_code(const EprReport& r) { return r.verdict.iso ? kExitViolation : kExitNoViolation; }

//! Per-plane diagnostics that are not part of the EPR report proper.
struct PlaneDiagnostics {
    FluenceCheck fluence;
    double witness_max_z = 0.0;
    VarianceOfDifference vod;
};

struct PipelineResult {
    EprReport report;
    PlaneDiagnostics near;
    PlaneDiagnostics far;
    //! Output files relative to the output directory, in the order they were written.
    std::vector<std::string> files;
};

//! Runs `fn`, prefixing any error with the stage name.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error("stage '" + stage + "': " + e.what());
    } catch (const std::exception& e) {
        throw Error("stage '" + stage + "': " + e.what());
    }
}

/*!
 * Writes a manifest of every listed file with its size and SHA-256, plus the config
 * digest. No timestamps, so identical runs give identical manifests.
 */
inline void write_manifest(const std::filesystem::path& dir, const std::vector<std::string>& files,
                           const std::string& config_text, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["format"] = "epr-manifest-1";
    j["seed"] = seed;
    j["config_sha256"] = io::sha256_hex(config_text);
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    std::vector<std::string> sorted = files;
    std::sort(sorted.begin(), sorted.end());
    for (const std::string& f : sorted)
        list.push_back({{"file", f},
                        {"bytes", std::filesystem::file_size(dir / f)},
                        {"sha256", io::sha256_file(dir / f)}});
    j["files"] = list;
    io::detail::write_file(dir / "manifest.json", j.dump(2) + "\n");
}

/*!
 * simulate (both planes) -> correlate -> fit -> bootstrap -> report, into `out_dir`:
 *   near.bpi far.bpi, {near,far}_{corr,witness}.{csv,bin}, {near,far}_mask.csv,
 *   report.json, summary.txt, manifest.json
 * `config_text` is hashed into the manifest.
 */
inline PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                   const std::string& config_text, unsigned workers = 1) {
    if (cfg.n_frames < 2) throw ConfigError("run.n_frames must be >= 2 for the pipeline (got " +
                                            std::to_string(cfg.n_frames) + ")");
    std::filesystem::create_directories(out_dir);
    PipelineResult res;
    FrameStack stacks[2];
    CorrMap maps[2];
    for (int k = 0; k < 2; ++k) {
        const Plane plane = k == 0 ? Plane::NearField : Plane::FarField;
        const std::string name(to_string(plane));
        PlaneDiagnostics& diag = k == 0 ? res.near : res.far;
        run_stage("simulate " + name, [&] {
            simulate_to_file(cfg, plane, out_dir / (name + ".bpi"), workers);
            stacks[k] = io::read_stack(out_dir / (name + ".bpi"));
        });
        res.files.push_back(name + ".bpi");
        const Rect regions[2] = {cfg.rois(plane).roi1, cfg.rois(plane).roi2};
        diag.fluence = check_fluence(stacks[k], regions);
        run_stage("correlate " + name, [&] {
            const CorrelationResult c = correlate_stack(stacks[k], cfg, workers);
            for (const auto& p : write_correlation(c, (out_dir / name).string()))
                res.files.push_back(p.filename().string());
            maps[k] = c.corr;
            diag.witness_max_z = c.witness_max_z;
            diag.vod = variance_of_difference(stacks[k], cfg.rois(plane), cfg.analysis.bin);
        });
    }

    res.report = run_stage("fit", [&] { return report_from_maps(maps[0], maps[1], cfg); });
    res.report.fluence_nf = res.near.fluence.fluence;
    res.report.fluence_ff = res.far.fluence.fluence;
    if (cfg.analysis.n_resamples > 0) {
        res.report.bootstrap = run_stage("bootstrap", [&] {
            return bootstrap_errors(stacks[0], stacks[1], cfg.rois_near, cfg.rois_far, cfg.geometry, cfg.analysis,
                                    cfg.analysis.n_resamples, cfg.seed, workers);
        });
        apply_verdict(res.report);
    }

    run_stage("report", [&] {
        nlohmann::ordered_json j = to_json(res.report);
        for (const auto* d : {&res.near, &res.far}) {
            nlohmann::ordered_json dj;
            dj["fluence"] = d->fluence.fluence;
            dj["fluence_out_of_regime"] = d->fluence.out_of_regime;
            dj["witness_max_z"] = d->witness_max_z;
            dj["variance_of_difference"] = to_json(d->vod);
            j["diagnostics"][d == &res.near ? "near" : "far"] = dj;
        }
        io::detail::write_file(out_dir / "report.json", j.dump(2) + "\n");
        io::detail::write_file(out_dir / "summary.txt", summary_text(res.report));
    });
    res.files.push_back("report.json");
    res.files.push_back("summary.txt");
    write_manifest(out_dir, res.files, config_text, cfg.seed);
    return res;
}

} // namespace epr
