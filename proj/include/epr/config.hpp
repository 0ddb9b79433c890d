#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "epr/correlator.hpp"
#include "epr/detector.hpp"
#include "epr/eprreport.hpp"
#include "epr/optics.hpp"
#include "epr/source.hpp"

namespace epr {

/*!
 * Everything that determines a run. Together with the seed contract of the random
 * streams, a RunConfig fixes every output byte.
 */
struct RunConfig {
    OpticalGeometry geometry;
    SourceParams source;
    //! When set, mean_pairs_per_frame is solved per plane to reach this fluence over that plane's ROIs.
    std::optional<double> fluence_target;
    //! When set, source widths come from calibrate_to_violation with `shape`.
    std::optional<double> violation;
    CalibrationShape shape;
    DetectorParams detector;
    RoiPair rois_near{{}, {}, Plane::NearField};
    RoiPair rois_far{{}, {}, Plane::FarField};
    std::int64_t n_frames = 0;
    std::uint64_t seed = 0;
    AnalysisOptions analysis;

    [[nodiscard]] const RoiPair& rois(Plane p) const { return p == Plane::NearField ? rois_near : rois_far; }

    //! Source with calibrated widths and the mean pair rate for `plane` resolved.
    [[nodiscard]] SourceParams source_for(Plane plane) const {
        SourceParams p = violation ? calibrate_to_violation(*violation, shape, geometry, source) : source;
        if (fluence_target) {
            const Rect regions[2] = {rois(plane).roi1, rois(plane).roi2};
            p.mean_pairs_per_frame = mean_pairs_for_fluence(*fluence_target, p, detector, plane, regions);
        }
        return p;
    }

    void validate() const {
        geometry.validate();
        detector.validate();
        if (detector.width != geometry.sensor_width || detector.height != geometry.sensor_height)
            throw ConfigError("detector size must equal geometry.width x geometry.height");
        if (n_frames < 0 || n_frames > 0xffffffffLL) throw ConfigError("run.n_frames must be in [0, 2^32)");
        for (const RoiPair* r : {&rois_near, &rois_far}) {
            const std::string name = r->plane == Plane::NearField ? "roi_near" : "roi_far";
            if (r->roi1.w <= 0 || r->roi1.h <= 0) throw ConfigError(name + ".roi1 must have positive size");
            try {
                r->validate(geometry.sensor_width, geometry.sensor_height);
            } catch (const EstimatorError& e) {
                throw ConfigError(name + ": " + e.what());
            }
            if (analysis.bin < 1 || r->roi1.w % analysis.bin != 0 || r->roi1.h % analysis.bin != 0)
                throw ConfigError("analysis.bin must divide the " + name + " size");
            if (2 * analysis.mask.fit_half_window + 1 > std::min(r->roi1.w, r->roi1.h))
                throw ConfigError("analysis.fit_half_window does not fit inside " + name);
        }
        if (analysis.mask.fit_half_window < 2) throw ConfigError("analysis.fit_half_window must be >= 2");
        if (!(analysis.mask.radius >= 0.0)) throw ConfigError("analysis.mask_radius must be >= 0");
        if (analysis.n_resamples != 0 && analysis.n_resamples < 50)
            throw ConfigError("analysis.n_resamples must be 0 (off) or >= 50");
        if (!(analysis.fit.min_significance >= 0.0)) throw ConfigError("analysis.min_significance must be >= 0");
        if (fluence_target && !(*fluence_target > detector.false_count_prob && *fluence_target < 1.0))
            throw ConfigError("source.fluence_target must exceed detector.false_count_prob and be < 1");
        SourceParams check = violation ? calibrate_to_violation(*violation, shape, geometry, source) : source;
        check.validate();
    }
};

namespace detail {

//! Line numbers of "section.key" entries, for diagnostics only.
inline std::map<std::string, int> ini_key_lines(const std::string& text) {
    std::map<std::string, int> lines;
    std::istringstream in(text);
    std::string line, section;
    for (int no = 1; std::getline(in, line); ++no) {
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] == ';' || line[b] == '#') continue;
        if (line[b] == '[') {
            section = line.substr(b + 1, line.find(']') - b - 1);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(b, eq - b);
        key.erase(key.find_last_not_of(" \t") + 1);
        lines[section + "." + key] = no;
    }
    return lines;
}

class IniReader {
public:
    IniReader(const boost::property_tree::ptree& tree, std::map<std::string, int> lines, std::string origin)
        : tree_(tree), lines_(std::move(lines)), origin_(std::move(origin)) {}

    template <typename T>
    std::optional<T> get(const std::string& section, const std::string& key) {
        const std::string path = section + "." + key;
        used_.insert(path);
        const auto node = tree_.get_child_optional(boost::property_tree::ptree::path_type(path, '.'));
        if (!node) return std::nullopt;
        std::istringstream in(node->data());
        T value{};
        in >> value;
        std::string rest;
        if (in.fail() || (in >> rest)) fail(path, "cannot parse '" + node->data() + "'");
        return value;
    }

    template <typename T>
    void read(const std::string& section, const std::string& key, T& into) {
        if (auto v = get<T>(section, key)) into = *v;
    }

    //! Whitespace-separated list of exactly n numbers.
    std::optional<std::vector<double>> numbers(const std::string& section, const std::string& key, std::size_t n) {
        const std::string path = section + "." + key;
        used_.insert(path);
        const auto node = tree_.get_child_optional(boost::property_tree::ptree::path_type(path, '.'));
        if (!node) return std::nullopt;
        std::istringstream in(node->data());
        std::vector<double> v;
        std::string tok;
        while (in >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                fail(path, "'" + tok + "' is not a number");
            }
        }
        if (v.size() != n) fail(path, "expected " + std::to_string(n) + " numbers, got " + std::to_string(v.size()));
        return v;
    }

    void read_vec(const std::string& section, const std::string& key, Vec2& into) {
        if (auto v = numbers(section, key, 2)) into = {(*v)[0], (*v)[1]};
    }

    void read_rect(const std::string& section, const std::string& key, Rect& into) {
        if (auto v = numbers(section, key, 4)) {
            for (double x : *v)
                if (x != std::floor(x)) fail(section + "." + key, "ROI values must be integers");
            into = {static_cast<int>((*v)[0]), static_cast<int>((*v)[1]), static_cast<int>((*v)[2]),
                    static_cast<int>((*v)[3])};
        }
    }

    //! Rejects keys nobody asked for, which are almost always typos.
    void reject_unknown() const {
        for (const auto& [section, body] : tree_) {
            if (body.empty() && !body.data().empty())
                throw ConfigError(origin_ + ": key '" + section + "' outside any section");
            for (const auto& [key, value] : body) {
                const std::string path = section + "." + key;
                if (!used_.count(path)) fail(path, "unknown key");
            }
        }
    }

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        const auto it = lines_.find(path);
        const std::string where = it == lines_.end() ? origin_ : origin_ + ":" + std::to_string(it->second);
        throw ConfigError(where + ": " + path + ": " + what);
    }

private:
    const boost::property_tree::ptree& tree_;
    std::map<std::string, int> lines_;
    std::string origin_;
    std::set<std::string> used_;
};

} // namespace detail

/*!
 * Parses an INI document. Sections: geometry, source, calibration, detector,
 * roi_near, roi_far, run, analysis. Vectors are written "x y", rectangles "x0 y0 w h".
 * Errors name the file, line and key.
 */
inline RunConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    detail::IniReader ini(tree, detail::ini_key_lines(text), origin);
    RunConfig c;

    ini.read("geometry", "pixel_pitch", c.geometry.pixel_pitch);
    ini.read("geometry", "focal_length", c.geometry.focal_length);
    ini.read("geometry", "wavelength", c.geometry.wavelength);
    ini.read("geometry", "width", c.geometry.sensor_width);
    ini.read("geometry", "height", c.geometry.sensor_height);
    c.detector.width = c.geometry.sensor_width;
    c.detector.height = c.geometry.sensor_height;
    c.source.near = c.source.far = default_centers(c.geometry.sensor_width, c.geometry.sensor_height);

    ini.read_vec("source", "pump_sigma", c.source.pump_sigma);
    ini.read_vec("source", "nf_pair_sigma", c.source.nf_pair_sigma);
    ini.read_vec("source", "ff_sum_sigma", c.source.ff_sum_sigma);
    ini.read_vec("source", "ff_marginal_sigma", c.source.ff_marginal_sigma);
    ini.read("source", "unpaired_fraction", c.source.unpaired_fraction);
    ini.read_vec("source", "near_center1", c.source.near.c1);
    ini.read_vec("source", "near_center2", c.source.near.c2);
    ini.read_vec("source", "far_center1", c.source.far.c1);
    ini.read_vec("source", "far_center2", c.source.far.c2);
    ini.read("source", "envelope_contrast", c.source.envelope.contrast);
    ini.read("source", "envelope_span", c.source.envelope.span);
    const auto pairs = ini.get<double>("source", "mean_pairs_per_frame");
    c.fluence_target = ini.get<double>("source", "fluence_target");
    if (pairs && c.fluence_target) ini.fail("source.fluence_target", "set either mean_pairs_per_frame or fluence_target");
    if (!pairs && !c.fluence_target) ini.fail("source.mean_pairs_per_frame", "one of mean_pairs_per_frame or fluence_target is required");
    if (pairs) c.source.mean_pairs_per_frame = *pairs;

    c.violation = ini.get<double>("calibration", "violation");
    if (auto shape = ini.get<std::string>("calibration", "shape")) {
        if (*shape == "experiment")
            c.shape = CalibrationShape::experiment();
        else if (*shape != "isotropic")
            ini.fail("calibration.shape", "expected 'experiment' or 'isotropic', got '" + *shape + "'");
    }
    ini.read("calibration", "nf_aspect", c.shape.nf_aspect);
    ini.read("calibration", "ff_aspect", c.shape.ff_aspect);
    ini.read("calibration", "near_far_ratio", c.shape.near_far_ratio);

    ini.read("detector", "quantum_efficiency", c.detector.quantum_efficiency);
    ini.read("detector", "false_count_prob", c.detector.false_count_prob);
    ini.read("detector", "smear_prob", c.detector.smear_prob);

    for (RoiPair* r : {&c.rois_near, &c.rois_far}) {
        const std::string section = r->plane == Plane::NearField ? "roi_near" : "roi_far";
        if (!tree.get_child_optional(section)) ini.fail(section, "section is required");
        if (!ini.numbers(section, "roi1", 4)) ini.fail(section + ".roi1", "required");
        if (!ini.numbers(section, "roi2", 4)) ini.fail(section + ".roi2", "required");
        ini.read_rect(section, "roi1", r->roi1);
        ini.read_rect(section, "roi2", r->roi2);
    }

    if (auto n = ini.get<std::int64_t>("run", "n_frames")) c.n_frames = *n;
    else ini.fail("run.n_frames", "required");
    ini.read("run", "seed", c.seed);

    ini.read("analysis", "fit_half_window", c.analysis.mask.fit_half_window);
    ini.read("analysis", "mask_radius", c.analysis.mask.radius);
    if (auto axis = ini.get<std::string>("analysis", "smear_axis")) {
        if (*axis == "x") c.analysis.mask.smear_axis = SmearAxis::X;
        else if (*axis == "y") c.analysis.mask.smear_axis = SmearAxis::Y;
        else ini.fail("analysis.smear_axis", "expected 'x' or 'y'");
    }
    ini.read("analysis", "bin", c.analysis.bin);
    ini.read("analysis", "n_resamples", c.analysis.n_resamples);
    ini.read("analysis", "min_significance", c.analysis.fit.min_significance);
    ini.read("analysis", "max_iterations", c.analysis.fit.max_iterations);

    ini.reject_unknown();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

} // namespace epr
