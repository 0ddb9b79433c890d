#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "epr/config.hpp"

using namespace epr;

namespace {

std::string desk_text() {
    std::ifstream in(std::filesystem::path(CONFIG_DIR) / "desk.ini");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

//! desk.ini with the first line starting with `key` replaced (or removed when `line` is empty).
std::string with_line(const std::string& key, const std::string& line) {
    std::istringstream in(desk_text());
    std::string out, l;
    bool done = false;
    while (std::getline(in, l)) {
        if (!done && l.rfind(key, 0) == 0) {
            done = true;
            if (!line.empty()) out += line + "\n";
            continue;
        }
        out += l + "\n";
    }
    EXPECT_TRUE(done) << key;
    return out;
}

std::string error_of(const std::string& text) {
    try {
        parse_config(text, "cfg.ini");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

int line_of(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    std::string l;
    for (int no = 1; std::getline(in, l); ++no)
        if (l.rfind(prefix, 0) == 0) return no;
    return -1;
}

} // namespace

TEST(Config, ParsesTheDeskRun) {
    const RunConfig c = load_config(std::filesystem::path(CONFIG_DIR) / "desk.ini");
    EXPECT_EQ(c.geometry.sensor_width, 128);
    EXPECT_EQ(c.detector.width, 128);
    EXPECT_DOUBLE_EQ(c.geometry.pixel_pitch, 16e-6);
    EXPECT_EQ(c.n_frames, 2000);
    EXPECT_EQ(c.seed, 20121016u);
    ASSERT_TRUE(c.violation);
    EXPECT_DOUBLE_EQ(*c.violation, 5.16);
    ASSERT_TRUE(c.fluence_target);
    EXPECT_DOUBLE_EQ(*c.fluence_target, 0.15);
    EXPECT_EQ(c.rois_near.roi2.x0, 68);
    EXPECT_EQ(c.rois_far.roi1.h, 120);
    EXPECT_EQ(c.rois_far.plane, Plane::FarField);
    EXPECT_EQ(c.analysis.mask.smear_axis, SmearAxis::Y);
    EXPECT_EQ(c.analysis.bin, 8);
    EXPECT_EQ(c.analysis.n_resamples, 100);
    EXPECT_DOUBLE_EQ(c.detector.quantum_efficiency, 0.9);
}

TEST(Config, ReferenceConfigParses) {
    const RunConfig c = load_config(std::filesystem::path(CONFIG_DIR) / "reference.ini");
    EXPECT_EQ(c.geometry.sensor_width, 512);
    EXPECT_EQ(c.n_frames, 10000);
    EXPECT_FALSE(c.violation);
}

TEST(Config, SourceIsCalibratedPerPlane) {
    const RunConfig c = parse_config(desk_text());
    const SourceParams nf = c.source_for(Plane::NearField), ff = c.source_for(Plane::FarField);
    EXPECT_NEAR(expected_violation(nf, c.geometry), 5.16, 1e-9);
    EXPECT_GT(nf.mean_pairs_per_frame, 0.0);
    EXPECT_GT(ff.mean_pairs_per_frame, 0.0);
}

TEST(Config, UnknownKeyNamesFileLineAndKey) {
    const std::string text = with_line("smear_prob", "smear_prob = 0.02\nsmear_probability = 0.1");
    const std::string e = error_of(text);
    const int line = line_of(text, "smear_probability");
    EXPECT_NE(e.find("cfg.ini:" + std::to_string(line)), std::string::npos) << e;
    EXPECT_NE(e.find("detector.smear_probability"), std::string::npos) << e;
    EXPECT_NE(e.find("unknown key"), std::string::npos) << e;
}

TEST(Config, MalformedValuesAreReportedWithTheirLine) {
    const std::string text = with_line("quantum_efficiency", "quantum_efficiency = high");
    const std::string e = error_of(text);
    EXPECT_NE(e.find("cfg.ini:" + std::to_string(line_of(text, "quantum_efficiency"))), std::string::npos) << e;
    EXPECT_NE(error_of(with_line("roi1 = 4 4 56 120", "roi1 = 4 4 56")).find("expected 4 numbers"), std::string::npos);
    EXPECT_NE(error_of(with_line("roi1 = 4 4 56 120", "roi1 = 4 4 56.5 120")).find("integers"), std::string::npos);
    EXPECT_NE(error_of(with_line("smear_axis", "smear_axis = z")).find("smear_axis"), std::string::npos);
    EXPECT_NE(error_of(with_line("shape", "shape = round")).find("calibration.shape"), std::string::npos);
}

TEST(Config, RequiredFields) {
    EXPECT_NE(error_of(with_line("n_frames", "")).find("run.n_frames"), std::string::npos);
    EXPECT_NE(error_of(with_line("fluence_target", "")).find("mean_pairs_per_frame"), std::string::npos);
    EXPECT_NE(error_of(with_line("fluence_target", "fluence_target = 0.15\nmean_pairs_per_frame = 3"))
                  .find("either"),
              std::string::npos);
    std::string no_far = desk_text();
    no_far = no_far.substr(0, no_far.find("[roi_far]")) + no_far.substr(no_far.find("[run]"));
    EXPECT_NE(error_of(no_far).find("roi_far"), std::string::npos);
}

TEST(Config, SemanticChecks) {
    EXPECT_NE(error_of(with_line("bin", "bin = 7")).find("analysis.bin"), std::string::npos);
    EXPECT_NE(error_of(with_line("n_resamples", "n_resamples = 20")).find("n_resamples"), std::string::npos);
    EXPECT_TRUE(error_of(with_line("n_resamples", "n_resamples = 0")).empty());
    EXPECT_NE(error_of(with_line("fit_half_window", "fit_half_window = 40")).find("fit_half_window"), std::string::npos);
    EXPECT_NE(error_of(with_line("n_frames", "n_frames = -1")).find("n_frames"), std::string::npos);
    EXPECT_NE(error_of(with_line("roi2 = 68", "roi2 = 90 4 56 120")).find("outside"), std::string::npos);
    EXPECT_NE(error_of(with_line("roi2 = 68", "roi2 = 68 4 48 120")).find("equal size"), std::string::npos);
    EXPECT_NE(error_of(with_line("quantum_efficiency", "quantum_efficiency = 1.5")), "");
    EXPECT_NE(error_of(with_line("fluence_target", "fluence_target = 0.001")).find("fluence_target"), std::string::npos);
    EXPECT_TRUE(error_of(with_line("n_frames", "n_frames = 0")).empty());
}

TEST(Config, MissingFileIsAConfigError) {
    EXPECT_THROW(load_config("/nonexistent/run.ini"), ConfigError);
}
