// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/config.hpp"

#include "stemsplat/errors.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace stemsplat {

namespace {

std::string fmt_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Entry {
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

std::vector<Entry> entries(RunConfig& c) {
    std::vector<Entry> out;
    auto add_double = [&](const char* key, double& ref) {
        out.push_back({key, [&ref] { return fmt_value(ref); },
                       [&ref, key](const std::string& v) {
                           try {
                               ref = std::stod(v);
                           } catch (...) {
                               throw ConfigError(std::string(key) + ": not a number: '" + v + "'");
                           }
                       }});
    };
    auto add_int = [&](const char* key, int& ref) {
        out.push_back({key, [&ref] { return std::to_string(ref); },
                       [&ref, key](const std::string& v) {
                           try {
                               ref = std::stoi(v);
                           } catch (...) {
                               throw ConfigError(std::string(key) + ": not an integer: '" + v + "'");
                           }
                       }});
    };
    auto add_bool = [&](const char* key, bool& ref) {
        out.push_back({key, [&ref] { return ref ? std::string("true") : std::string("false"); },
                       [&ref, key](const std::string& v) {
                           if (v == "true" || v == "1") ref = true;
                           else if (v == "false" || v == "0") ref = false;
                           else throw ConfigError(std::string(key) + ": expected true/false: '" + v + "'");
                       }});
    };
    auto add_u64 = [&](const char* key, std::uint64_t& ref) {
        out.push_back({key, [&ref] { return std::to_string(ref); },
                       [&ref, key](const std::string& v) {
                           try {
                               ref = std::stoull(v);
                           } catch (...) {
                               throw ConfigError(std::string(key) + ": not an integer: '" + v + "'");
                           }
                       }});
    };
    auto add_string = [&](const char* key, std::string& ref) {
        out.push_back({key, [&ref] { return ref; }, [&ref](const std::string& v) { ref = v; }});
    };

    add_int("draws_per_splat", c.draws_per_splat);
    add_double("tau", c.tau);
    add_double("tau_mask", c.tau_mask);
    add_double("mahalanobis_gate", c.mahalanobis_gate);
    add_bool("dense", c.dense);
    add_double("alpha_cap", c.alpha_cap);
    add_double("eps_alpha", c.eps_alpha);
    add_double("t_stop", c.t_stop);
    add_double("eigen_floor_px2", c.eigen_floor_px2);
    add_double("footprint_sigma", c.footprint_sigma);
    add_double("near_clip", c.near_clip);
    add_int("tile_size", c.tile_size);
    add_double("slice_thickness", c.slice_thickness);
    add_double("slice_spacing", c.slice_spacing);
    add_int("slice_min_points", c.slice_min_points);
    add_int("circle_hypotheses", c.circle_hypotheses);
    add_double("min_inlier_fraction", c.min_inlier_fraction);
    add_double("r_min", c.r_min);
    add_double("r_max", c.r_max);
    add_double("radius_exponent", c.radius_exponent);
    add_double("taper_residual", c.taper_residual);
    add_int("taper_trials", c.taper_trials);
    add_int("taper_min_samples", c.taper_min_samples);
    add_int("taper_min_inliers", c.taper_min_inliers);
    add_double("taper_initial_window", c.taper_initial_window);
    add_int("cylinder_trials", c.cylinder_trials);
    add_double("cylinder_inlier_band", c.cylinder_inlier_band);
    add_double("cylinder_min_inlier_ratio", c.cylinder_min_inlier_ratio);
    add_double("cylinder_gm_sigma", c.cylinder_gm_sigma);
    add_double("h_bh", c.h_bh);
    add_u64("seed", c.seed);
    add_string("method", c.method);
    add_bool("bilinear_ground", c.bilinear_ground);
    add_int("plot_id", c.plot_id);
    return out;
}

void check(bool ok, const char* field, const char* rule) {
    if (!ok) throw ConfigError(std::string(field) + " " + rule);
}

} // namespace

void RunConfig::validate() const {
    check(draws_per_splat >= 1, "draws_per_splat", "must be >= 1");
    check(tau >= 0 && tau <= 1, "tau", "must lie in [0, 1]");
    check(tau_mask >= 0 && tau_mask <= 1, "tau_mask", "must lie in [0, 1]");
    check(mahalanobis_gate > 0, "mahalanobis_gate", "must be > 0");
    check(alpha_cap > 0 && alpha_cap < 1, "alpha_cap", "must lie in (0, 1)");
    check(eps_alpha >= 0 && eps_alpha < 1, "eps_alpha", "must lie in [0, 1)");
    check(t_stop >= 0 && t_stop < 1, "t_stop", "must lie in [0, 1)");
    check(eigen_floor_px2 >= 0, "eigen_floor_px2", "must be >= 0");
    check(footprint_sigma > 0, "footprint_sigma", "must be > 0");
    check(near_clip > 0, "near_clip", "must be > 0");
    check(tile_size >= 1, "tile_size", "must be >= 1");
    check(slice_thickness > 0, "slice_thickness", "must be > 0");
    check(slice_spacing > 0, "slice_spacing", "must be > 0");
    check(slice_min_points >= 3, "slice_min_points", "must be >= 3");
    check(circle_hypotheses >= 1, "circle_hypotheses", "must be >= 1");
    check(min_inlier_fraction >= 0 && min_inlier_fraction <= 1, "min_inlier_fraction",
          "must lie in [0, 1]");
    check(r_min > 0, "r_min", "must be > 0");
    check(r_max > r_min, "r_max", "must be > r_min");
    check(radius_exponent > 0, "radius_exponent", "must be > 0");
    check(taper_residual > 0, "taper_residual", "must be > 0");
    check(taper_trials >= 1, "taper_trials", "must be >= 1");
    check(taper_min_samples >= 2, "taper_min_samples", "must be >= 2");
    check(taper_min_inliers >= taper_min_samples, "taper_min_inliers",
          "must be >= taper_min_samples");
    check(taper_initial_window > 0, "taper_initial_window", "must be > 0");
    check(cylinder_trials >= 1, "cylinder_trials", "must be >= 1");
    check(cylinder_inlier_band > 0, "cylinder_inlier_band", "must be > 0");
    check(cylinder_min_inlier_ratio >= 0 && cylinder_min_inlier_ratio <= 1,
          "cylinder_min_inlier_ratio", "must lie in [0, 1]");
    check(cylinder_gm_sigma > 0, "cylinder_gm_sigma", "must be > 0");
    check(h_bh > 0, "h_bh", "must be > 0");
    check(method == "circle-w" || method == "circle-nw" || method == "cylinder", "method",
          "must be one of circle-w, circle-nw, cylinder");
    check(threads >= 0, "threads", "must be >= 0");
}

std::string RunConfig::serialize() const {
    auto& self = const_cast<RunConfig&>(*this);
    std::ostringstream out;
    for (const auto& e : entries(self)) out << e.key << "=" << e.get() << "\n";
    return out.str();
}

std::string RunConfig::hash() const {
    const std::string s = serialize();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path.string() + "'");
    auto table = entries(*this);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string stripped;
        for (char ch : line) {
            if (ch == '#') break;
            stripped.push_back(ch);
        }
        while (!stripped.empty() && std::isspace(static_cast<unsigned char>(stripped.back())))
            stripped.pop_back();
        std::size_t start = 0;
        while (start < stripped.size() && std::isspace(static_cast<unsigned char>(stripped[start])))
            ++start;
        stripped = stripped.substr(start);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value");
        std::string key = stripped.substr(0, eq);
        std::string value = stripped.substr(eq + 1);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
        while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front())))
            value.erase(value.begin());
        bool found = false;
        for (auto& e : table)
            if (e.key == key) {
                e.set(value);
                found = true;
                break;
            }
        if (!found) throw ConfigError("unknown config key '" + key + "'");
    }
}

RenderConfig RunConfig::render_config() const {
    RenderConfig r;
    r.alpha_cap = alpha_cap;
    r.eps_alpha = eps_alpha;
    r.t_stop = t_stop;
    r.eigen_floor_px2 = eigen_floor_px2;
    r.footprint_sigma = footprint_sigma;
    r.near_clip = near_clip;
    r.tile_size = tile_size;
    r.threads = threads;
    return r;
}

ScoreConfig RunConfig::score_config() const {
    ScoreConfig s;
    s.tau = tau;
    s.tau_mask = tau_mask;
    s.alpha_cap = alpha_cap;
    s.mahalanobis_gate = mahalanobis_gate;
    s.dense = dense;
    s.threads = threads;
    return s;
}

StemFitConfig RunConfig::stem_fit_config() const {
    StemFitConfig f;
    f.slicing.thickness = slice_thickness;
    f.slicing.spacing = slice_spacing;
    f.slicing.min_points = slice_min_points;
    f.circle.hypotheses = circle_hypotheses;
    f.circle.min_inlier_fraction = min_inlier_fraction;
    f.circle.r_min = r_min;
    f.circle.r_max = r_max;
    f.circle.radius_exponent = radius_exponent;
    f.taper.residual_m = taper_residual;
    f.taper.trials = taper_trials;
    f.taper.min_samples = taper_min_samples;
    f.taper.min_inliers = taper_min_inliers;
    f.taper.initial_window_m = taper_initial_window;
    f.cylinder.trials = cylinder_trials;
    f.cylinder.inlier_band_m = cylinder_inlier_band;
    f.cylinder.min_inlier_ratio = cylinder_min_inlier_ratio;
    f.cylinder.gm_sigma_m = cylinder_gm_sigma;
    f.h_bh = h_bh;
    f.threads = threads;
    return f;
}

} // namespace stemsplat
