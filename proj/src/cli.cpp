// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/cli.hpp"

#include "stemsplat/config.hpp"
#include "stemsplat/errors.hpp"
#include "stemsplat/metrics.hpp"
#include "stemsplat/opacity_integral.hpp"
#include "stemsplat/rasterizer.hpp"
#include "stemsplat/sampler.hpp"
#include "stemsplat/scene_io.hpp"
#include "stemsplat/stem_fit.hpp"
#include "stemsplat/synth.hpp"
#include "stemsplat/trunk_prep.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <unordered_map>

namespace stemsplat {

namespace {

using nlohmann::json;

/// Write through a sibling temp file and rename, so outputs appear atomically.
template <typename Fn>
void atomic_write(const std::filesystem::path& path, Fn&& writer) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    writer(tmp);
    std::filesystem::rename(tmp, path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    });
}

std::unordered_map<std::uint32_t, int> load_gaussian_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("gaussian_index,tree_id", 0) != 0)
        throw FormatError("gaussian label header must be 'gaussian_index,tree_id' in '" +
                          path.string() + "'");
    std::unordered_map<std::uint32_t, int> map;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw FormatError("bad gaussian label row in '" + path.string() + "'");
        map[static_cast<std::uint32_t>(std::stoul(line.substr(0, comma)))] =
            std::stoi(line.substr(comma + 1));
    }
    return map;
}

std::string method_tag(const std::string& selector) {
    if (selector == "circle-w") return "circle-weighted";
    if (selector == "circle-nw") return "circle-unweighted";
    return "cylinder";
}

json record_to_json(const DbhRecord& r) {
    json j;
    j["tree"] = r.tree_id;
    j["method"] = r.method;
    j["success"] = r.success;
    j["dbh_cm"] = r.dbh_cm;
    j["h_bh"] = r.h_bh;
    j["failure_reason"] = r.failure_reason;
    j["candidate_slices"] = r.diagnostics.candidate_slices;
    j["fitted_slices"] = r.diagnostics.fitted_slices;
    j["taper_inliers"] = r.diagnostics.taper_inliers;
    j["window_h_max"] = r.diagnostics.window_h_max;
    return j;
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out_dir;
    int stems = 10;
    double clutter = 0.2;
    int cameras = 12;
    std::string terrain = "flat";
};

void run_synth(const RunConfig& cfg, const SynthArgs& args) {
    PlotParams p;
    p.n_stems = args.stems;
    p.clutter_fraction = args.clutter;
    p.camera_count = args.cameras;
    if (args.terrain == "flat") p.terrain = TerrainKind::flat;
    else if (args.terrain == "sloped") p.terrain = TerrainKind::sloped;
    else throw ConfigError("terrain must be 'flat' or 'sloped'");
    p.seed = cfg.seed;
    p.plot_id = cfg.plot_id;
    p.breast_height = cfg.h_bh;

    const SyntheticScene scene = make_plot(p);
    scene.write(args.out_dir);
    std::cout << "stage=synth gaussians=" << scene.field.size() << " stems="
              << scene.truths.size() << " cameras=" << scene.rig.size() << " out=" << args.out_dir
              << "\n";
}

struct SampleArgs {
    std::string splats, cameras, out;
    std::string gaussian_labels, labels_out;
    std::string dump_masks;
    std::string world_transform;
    bool means_only = false;
};

void run_sample(const RunConfig& cfg, const SampleArgs& args) {
    GaussianField field = load_gaussian_field(args.splats);
    CameraRig rig = load_cameras(args.cameras);
    if (!args.world_transform.empty()) {
        const WorldTransform tf = WorldTransform::parse(args.world_transform);
        apply_world_transform(field, tf);
        apply_world_transform(rig, tf);
    }

    const CandidateCloud candidates =
        args.means_only ? export_means(field)
                        : sample_candidates(field, cfg.draws_per_splat, cfg.seed, cfg.threads);

    const RenderConfig rc = cfg.render_config();
    std::vector<ViewSplats> view_splats;
    std::vector<AlphaMask> masks;
    view_splats.reserve(rig.size());
    masks.reserve(rig.size());
    for (const auto& view : rig.views) {
        view_splats.push_back(project_gaussians(field, view, rc));
        masks.push_back(render_alpha_mask(view_splats.back(), view, rc));
    }
    if (!args.dump_masks.empty()) {
        std::filesystem::create_directories(args.dump_masks);
        for (std::size_t v = 0; v < masks.size(); ++v)
            save_mask_pgm(masks[v], std::filesystem::path(args.dump_masks) /
                                        ("mask_" + std::to_string(v) + ".pgm"));
    }

    const ScoredPointCloud cloud = score_points(candidates, rig, view_splats, masks, cfg.score_config());
    atomic_write(args.out, [&](const std::filesystem::path& tmp) { save_scored_cloud(cloud, tmp); });

    if (!args.gaussian_labels.empty()) {
        if (args.labels_out.empty())
            throw ConfigError("labels_out is required when gaussian_labels is given");
        const auto gmap = load_gaussian_labels(args.gaussian_labels);
        TrunkLabelSet labels;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto it = gmap.find(cloud.source[i]);
            if (it != gmap.end()) labels.labels.emplace(i, it->second);
        }
        atomic_write(args.labels_out,
                     [&](const std::filesystem::path& tmp) { save_trunk_labels(labels, tmp); });
    }

    std::cout << "stage=sample candidates=" << candidates.size() << " kept=" << cloud.size()
              << " views=" << rig.size() << " out=" << args.out << "\n";
}

struct MeasureArgs {
    std::string cloud, labels, terrain;
    std::string records_json, records_csv, diagnostics_json;
    std::string dump_instances;
};

void run_measure(const RunConfig& cfg, const MeasureArgs& args) {
    const ScoredPointCloud cloud = load_scored_cloud(args.cloud);
    const TrunkLabelSet labels = load_trunk_labels(args.labels);
    const TerrainModel terrain = load_terrain(args.terrain);

    const StemFitConfig fit_cfg = cfg.stem_fit_config();
    const std::string tag = method_tag(cfg.method);

    if (!args.dump_instances.empty()) std::filesystem::create_directories(args.dump_instances);

    std::vector<DbhRecord> records;
    for (auto& instance : split_instances(cloud, labels)) {
        DbhRecord rec;
        try {
            const TrunkInstance grounded = attach_ground(instance, terrain, cfg.bilinear_ground);
            if (!args.dump_instances.empty())
                save_instance_ply(grounded,
                                  std::filesystem::path(args.dump_instances) /
                                      ("tree_" + std::to_string(grounded.tree_id) + ".ply"));
            if (cfg.method == "circle-w")
                rec = estimate_dbh_circle(grounded, fit_cfg, true, cfg.seed);
            else if (cfg.method == "circle-nw")
                rec = estimate_dbh_circle(grounded, fit_cfg, false, cfg.seed);
            else
                rec = estimate_dbh_cylinder(grounded, fit_cfg, cfg.seed);
        } catch (const GroundLookupError& e) {
            rec.tree_id = instance.tree_id;
            rec.method = tag;
            rec.h_bh = cfg.h_bh;
            rec.failure_reason = e.what();
        }
        records.push_back(std::move(rec));
    }

    json out;
    out["config_hash"] = cfg.hash();
    out["config"] = cfg.serialize();
    out["plot"] = cfg.plot_id;
    out["seed"] = cfg.seed;
    out["method"] = tag;
    out["records"] = json::array();
    for (const auto& r : records) out["records"].push_back(record_to_json(r));
    write_text(args.records_json, out.dump(2) + "\n");

    if (!args.records_csv.empty()) {
        std::string csv = "# config_hash=" + cfg.hash() + "\n";
        csv += "plot,tree,method,success,dbh_cm,h_bh,failure_reason\n";
        char buf[256];
        for (const auto& r : records) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%s,%d,%.10g,%.10g,%s\n", cfg.plot_id, r.tree_id,
                          r.method.c_str(), r.success ? 1 : 0, r.dbh_cm, r.h_bh,
                          r.failure_reason.c_str());
            csv += buf;
        }
        write_text(args.records_csv, csv);
    }

    if (!args.diagnostics_json.empty()) {
        json diag;
        diag["config_hash"] = cfg.hash();
        diag["trees"] = json::array();
        for (const auto& r : records) {
            json t = record_to_json(r);
            t["slice_diameters"] = json::array();
            for (const auto& s : r.diagnostics.slice_diameters)
                t["slice_diameters"].push_back({{"slice", s.slice_id}, {"h", s.h}, {"d_m", s.d}});
            t["taper_inlier_slices"] = r.diagnostics.taper_inlier_ids;
            diag["trees"].push_back(std::move(t));
        }
        write_text(args.diagnostics_json, diag.dump(2) + "\n");
    }

    int successes = 0;
    for (const auto& r : records) successes += r.success ? 1 : 0;
    std::cout << "stage=measure trees=" << records.size() << " success=" << successes
              << " method=" << tag << " out=" << args.records_json << "\n";
}

struct EvalArgs {
    std::vector<std::string> records;
    std::string inventory;
    std::string report_json, report_txt, scatter_csv, scatter_svg;
};

std::vector<PlotRecords> load_records_files(const std::vector<std::string>& paths) {
    std::vector<PlotRecords> groups;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw FormatError("bad records JSON in '" + path + "': " + e.what());
        }
        PlotRecords group;
        group.plot = j.at("plot").get<int>();
        for (const auto& rj : j.at("records")) {
            DbhRecord r;
            r.tree_id = rj.at("tree").get<int>();
            r.method = rj.at("method").get<std::string>();
            r.success = rj.at("success").get<bool>();
            r.dbh_cm = rj.at("dbh_cm").get<double>();
            r.h_bh = rj.at("h_bh").get<double>();
            r.failure_reason = rj.value("failure_reason", "");
            group.records.push_back(std::move(r));
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

void run_eval(const RunConfig& cfg, const EvalArgs& args) {
    const auto groups = load_records_files(args.records);
    const FieldInventory inventory = load_inventory(args.inventory);
    const MetricsReport report = evaluate(groups, inventory);

    json j = report_to_json(report);
    j["config_hash"] = cfg.hash();
    write_text(args.report_json, j.dump(2) + "\n");

    const std::string table = render_table(report);
    std::cout << table;
    if (!args.report_txt.empty())
        write_text(args.report_txt, table + "# config_hash=" + cfg.hash() + "\n");

    if (!args.scatter_csv.empty() || !args.scatter_svg.empty()) {
        if (args.scatter_csv.empty() || args.scatter_svg.empty())
            throw ConfigError("scatter_csv and scatter_svg must be given together");
        atomic_write(args.scatter_csv, [&](const std::filesystem::path& tmp_csv) {
            atomic_write(args.scatter_svg, [&](const std::filesystem::path& tmp_svg) {
                emit_scatter(groups, inventory, tmp_csv, tmp_svg, cfg.hash());
            });
        });
    }

    std::cout << "stage=eval groups=" << groups.size() << " successes=" << report.pooled.successes
              << "/" << report.pooled.total << " out=" << args.report_json << "\n";
}

void run_pipeline(const RunConfig& cfg, const SynthArgs& synth_args) {
    const std::filesystem::path out_dir = synth_args.out_dir;
    SynthArgs sa = synth_args;
    sa.out_dir = (out_dir / "scene").string();
    run_synth(cfg, sa);

    // measurement runs on the dense export: every sample kept, reliability
    // and support stored for downstream weighting
    RunConfig dense_cfg = cfg;
    dense_cfg.dense = true;

    SampleArgs sm;
    sm.splats = (out_dir / "scene" / "splats.ply").string();
    sm.cameras = (out_dir / "scene").string();
    sm.out = (out_dir / "cloud.ply").string();
    sm.gaussian_labels = (out_dir / "scene" / "gaussian_labels.csv").string();
    sm.labels_out = (out_dir / "labels.csv").string();
    run_sample(dense_cfg, sm);

    MeasureArgs me;
    me.cloud = sm.out;
    me.labels = sm.labels_out;
    me.terrain = (out_dir / "scene" / "terrain.asc").string();
    me.records_json = (out_dir / "records.json").string();
    me.records_csv = (out_dir / "records.csv").string();
    me.diagnostics_json = (out_dir / "diagnostics.json").string();
    run_measure(cfg, me);

    EvalArgs ev;
    ev.records = {me.records_json};
    ev.inventory = (out_dir / "scene" / "inventory.csv").string();
    ev.report_json = (out_dir / "report.json").string();
    ev.report_txt = (out_dir / "report.txt").string();
    ev.scatter_csv = (out_dir / "scatter.csv").string();
    ev.scatter_svg = (out_dir / "scatter.svg").string();
    run_eval(cfg, ev);

    std::cout << "stage=pipeline status=ok out=" << out_dir.string() << "\n";
}

void add_config_options(CLI::App* sub, RunConfig& cfg, std::string& config_file) {
    sub->add_option("--config", config_file, "key=value config file; explicit flags win");
    sub->add_option("--draws-per-splat", cfg.draws_per_splat, "candidate draws per Gaussian");
    sub->add_option("--tau", cfg.tau, "reliability threshold for surface extraction");
    sub->add_option("--tau-mask", cfg.tau_mask, "foreground gate on the alpha mask");
    sub->add_option("--mahalanobis-gate", cfg.mahalanobis_gate, "screen-space splat gate, sigmas");
    sub->add_flag("--dense", cfg.dense, "keep all points, store reliability/support");
    sub->add_option("--alpha-cap", cfg.alpha_cap);
    sub->add_option("--eps-alpha", cfg.eps_alpha);
    sub->add_option("--t-stop", cfg.t_stop);
    sub->add_option("--eigen-floor", cfg.eigen_floor_px2, "screen covariance eigenvalue floor, px^2");
    sub->add_option("--footprint-sigma", cfg.footprint_sigma);
    sub->add_option("--near-clip", cfg.near_clip);
    sub->add_option("--tile-size", cfg.tile_size);
    sub->add_option("--slice-thickness", cfg.slice_thickness, "slab height H, meters");
    sub->add_option("--slice-spacing", cfg.slice_spacing, "slice spacing, meters");
    sub->add_option("--slice-min-points", cfg.slice_min_points);
    sub->add_option("--circle-hypotheses", cfg.circle_hypotheses);
    sub->add_option("--min-inlier-fraction", cfg.min_inlier_fraction);
    sub->add_option("--r-min", cfg.r_min);
    sub->add_option("--r-max", cfg.r_max);
    sub->add_option("--radius-exponent", cfg.radius_exponent);
    sub->add_option("--taper-residual", cfg.taper_residual);
    sub->add_option("--taper-trials", cfg.taper_trials);
    sub->add_option("--taper-min-samples", cfg.taper_min_samples);
    sub->add_option("--taper-min-inliers", cfg.taper_min_inliers);
    sub->add_option("--taper-initial-window", cfg.taper_initial_window);
    sub->add_option("--cylinder-trials", cfg.cylinder_trials);
    sub->add_option("--cylinder-inlier-band", cfg.cylinder_inlier_band);
    sub->add_option("--cylinder-min-inlier-ratio", cfg.cylinder_min_inlier_ratio);
    sub->add_option("--cylinder-gm-sigma", cfg.cylinder_gm_sigma);
    sub->add_option("--h-bh", cfg.h_bh, "breast height, meters");
    sub->add_option("--seed", cfg.seed);
    sub->add_option("--method", cfg.method, "circle-w | circle-nw | cylinder");
    sub->add_flag("--bilinear-ground", cfg.bilinear_ground);
    sub->add_option("--plot-id", cfg.plot_id);
    sub->add_option("--threads", cfg.threads, "0 = hardware concurrency");
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Gaussian-splat scenes to reliability-scored point clouds and stem DBH"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_file;

    // config file first, then flags on top (flags win)
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) config_file = argv[i + 1];
        else if (a.rfind("--config=", 0) == 0) config_file = a.substr(9);
    }
    try {
        if (!config_file.empty()) cfg.apply_file(config_file);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    SynthArgs synth_args;
    SampleArgs sample_args;
    MeasureArgs measure_args;
    EvalArgs eval_args;

    auto* synth = app.add_subcommand("synth", "generate a synthetic plot scene");
    synth->add_option("--out", synth_args.out_dir, "output scene directory")->required();
    synth->add_option("--stems", synth_args.stems);
    synth->add_option("--clutter", synth_args.clutter, "floater fraction of all Gaussians");
    synth->add_option("--cameras", synth_args.cameras);
    synth->add_option("--terrain", synth_args.terrain, "flat | sloped");
    add_config_options(synth, cfg, config_file);

    auto* sample = app.add_subcommand("sample", "splats -> reliability-scored point cloud");
    sample->add_option("--splats", sample_args.splats)->required();
    sample->add_option("--cameras", sample_args.cameras, "directory with cameras.txt + images.txt")
        ->required();
    sample->add_option("--out", sample_args.out, "scored cloud PLY")->required();
    sample->add_option("--gaussian-labels", sample_args.gaussian_labels,
                       "per-Gaussian tree ids (gaussian_index,tree_id)");
    sample->add_option("--labels-out", sample_args.labels_out, "point-level trunk label CSV");
    sample->add_option("--dump-masks", sample_args.dump_masks, "directory for 16-bit PGM masks");
    sample->add_option("--world-transform", sample_args.world_transform,
                       "similarity transform 'scale,qw,qx,qy,qz,tx,ty,tz' applied at load");
    sample->add_flag("--means", sample_args.means_only, "export Gaussian means only (ablation)");
    add_config_options(sample, cfg, config_file);

    auto* measure = app.add_subcommand("measure", "scored cloud + labels + terrain -> DBH records");
    measure->add_option("--cloud", measure_args.cloud)->required();
    measure->add_option("--labels", measure_args.labels)->required();
    measure->add_option("--terrain", measure_args.terrain)->required();
    measure->add_option("--out", measure_args.records_json, "records JSON")->required();
    measure->add_option("--records-csv", measure_args.records_csv);
    measure->add_option("--diagnostics", measure_args.diagnostics_json);
    measure->add_option("--dump-instances", measure_args.dump_instances,
                        "directory for per-tree inspection PLYs");
    add_config_options(measure, cfg, config_file);

    auto* eval = app.add_subcommand("eval", "records + inventory -> metrics report");
    eval->add_option("--records", eval_args.records, "records JSON file(s)")->required();
    eval->add_option("--inventory", eval_args.inventory)->required();
    eval->add_option("--report", eval_args.report_json, "report JSON")->required();
    eval->add_option("--table", eval_args.report_txt, "aligned-text table");
    eval->add_option("--scatter-csv", eval_args.scatter_csv);
    eval->add_option("--scatter-svg", eval_args.scatter_svg);
    add_config_options(eval, cfg, config_file);

    auto* pipeline = app.add_subcommand("pipeline", "synth + sample + measure + eval");
    pipeline->add_option("--out", synth_args.out_dir, "output directory")->required();
    pipeline->add_option("--stems", synth_args.stems);
    pipeline->add_option("--clutter", synth_args.clutter);
    pipeline->add_option("--cameras", synth_args.cameras);
    pipeline->add_option("--terrain", synth_args.terrain, "flat | sloped");
    add_config_options(pipeline, cfg, config_file);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        cfg.validate();
        if (synth->parsed()) run_synth(cfg, synth_args);
        else if (sample->parsed()) run_sample(cfg, sample_args);
        else if (measure->parsed()) run_measure(cfg, measure_args);
        else if (eval->parsed()) run_eval(cfg, eval_args);
        else if (pipeline->parsed()) run_pipeline(cfg, synth_args);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace stemsplat
