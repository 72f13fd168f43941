// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stemsplat/scene_io.hpp"
#include "stemsplat/stem_fit.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stemsplat {

/// All records of one evaluated plot.
struct PlotRecords {
    int plot = 0;
    std::vector<DbhRecord> records;
};

/// Error statistics of one group (a plot, or the pooled "All" row).
/// Errors are estimate - field, in cm; RRMSE is normalized by the mean field
/// DBH of the successfully matched subset of the same group.
struct GroupMetrics {
    std::string group;
    int successes = 0;
    int total = 0;
    std::optional<double> rmse_cm;
    std::optional<double> rrmse_pct;
    std::optional<double> mae_cm;
    std::optional<double> me_cm;
};

struct MetricsReport {
    std::vector<GroupMetrics> per_plot;
    GroupMetrics pooled;
};

/// Match records to the inventory and aggregate per plot plus pooled.
/// Records without an inventory row are rejected; inventory trees of an
/// evaluated plot count toward the success-rate denominator whether or not
/// a record exists. Failed trees never enter the error sums.
MetricsReport evaluate(const std::vector<PlotRecords>& records, const FieldInventory& inventory);

/// Estimated-vs-field scatter: a two-column CSV (field_dbh_cm,
/// estimate_dbh_cm) and an SVG with one circle per row plus a dashed 1:1
/// reference line.
void emit_scatter(const std::vector<PlotRecords>& records, const FieldInventory& inventory,
                  const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                  const std::string& config_hash = "");

/// Aligned text table; columns RMSE, RRMSE, MAE, ME, SR.
std::string render_table(const MetricsReport& report);

nlohmann::json report_to_json(const MetricsReport& report);

} // namespace stemsplat
