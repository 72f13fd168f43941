// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/metrics.hpp"

#include "stemsplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace stemsplat {

namespace {

struct MatchedPair {
    double field_cm;
    double estimate_cm;
    int plot;
    int tree;
    std::string method;
};

/// Successful, inventory-matched pairs; throws on records the inventory
/// does not know.
std::vector<MatchedPair> match_records(const std::vector<PlotRecords>& records,
                                       const FieldInventory& inventory) {
    std::vector<MatchedPair> pairs;
    std::set<std::pair<int, int>> seen;
    for (const auto& group : records) {
        for (const auto& rec : group.records) {
            const auto* row = inventory.find(group.plot, rec.tree_id);
            if (!row)
                throw DataError("record (plot " + std::to_string(group.plot) + ", tree " +
                                std::to_string(rec.tree_id) + ") has no inventory row");
            if (!seen.insert({group.plot, rec.tree_id}).second)
                throw DataError("duplicate record for (plot " + std::to_string(group.plot) +
                                ", tree " + std::to_string(rec.tree_id) + ")");
            if (!rec.success) continue;
            pairs.push_back({row->dbh_cm, rec.dbh_cm, group.plot, rec.tree_id, rec.method});
        }
    }
    return pairs;
}

GroupMetrics aggregate(const std::string& label, const std::vector<MatchedPair>& pairs, int total) {
    GroupMetrics g;
    g.group = label;
    g.total = total;
    g.successes = static_cast<int>(pairs.size());
    if (pairs.empty()) return g;

    double se = 0, ae = 0, me = 0, field_sum = 0;
    for (const auto& p : pairs) {
        const double err = p.estimate_cm - p.field_cm;
        se += err * err;
        ae += std::abs(err);
        me += err;
        field_sum += p.field_cm;
    }
    const double n = static_cast<double>(pairs.size());
    g.rmse_cm = std::sqrt(se / n);
    g.mae_cm = ae / n;
    g.me_cm = me / n;
    const double mean_field = field_sum / n;
    g.rrmse_pct = mean_field > 0 ? std::optional<double>(*g.rmse_cm / mean_field * 100.0)
                                 : std::nullopt;
    return g;
}

std::string fmt2(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v);
    return buf;
}

} // namespace

MetricsReport evaluate(const std::vector<PlotRecords>& records, const FieldInventory& inventory) {
    std::set<int> plots;
    for (const auto& g : records)
        if (!plots.insert(g.plot).second)
            throw DataError("plot " + std::to_string(g.plot) + " appears twice in the records");

    const auto pairs = match_records(records, inventory);

    auto inventory_count = [&](int plot) {
        int c = 0;
        for (const auto& r : inventory.rows)
            if (r.plot == plot) ++c;
        return c;
    };

    MetricsReport report;
    int pooled_total = 0;
    for (const auto& group : records) {
        std::vector<MatchedPair> own;
        for (const auto& p : pairs)
            if (p.plot == group.plot) own.push_back(p);
        const int total = inventory_count(group.plot);
        pooled_total += total;
        report.per_plot.push_back(aggregate(std::to_string(group.plot), own, total));
    }
    report.pooled = aggregate("All", pairs, pooled_total);
    return report;
}

void emit_scatter(const std::vector<PlotRecords>& records, const FieldInventory& inventory,
                  const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                  const std::string& config_hash) {
    const auto pairs = match_records(records, inventory);

    {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write '" + csv_path.string() + "'");
        if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
        out << "field_dbh_cm,estimate_dbh_cm\n";
        char buf[64];
        for (const auto& p : pairs) {
            std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", p.field_cm, p.estimate_cm);
            out << buf;
        }
        if (!out) throw IoError("write failed for '" + csv_path.string() + "'");
    }

    // square plot, data mapped into a margin-inset viewport, 1:1 dashed line
    const double size = 480.0, margin = 40.0;
    double vmax = 10.0;
    for (const auto& p : pairs) vmax = std::max({vmax, p.field_cm, p.estimate_cm});
    vmax *= 1.05;
    auto sx = [&](double v) { return margin + v / vmax * (size - 2 * margin); };
    auto sy = [&](double v) { return size - margin - v / vmax * (size - 2 * margin); };

    std::ofstream svg(svg_path);
    if (!svg) throw IoError("cannot write '" + svg_path.string() + "'");
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
    if (!config_hash.empty()) svg << "<!-- config_hash=" << config_hash << " -->\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size - 2 * margin
        << "\" height=\"" << size - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(vmax / 1.05)
        << "\" y2=\"" << sy(vmax / 1.05)
        << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    svg << "<text x=\"" << size / 2 << "\" y=\"" << size - 8
        << "\" text-anchor=\"middle\" font-size=\"13\">field DBH (cm)</text>\n";
    svg << "<text x=\"12\" y=\"" << size / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
        << "transform=\"rotate(-90 12 " << size / 2 << ")\">estimated DBH (cm)</text>\n";
    for (const auto& p : pairs)
        svg << "<circle cx=\"" << sx(p.field_cm) << "\" cy=\"" << sy(p.estimate_cm)
            << "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
    svg << "</svg>\n";
    if (!svg) throw IoError("write failed for '" + svg_path.string() + "'");
}

std::string render_table(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-6s %10s %10s %10s %10s %9s\n", "Plot", "RMSE(cm)",
                  "RRMSE(%)", "MAE(cm)", "ME(cm)", "SR");
    out << line;
    auto emit = [&](const GroupMetrics& g) {
        const std::string sr = std::to_string(g.successes) + "/" + std::to_string(g.total);
        std::snprintf(line, sizeof(line), "%-6s %10s %10s %10s %10s %9s\n", g.group.c_str(),
                      fmt2(g.rmse_cm).c_str(), fmt2(g.rrmse_pct).c_str(), fmt2(g.mae_cm).c_str(),
                      fmt2(g.me_cm).c_str(), sr.c_str());
        out << line;
    };
    for (const auto& g : report.per_plot) emit(g);
    emit(report.pooled);
    return out.str();
}

nlohmann::json report_to_json(const MetricsReport& report) {
    auto group_json = [](const GroupMetrics& g) {
        nlohmann::json j;
        j["group"] = g.group;
        j["successes"] = g.successes;
        j["total"] = g.total;
        if (g.rmse_cm) j["rmse_cm"] = *g.rmse_cm;
        if (g.rrmse_pct) j["rrmse_pct"] = *g.rrmse_pct;
        if (g.mae_cm) j["mae_cm"] = *g.mae_cm;
        if (g.me_cm) j["me_cm"] = *g.me_cm;
        return j;
    };
    nlohmann::json j;
    j["per_plot"] = nlohmann::json::array();
    for (const auto& g : report.per_plot) j["per_plot"].push_back(group_json(g));
    j["pooled"] = group_json(report.pooled);
    return j;
}

} // namespace stemsplat
