// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/stem_fit.hpp"

#include "stemsplat/errors.hpp"
#include "stemsplat/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace stemsplat {

// ---------------------------------------------------------------------------
// Slicing
// ---------------------------------------------------------------------------

SliceSet build_slices(const TrunkInstance& instance, const SlicingParams& params) {
    if (!(params.spacing > 0)) throw ConfigError("slice spacing must be > 0");
    if (!(params.thickness > 0)) throw ConfigError("slice thickness must be > 0");
    if (instance.heights.size() != instance.points.size())
        throw DataError("instance has no heights; attach ground first");

    SliceSet set;
    set.thickness = params.thickness;
    set.spacing = params.spacing;
    if (instance.points.empty()) return set;

    const double half = params.thickness / 2.0;
    const double max_h = *std::max_element(instance.heights.begin(), instance.heights.end());
    const int last_slice = static_cast<int>(std::floor((max_h + half) / params.spacing));
    if (last_slice < 0) return set;

    std::vector<Slice> slices(static_cast<std::size_t>(last_slice) + 1);
    for (int s = 0; s <= last_slice; ++s) {
        slices[s].id = s;
        slices[s].h_center = s * params.spacing;
    }
    for (std::size_t i = 0; i < instance.points.size(); ++i) {
        const double h = instance.heights[i];
        const int lo = std::max(0, static_cast<int>(std::ceil((h - half) / params.spacing)));
        const int hi = std::min(last_slice, static_cast<int>(std::floor((h + half) / params.spacing)));
        for (int s = lo; s <= hi; ++s) {
            slices[s].q.emplace_back(instance.points[i].x(), instance.points[i].y());
            slices[s].w.push_back(instance.reliability[i]);
        }
    }
    for (auto& sl : slices)
        if (static_cast<int>(sl.size()) >= params.min_points) set.slices.push_back(std::move(sl));
    return set;
}

// ---------------------------------------------------------------------------
// Circle fitting
// ---------------------------------------------------------------------------

std::optional<std::pair<Vec2, double>> fit_circle_3pt(const Vec2& q1, const Vec2& q2,
                                                      const Vec2& q3) {
    const Vec2 mean = (q1 + q2 + q3) / 3.0;
    const Vec2 a = q1 - mean, b = q2 - mean, c = q3 - mean;

    const double cross = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    const double scale2 = std::max({a.squaredNorm(), b.squaredNorm(), c.squaredNorm()});
    if (std::abs(cross) <= 1e-12 * std::max(scale2, 1e-30)) return std::nullopt;

    // x^2 + y^2 + A x + B y + D = 0 in the centered frame
    Eigen::Matrix3d lhs;
    lhs << a.x(), a.y(), 1.0, b.x(), b.y(), 1.0, c.x(), c.y(), 1.0;
    const Eigen::Vector3d rhs(-a.squaredNorm(), -b.squaredNorm(), -c.squaredNorm());
    const Eigen::Vector3d abd = Eigen::PartialPivLU<Eigen::Matrix3d>(lhs).solve(rhs);

    const Vec2 center_local(-abd[0] / 2.0, -abd[1] / 2.0);
    const double r2 = center_local.squaredNorm() - abd[2];
    if (!(r2 > 0.0) || !std::isfinite(r2)) return std::nullopt;
    return std::make_pair(Vec2(center_local + mean), std::sqrt(r2));
}

std::optional<CircleEstimate> ransac_solid_circle(const Slice& slice,
                                                  const CircleRansacParams& params, bool weighted,
                                                  RngStream& rng) {
    const std::size_t n = slice.size();
    if (n < 3) return std::nullopt;

    std::vector<double> prefix;
    double total_w = 0.0;
    if (weighted) {
        prefix.reserve(n);
        for (double w : slice.w) {
            total_w += w;
            prefix.push_back(total_w);
        }
        if (!(total_w > 0.0)) return std::nullopt;
    }

    // zero-weight members occupy an empty span of the cumulative sum, so
    // weighted draws can never land on them
    auto draw = [&]() -> std::size_t {
        if (!weighted) return static_cast<std::size_t>(rng.next_below(n));
        const double u = rng.next_double() * total_w;
        const auto it = std::upper_bound(prefix.begin(), prefix.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - prefix.begin()), n - 1);
    };

    CircleEstimate best;
    bool have_best = false;
    double best_score = -std::numeric_limits<double>::infinity();

    for (int k = 0; k < params.hypotheses; ++k) {
        std::size_t i1 = draw(), i2 = i1, i3 = i1;
        for (int guard = 0; i2 == i1 && guard < 64; ++guard) i2 = draw();
        for (int guard = 0; (i3 == i1 || i3 == i2) && guard < 64; ++guard) i3 = draw();
        if (i2 == i1 || i3 == i1 || i3 == i2) continue;

        const auto circle = fit_circle_3pt(slice.q[i1], slice.q[i2], slice.q[i3]);
        if (!circle) continue;
        const auto& [center, radius] = *circle;
        if (radius < params.r_min || radius > params.r_max) continue;

        const double r2 = radius * radius;
        double inlier_weight = 0.0;
        std::size_t inlier_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if ((slice.q[i] - center).squaredNorm() <= r2) {
                ++inlier_count;
                inlier_weight += weighted ? slice.w[i] : 1.0;
            }
        }
        if (static_cast<double>(inlier_count) < params.min_inlier_fraction * static_cast<double>(n))
            continue;

        const double score = inlier_weight / std::pow(radius, params.radius_exponent);
        if (!have_best || score > best_score || (score == best_score && radius < best.radius)) {
            have_best = true;
            best_score = score;
            best.center = center;
            best.radius = radius;
            best.score = score;
            best.inlier_fraction = static_cast<double>(inlier_count) / static_cast<double>(n);
            best.hypotheses = params.hypotheses;
        }
    }
    if (!have_best) return std::nullopt;
    return best;
}

// ---------------------------------------------------------------------------
// Taper regression
// ---------------------------------------------------------------------------

namespace {

struct Line {
    double b0 = 0, b1 = 0;
};

std::optional<Line> least_squares_line(const std::vector<SliceDiameter>& diams,
                                       const std::vector<std::size_t>& idx) {
    const double m = static_cast<double>(idx.size());
    double sh = 0, sd = 0, shh = 0, shd = 0;
    for (std::size_t i : idx) {
        sh += diams[i].h;
        sd += diams[i].d;
        shh += diams[i].h * diams[i].h;
        shd += diams[i].h * diams[i].d;
    }
    const double det = m * shh - sh * sh;
    if (std::abs(det) < 1e-12) return std::nullopt;
    Line l;
    l.b1 = (m * shd - sh * sd) / det;
    l.b0 = (sd - l.b1 * sh) / m;
    return l;
}

} // namespace

std::optional<TaperModel> fit_taper(const std::vector<SliceDiameter>& diameters,
                                    const TaperParams& params, double spacing, RngStream& rng) {
    if (static_cast<int>(diameters.size()) < params.min_inliers) return std::nullopt;
    if (!(spacing > 0)) throw ConfigError("taper window step must be > 0");

    std::vector<SliceDiameter> diams = diameters;
    std::sort(diams.begin(), diams.end(),
              [](const SliceDiameter& a, const SliceDiameter& b) { return a.slice_id < b.slice_id; });
    const double max_h = std::max_element(diams.begin(), diams.end(),
                                          [](const SliceDiameter& a, const SliceDiameter& b) {
                                              return a.h < b.h;
                                          })
                             ->h;

    std::optional<TaperModel> last_valid;
    std::vector<int> prev_ids;
    bool have_prev = false;

    for (double h_max = params.initial_window_m;; h_max += spacing) {
        const bool final_window = h_max >= max_h;

        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < diams.size(); ++i)
            if (diams[i].h <= h_max + 1e-9) subset.push_back(i);

        bool window_valid = false;
        if (static_cast<int>(subset.size()) >= std::max(params.min_samples, 2)) {
            std::size_t best_count = 0;
            std::vector<std::size_t> best_inliers;
            std::vector<std::size_t> sample(static_cast<std::size_t>(params.min_samples));

            for (int t = 0; t < params.trials; ++t) {
                bool ok = true;
                for (std::size_t s = 0; s < sample.size(); ++s) {
                    int guard = 0;
                    std::size_t pick;
                    do {
                        pick = subset[rng.next_below(subset.size())];
                    } while (std::find(sample.begin(), sample.begin() + s, pick) !=
                                 sample.begin() + s &&
                             ++guard < 64);
                    if (guard >= 64) {
                        ok = false;
                        break;
                    }
                    sample[s] = pick;
                }
                if (!ok) continue;
                const auto line = least_squares_line(diams, sample);
                if (!line || line->b1 >= 0.0) continue;

                std::vector<std::size_t> inliers;
                for (std::size_t i : subset)
                    if (std::abs(diams[i].d - (line->b0 + line->b1 * diams[i].h)) <=
                        params.residual_m)
                        inliers.push_back(i);
                if (inliers.size() > best_count) {
                    best_count = inliers.size();
                    best_inliers = std::move(inliers);
                }
            }

            if (static_cast<int>(best_count) >= params.min_inliers) {
                const auto refit = least_squares_line(diams, best_inliers);
                if (refit && refit->b1 < 0.0) {
                    std::vector<int> ids;
                    for (std::size_t i : subset)
                        if (std::abs(diams[i].d - (refit->b0 + refit->b1 * diams[i].h)) <=
                            params.residual_m)
                            ids.push_back(diams[i].slice_id);
                    if (static_cast<int>(ids.size()) >= params.min_inliers) {
                        TaperModel model;
                        model.beta0 = refit->b0;
                        model.beta1 = refit->b1;
                        model.inlier_slices = ids;
                        model.residual_m = params.residual_m;
                        model.window_h_max = h_max;
                        window_valid = true;
                        if (have_prev && ids == prev_ids) return model; // stable inlier set
                        prev_ids = std::move(ids);
                        have_prev = true;
                        last_valid = std::move(model);
                    }
                }
            }
        }
        if (!window_valid) have_prev = false; // stability requires consecutive windows
        if (final_window) break;
    }
    // the window sweep ran out before the inlier set repeated
    return last_valid;
}

DbhRecord evaluate_dbh(const TaperModel& taper, double h_bh, int tree_id,
                       const std::string& method) {
    DbhRecord rec;
    rec.tree_id = tree_id;
    rec.method = method;
    rec.h_bh = h_bh;
    const double d = taper.beta0 + taper.beta1 * h_bh;
    if (!(d > 0.0)) {
        rec.failure_reason = "non-positive diameter at breast height";
        return rec;
    }
    rec.success = true;
    rec.dbh_cm = 100.0 * d;
    return rec;
}

// ---------------------------------------------------------------------------
// Cylinder baseline
// ---------------------------------------------------------------------------

namespace {

double axis_distance(const Vec3& p, const Vec3& c, const Vec3& axis) {
    const Vec3 v = p - c;
    return (v - axis * axis.dot(v)).norm();
}

std::size_t cylinder_inliers(const std::vector<Vec3>& points, const Vec3& c, const Vec3& axis,
                             double r, double band) {
    std::size_t cnt = 0;
    for (const auto& p : points)
        if (std::abs(axis_distance(p, c, axis) - r) < band) ++cnt;
    return cnt;
}

bool cylinder_valid(const Vec3& axis, double r, const CylinderParams& params) {
    return r > 1e-4 && r <= params.max_radius_m && tilt_from_vertical(axis) <= params.max_tilt_rad;
}

} // namespace

std::optional<CylinderEstimate> fit_cylinder_baseline(const std::vector<Vec3>& points,
                                                      const CylinderParams& params,
                                                      RngStream& rng) {
    const std::size_t n = points.size();
    if (n < 5) return std::nullopt;

    struct Model {
        Vec3 c;
        Vec3 axis;
        double r;
        std::size_t inliers;
    };
    std::optional<Model> best;

    std::size_t sample[5];
    for (int t = 0; t < params.trials; ++t) {
        bool ok = true;
        for (int s = 0; s < 5; ++s) {
            int guard = 0;
            std::size_t pick;
            do {
                pick = static_cast<std::size_t>(rng.next_below(n));
            } while (std::find(sample, sample + s, pick) != sample + s && ++guard < 64);
            if (guard >= 64) {
                ok = false;
                break;
            }
            sample[s] = pick;
        }
        if (!ok) continue;

        Vec3 centroid = Vec3::Zero();
        for (int s = 0; s < 5; ++s) centroid += points[sample[s]];
        centroid /= 5.0;
        Mat3 cov = Mat3::Zero();
        for (int s = 0; s < 5; ++s) {
            const Vec3 v = points[sample[s]] - centroid;
            cov += v * v.transpose();
        }
        cov /= 5.0;

        // axis: covariance eigenvector nearest vertical
        Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
        int pick_col = 0;
        for (int c = 1; c < 3; ++c)
            if (std::abs(es.eigenvectors()(2, c)) > std::abs(es.eigenvectors()(2, pick_col)))
                pick_col = c;
        Vec3 axis = es.eigenvectors().col(pick_col);
        if (axis.z() < 0) axis = -axis;

        double radius = 0;
        for (int s = 0; s < 5; ++s) radius += axis_distance(points[sample[s]], centroid, axis);
        radius /= 5.0;
        if (!cylinder_valid(axis, radius, params)) continue;

        const std::size_t cnt = cylinder_inliers(points, centroid, axis, radius, params.inlier_band_m);
        if (!best || cnt > best->inliers) best = Model{centroid, axis, radius, cnt};
    }
    if (!best) return std::nullopt;
    // spurious near-vertical hypotheses on off-axis trunks carry little
    // support; require a minimum inlier ratio before accepting any model
    if (static_cast<double>(best->inliers) < params.min_inlier_ratio * static_cast<double>(n))
        return std::nullopt;

    // Geman-McClure IRLS over the 7-vector (center 3, axis rotation 3, radius 1);
    // the rotation component about the axis itself is a gauge direction,
    // handled by Tikhonov damping of the normal equations.
    Vec3 c = best->c;
    Vec3 axis = best->axis;
    double r = best->r;
    const double s2 = params.gm_sigma_m * params.gm_sigma_m;
    using Vec7 = Eigen::Matrix<double, 7, 1>;
    using Mat7 = Eigen::Matrix<double, 7, 7>;
    for (int iter = 0; iter < params.max_refine_iterations; ++iter) {
        Mat7 lhs = Mat7::Zero();
        Vec7 rhs = Vec7::Zero();
        for (const auto& p : points) {
            const Vec3 v = p - c;
            const double t_ax = axis.dot(v);
            const Vec3 v_perp = v - axis * t_ax;
            const double rho = v_perp.norm();
            if (rho < 1e-12) continue;
            const Vec3 u = v_perp / rho;
            const double e = rho - r;
            Vec7 jac;
            jac.head<3>() = -u;
            jac.segment<3>(3) = t_ax * u.cross(axis);
            jac[6] = -1.0;
            const double q = 1.0 + e * e / s2;
            const double wgt = 1.0 / (q * q);
            lhs += wgt * (jac * jac.transpose());
            rhs -= wgt * jac * e;
        }
        const double damping = 1e-10 * (lhs.trace() / 7.0 + 1.0);
        lhs.diagonal().array() += damping;
        const Vec7 step = lhs.ldlt().solve(rhs);
        if (!step.allFinite()) break;
        c += step.head<3>();
        axis = rotate_by_rotvec(step.segment<3>(3), axis).normalized();
        if (axis.z() < 0) axis = -axis;
        r += step[6];
        if (step.norm() < params.step_tolerance) break;
    }

    CylinderEstimate out;
    const double ransac_ratio = static_cast<double>(best->inliers) / static_cast<double>(n);
    double ratio = ransac_ratio;
    // adopt the refinement only if it is still a valid stem cylinder and its
    // inlier ratio does not fall short of the sampled model's
    if (cylinder_valid(axis, r, params)) {
        const double refined_ratio =
            static_cast<double>(cylinder_inliers(points, c, axis, r, params.inlier_band_m)) /
            static_cast<double>(n);
        if (refined_ratio >= ransac_ratio) {
            out.point_on_axis = c;
            out.axis = axis;
            out.radius = r;
            out.inlier_ratio = refined_ratio;
            return out;
        }
    }
    out.point_on_axis = best->c;
    out.axis = best->axis;
    out.radius = best->r;
    out.inlier_ratio = ratio;
    return out;
}

// ---------------------------------------------------------------------------
// Per-tree drivers
// ---------------------------------------------------------------------------

DbhRecord estimate_dbh_circle(const TrunkInstance& instance, const StemFitConfig& cfg,
                              bool weighted, std::uint64_t seed) {
    const std::string method = weighted ? "circle-weighted" : "circle-unweighted";
    DbhRecord rec;
    rec.tree_id = instance.tree_id;
    rec.method = method;
    rec.h_bh = cfg.h_bh;

    const SliceSet set = build_slices(instance, cfg.slicing);
    rec.diagnostics.candidate_slices = static_cast<int>(set.slices.size());
    if (set.slices.empty()) {
        rec.failure_reason = "no slices with enough points";
        return rec;
    }

    std::vector<std::optional<CircleEstimate>> fits(set.slices.size());
    parallel_for(set.slices.size(), cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            RngStream rng = derive_stream(seed, rng_tag::kCircle,
                                          static_cast<std::uint64_t>(instance.tree_id),
                                          static_cast<std::uint64_t>(set.slices[i].id));
            fits[i] = ransac_solid_circle(set.slices[i], cfg.circle, weighted, rng);
        }
    });

    std::vector<SliceDiameter> diams;
    for (std::size_t i = 0; i < set.slices.size(); ++i) {
        if (!fits[i]) continue;
        diams.push_back({set.slices[i].id, set.slices[i].h_center, fits[i]->diameter()});
    }
    rec.diagnostics.fitted_slices = static_cast<int>(diams.size());
    rec.diagnostics.slice_diameters = diams;
    if (static_cast<int>(diams.size()) < cfg.taper.min_inliers) {
        rec.failure_reason = "too few fitted slices for taper regression";
        return rec;
    }

    RngStream taper_rng =
        derive_stream(seed, rng_tag::kTaper, static_cast<std::uint64_t>(instance.tree_id));
    const auto taper = fit_taper(diams, cfg.taper, cfg.slicing.spacing, taper_rng);
    if (!taper) {
        rec.failure_reason = "no valid taper window";
        return rec;
    }

    DbhRecord out = evaluate_dbh(*taper, cfg.h_bh, instance.tree_id, method);
    out.diagnostics = rec.diagnostics;
    out.diagnostics.taper_inliers = static_cast<int>(taper->inlier_slices.size());
    out.diagnostics.window_h_max = taper->window_h_max;
    out.diagnostics.taper_inlier_ids = taper->inlier_slices;
    return out;
}

DbhRecord estimate_dbh_cylinder(const TrunkInstance& instance, const StemFitConfig& cfg,
                                std::uint64_t seed) {
    DbhRecord rec;
    rec.tree_id = instance.tree_id;
    rec.method = "cylinder";
    rec.h_bh = cfg.h_bh;

    RngStream rng =
        derive_stream(seed, rng_tag::kCylinder, static_cast<std::uint64_t>(instance.tree_id));
    const auto cyl = fit_cylinder_baseline(instance.points, cfg.cylinder, rng);
    if (!cyl) {
        rec.failure_reason = "no valid cylinder hypothesis";
        return rec;
    }
    rec.success = true;
    rec.dbh_cm = 200.0 * cyl->radius; // DBH = 2r
    return rec;
}

} // namespace stemsplat
