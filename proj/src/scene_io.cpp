// Copyright (c) 2026 stemsplat authors
// SPDX-License-Identifier: Apache-2.0

#include "stemsplat/scene_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace stemsplat {

namespace {

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::ifstream open_input(const std::filesystem::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open " + q(path));
    return in;
}

std::ofstream open_output(const std::filesystem::path& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot write " + q(path));
    return out;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

std::vector<std::string> split_csv(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && std::isspace(static_cast<unsigned char>(f.front()))) f.erase(f.begin());
        while (!f.empty() && std::isspace(static_cast<unsigned char>(f.back()))) f.pop_back();
    }
    return out;
}

double parse_double(const std::string& tok, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError("expected a number, got '" + tok + "' in " + context);
    }
}

long parse_long(const std::string& tok, const std::string& context) {
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError("expected an integer, got '" + tok + "' in " + context);
    }
}

std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// GaussianField
// ---------------------------------------------------------------------------

void GaussianField::activate() {
    const std::size_t n = means.size();
    scales.resize(n);
    alphas.resize(n);
    rotations.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        scales[i] = log_scales[i].array().exp();
        alphas[i] = sigmoid(logit_opacities[i]);
        const auto& r = rotations_raw[i];
        Quat qt(r[0], r[1], r[2], r[3]);
        const double nrm = qt.norm();
        if (nrm < 1e-12)
            throw DataError("zero-norm rotation at Gaussian " + std::to_string(i));
        rotations[i] = Quat(qt.coeffs() / nrm);
    }
}

Mat3 GaussianField::covariance(std::size_t i) const {
    const Mat3 R = rotations[i].toRotationMatrix();
    return R * scales[i].cwiseAbs2().asDiagonal() * R.transpose();
}

namespace {

struct PlyProperty {
    std::string name;
    std::string type;
    std::size_t byte_size = 0;
};

struct PlyHeader {
    bool binary = false;
    std::size_t vertex_count = 0;
    std::vector<PlyProperty> properties;
    std::size_t header_end = 0; // byte offset just past "end_header\n"
};

std::size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    return 0;
}

PlyHeader parse_ply_header(std::istream& in, const std::filesystem::path& path) {
    PlyHeader h;
    std::string line;
    if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
        throw FormatError(q(path) + " is not a PLY file");
    bool in_vertex = false;
    bool got_format = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() < 2) throw FormatError("malformed format line in " + q(path));
            if (tok[1] == "binary_little_endian") h.binary = true;
            else if (tok[1] == "ascii") h.binary = false;
            else throw FormatError("unsupported PLY format '" + tok[1] + "' in " + q(path));
            got_format = true;
        } else if (tok[0] == "element") {
            if (tok.size() < 3) throw FormatError("malformed element line in " + q(path));
            if (tok[1] == "vertex") {
                h.vertex_count = static_cast<std::size_t>(parse_long(tok[2], q(path)));
                in_vertex = true;
            } else {
                if (parse_long(tok[2], q(path)) != 0)
                    throw FormatError("unsupported PLY element '" + tok[1] + "' in " + q(path));
                in_vertex = false;
            }
        } else if (tok[0] == "property") {
            if (!in_vertex) continue;
            if (tok.size() >= 2 && tok[1] == "list")
                throw FormatError("list properties are not supported in " + q(path));
            if (tok.size() < 3) throw FormatError("malformed property line in " + q(path));
            PlyProperty p;
            p.type = tok[1];
            p.name = tok[2];
            p.byte_size = ply_type_size(p.type);
            if (p.byte_size == 0)
                throw FormatError("unsupported property type '" + p.type + "' in " + q(path));
            h.properties.push_back(p);
        } else if (tok[0] == "end_header") {
            if (!got_format) throw FormatError("missing format line in " + q(path));
            h.header_end = static_cast<std::size_t>(in.tellg());
            return h;
        } else {
            throw FormatError("unexpected header line '" + line + "' in " + q(path));
        }
    }
    throw FormatError("unterminated PLY header in " + q(path));
}

int property_index(const PlyHeader& h, const std::string& name) {
    for (std::size_t i = 0; i < h.properties.size(); ++i)
        if (h.properties[i].name == name) return static_cast<int>(i);
    return -1;
}

int require_float_property(const PlyHeader& h, const std::string& name,
                           const std::filesystem::path& path) {
    const int idx = property_index(h, name);
    if (idx < 0)
        throw FormatError("missing required property '" + name + "' in " + q(path));
    const auto& t = h.properties[static_cast<std::size_t>(idx)].type;
    if (t != "float" && t != "float32")
        throw FormatError("property '" + name + "' must be float in " + q(path));
    return idx;
}

/// Names of f_dc_*/f_rest_* columns sorted by numeric suffix, dc first.
std::vector<int> color_property_indices(const PlyHeader& h) {
    std::map<int, int> dc, rest;
    for (std::size_t i = 0; i < h.properties.size(); ++i) {
        const auto& name = h.properties[i].name;
        auto suffix_of = [&](const char* prefix) -> int {
            const std::size_t n = std::strlen(prefix);
            if (name.rfind(prefix, 0) != 0) return -1;
            int v = -1;
            auto [p, ec] = std::from_chars(name.data() + n, name.data() + name.size(), v);
            return (ec == std::errc() && p == name.data() + name.size()) ? v : -1;
        };
        if (int s = suffix_of("f_dc_"); s >= 0) dc[s] = static_cast<int>(i);
        else if (int s2 = suffix_of("f_rest_"); s2 >= 0) rest[s2] = static_cast<int>(i);
    }
    std::vector<int> out;
    for (auto& [s, i] : dc) out.push_back(i);
    for (auto& [s, i] : rest) out.push_back(i);
    return out;
}

double decode_scalar(const unsigned char* p, const PlyProperty& prop) {
    // values are little-endian on disk; so is every platform we build for
    switch (prop.byte_size) {
        case 1: return static_cast<double>(*p);
        case 2: {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            return static_cast<double>(v);
        }
        case 4:
            if (prop.type == "float" || prop.type == "float32") {
                float f;
                std::memcpy(&f, p, 4);
                return static_cast<double>(f);
            } else {
                std::int32_t v;
                std::memcpy(&v, p, 4);
                return static_cast<double>(v);
            }
        default: {
            double d;
            std::memcpy(&d, p, 8);
            return d;
        }
    }
}

} // namespace

GaussianField load_gaussian_field(const std::filesystem::path& path) {
    auto in = open_input(path, true);
    const PlyHeader h = parse_ply_header(in, path);
    if (h.vertex_count == 0) throw DataError("empty Gaussian field in " + q(path));

    const int ix = require_float_property(h, "x", path);
    const int iy = require_float_property(h, "y", path);
    const int iz = require_float_property(h, "z", path);
    const int iop = require_float_property(h, "opacity", path);
    int iscale[3], irot[4];
    for (int k = 0; k < 3; ++k)
        iscale[k] = require_float_property(h, "scale_" + std::to_string(k), path);
    for (int k = 0; k < 4; ++k)
        irot[k] = require_float_property(h, "rot_" + std::to_string(k), path);
    const std::vector<int> icolor = color_property_indices(h);
    for (int ci : icolor) {
        const auto& t = h.properties[static_cast<std::size_t>(ci)].type;
        if (t != "float" && t != "float32")
            throw FormatError("color property must be float in " + q(path));
    }

    GaussianField f;
    f.means.resize(h.vertex_count);
    f.log_scales.resize(h.vertex_count);
    f.rotations_raw.resize(h.vertex_count);
    f.logit_opacities.resize(h.vertex_count);
    f.color_dim = icolor.size();
    f.color_features.resize(h.vertex_count * f.color_dim);

    const std::size_t ncols = h.properties.size();
    std::vector<double> row(ncols);

    auto consume_row = [&](std::size_t i) {
        f.means[i] = Vec3(row[ix], row[iy], row[iz]);
        f.log_scales[i] = Vec3(row[iscale[0]], row[iscale[1]], row[iscale[2]]);
        f.rotations_raw[i] =
            Eigen::Vector4d(row[irot[0]], row[irot[1]], row[irot[2]], row[irot[3]]);
        f.logit_opacities[i] = row[iop];
        for (std::size_t c = 0; c < f.color_dim; ++c)
            f.color_features[i * f.color_dim + c] = static_cast<float>(row[icolor[c]]);
        if (!f.means[i].allFinite() || !f.log_scales[i].allFinite() ||
            !f.rotations_raw[i].allFinite() || !std::isfinite(f.logit_opacities[i]))
            throw DataError("non-finite value at Gaussian " + std::to_string(i) + " in " + q(path));
    };

    if (h.binary) {
        std::size_t stride = 0;
        for (const auto& p : h.properties) stride += p.byte_size;
        std::vector<unsigned char> buf(stride);
        in.seekg(static_cast<std::streamoff>(h.header_end));
        for (std::size_t i = 0; i < h.vertex_count; ++i) {
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(stride)))
                throw FormatError("truncated PLY payload in " + q(path));
            std::size_t off = 0;
            for (std::size_t c = 0; c < ncols; ++c) {
                row[c] = decode_scalar(buf.data() + off, h.properties[c]);
                off += h.properties[c].byte_size;
            }
            consume_row(i);
        }
    } else {
        std::string line;
        for (std::size_t i = 0; i < h.vertex_count; ++i) {
            if (!std::getline(in, line))
                throw FormatError("truncated PLY payload in " + q(path));
            const auto tok = split_ws(line);
            if (tok.size() != ncols)
                throw FormatError("bad vertex row " + std::to_string(i) + " in " + q(path));
            for (std::size_t c = 0; c < ncols; ++c) row[c] = parse_double(tok[c], q(path));
            consume_row(i);
        }
    }

    f.activate();
    return f;
}

void save_gaussian_field(const GaussianField& field, const std::filesystem::path& path,
                         bool binary) {
    auto out = open_output(path, binary);
    const std::size_t n = field.size();
    const std::size_t dc = std::min<std::size_t>(3, field.color_dim);
    const std::size_t rest = field.color_dim - dc;

    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << n << "\n";
    auto prop = [&](const std::string& name) { out << "property float " << name << "\n"; };
    prop("x");
    prop("y");
    prop("z");
    for (std::size_t k = 0; k < dc; ++k) prop("f_dc_" + std::to_string(k));
    for (std::size_t k = 0; k < rest; ++k) prop("f_rest_" + std::to_string(k));
    prop("opacity");
    for (int k = 0; k < 3; ++k) prop("scale_" + std::to_string(k));
    for (int k = 0; k < 4; ++k) prop("rot_" + std::to_string(k));
    out << "end_header\n";

    std::vector<float> row;
    row.reserve(11 + field.color_dim);
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        row.push_back(static_cast<float>(field.means[i].x()));
        row.push_back(static_cast<float>(field.means[i].y()));
        row.push_back(static_cast<float>(field.means[i].z()));
        for (std::size_t c = 0; c < field.color_dim; ++c)
            row.push_back(field.color_features[i * field.color_dim + c]);
        row.push_back(static_cast<float>(field.logit_opacities[i]));
        for (int k = 0; k < 3; ++k) row.push_back(static_cast<float>(field.log_scales[i][k]));
        for (int k = 0; k < 4; ++k) row.push_back(static_cast<float>(field.rotations_raw[i][k]));
        if (binary) {
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size() * sizeof(float)));
        } else {
            for (std::size_t c = 0; c < row.size(); ++c)
                out << (c ? " " : "") << fmt_g17(row[c]);
            out << "\n";
        }
    }
    if (!out) throw IoError("write failed for " + q(path));
}

WorldTransform WorldTransform::parse(const std::string& spec) {
    const auto tok = split_csv(spec);
    if (tok.size() != 8)
        throw ConfigError("world transform must be 'scale,qw,qx,qy,qz,tx,ty,tz'");
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(tok[i], "world transform");
    if (!(v[0] > 0)) throw ConfigError("world transform scale must be > 0");
    WorldTransform tf;
    tf.scale = v[0];
    tf.rotation = Quat(v[1], v[2], v[3], v[4]);
    if (tf.rotation.norm() < 1e-12) throw ConfigError("world transform rotation has zero norm");
    tf.rotation.normalize();
    tf.translation = Vec3(v[5], v[6], v[7]);
    return tf;
}

void apply_world_transform(GaussianField& field, const WorldTransform& tf) {
    const Mat3 rot = tf.rotation.toRotationMatrix();
    const double log_scale = std::log(tf.scale);
    for (std::size_t i = 0; i < field.size(); ++i) {
        field.means[i] = tf.scale * (rot * field.means[i]) + tf.translation;
        field.log_scales[i].array() += log_scale;
        const auto& r = field.rotations_raw[i];
        Quat q(r[0], r[1], r[2], r[3]);
        const Quat composed = tf.rotation * q;
        field.rotations_raw[i] =
            Eigen::Vector4d(composed.w(), composed.x(), composed.y(), composed.z());
    }
    field.activate();
}

void apply_world_transform(CameraRig& rig, const WorldTransform& tf) {
    const Mat3 rot = tf.rotation.toRotationMatrix();
    for (auto& v : rig.views) {
        // x_cam' = R_v R^T x' + (s t_v - R_v R^T t) maps transformed world
        // points to s times the old camera frame
        const Mat3 new_r = v.R * rot.transpose();
        v.t = tf.scale * v.t - new_r * tf.translation;
        v.R = new_r;
    }
}

// ---------------------------------------------------------------------------
// CameraRig
// ---------------------------------------------------------------------------

namespace {

struct Intrinsics {
    std::string model;
    int width, height;
    double fx, fy, cx, cy;
};

} // namespace

CameraRig load_cameras(const std::filesystem::path& dir) {
    const auto cam_path = dir / "cameras.txt";
    const auto img_path = dir / "images.txt";

    std::map<long, Intrinsics> cams;
    {
        auto in = open_input(cam_path, false);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const auto tok = split_ws(line);
            if (tok.size() < 4) throw FormatError("malformed camera line in " + q(cam_path));
            Intrinsics c;
            const long id = parse_long(tok[0], q(cam_path));
            c.model = tok[1];
            c.width = static_cast<int>(parse_long(tok[2], q(cam_path)));
            c.height = static_cast<int>(parse_long(tok[3], q(cam_path)));
            if (c.model == "PINHOLE") {
                if (tok.size() != 8) throw FormatError("PINHOLE expects 4 params in " + q(cam_path));
                c.fx = parse_double(tok[4], q(cam_path));
                c.fy = parse_double(tok[5], q(cam_path));
                c.cx = parse_double(tok[6], q(cam_path));
                c.cy = parse_double(tok[7], q(cam_path));
            } else if (c.model == "SIMPLE_PINHOLE") {
                if (tok.size() != 7)
                    throw FormatError("SIMPLE_PINHOLE expects 3 params in " + q(cam_path));
                c.fx = c.fy = parse_double(tok[4], q(cam_path));
                c.cx = parse_double(tok[5], q(cam_path));
                c.cy = parse_double(tok[6], q(cam_path));
            } else {
                throw FormatError("unsupported camera model '" + c.model + "' in " + q(cam_path) +
                                  " (only PINHOLE and SIMPLE_PINHOLE)");
            }
            if (c.fx <= 0 || c.fy <= 0)
                throw DataError("non-positive focal length in " + q(cam_path));
            if (c.width < 1 || c.height < 1)
                throw DataError("degenerate image size in " + q(cam_path));
            cams[id] = c;
        }
    }

    CameraRig rig;
    {
        auto in = open_input(img_path, false);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const auto tok = split_ws(line);
            if (tok.size() < 10) throw FormatError("malformed image line in " + q(img_path));
            const double qw = parse_double(tok[1], q(img_path));
            const double qx = parse_double(tok[2], q(img_path));
            const double qy = parse_double(tok[3], q(img_path));
            const double qz = parse_double(tok[4], q(img_path));
            const Vec3 t(parse_double(tok[5], q(img_path)), parse_double(tok[6], q(img_path)),
                         parse_double(tok[7], q(img_path)));
            const long cam_id = parse_long(tok[8], q(img_path));
            auto it = cams.find(cam_id);
            if (it == cams.end())
                throw DataError("image references unknown camera id " + std::to_string(cam_id) +
                                " in " + q(img_path));
            CameraView v;
            v.id = tok[9];
            v.width = it->second.width;
            v.height = it->second.height;
            v.fx = it->second.fx;
            v.fy = it->second.fy;
            v.cx = it->second.cx;
            v.cy = it->second.cy;
            v.R = rotation_from_wxyz(qw, qx, qy, qz);
            v.t = t;
            if ((v.R * v.R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
                throw DataError("non-orthonormal rotation for image '" + v.id + "'");
            rig.views.push_back(std::move(v));
            // the observations line that follows each image row is ignored
            std::getline(in, line);
        }
    }
    return rig;
}

void save_cameras(const CameraRig& rig, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_output(dir / "cameras.txt", false);
        out << "# Camera list with one line of data per camera:\n";
        out << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
        for (std::size_t i = 0; i < rig.views.size(); ++i) {
            const auto& v = rig.views[i];
            out << (i + 1) << " PINHOLE " << v.width << " " << v.height << " " << fmt_g17(v.fx)
                << " " << fmt_g17(v.fy) << " " << fmt_g17(v.cx) << " " << fmt_g17(v.cy) << "\n";
        }
    }
    {
        auto out = open_output(dir / "images.txt", false);
        out << "# Image list with two lines of data per image:\n";
        out << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n";
        out << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
        for (std::size_t i = 0; i < rig.views.size(); ++i) {
            const auto& v = rig.views[i];
            const Quat qt(v.R);
            out << (i + 1) << " " << fmt_g17(qt.w()) << " " << fmt_g17(qt.x()) << " "
                << fmt_g17(qt.y()) << " " << fmt_g17(qt.z()) << " " << fmt_g17(v.t.x()) << " "
                << fmt_g17(v.t.y()) << " " << fmt_g17(v.t.z()) << " " << (i + 1) << " " << v.id
                << "\n\n";
        }
    }
}

// ---------------------------------------------------------------------------
// TerrainModel
// ---------------------------------------------------------------------------

bool TerrainModel::in_padded_bounds(double x, double y) const {
    return x >= x0 - cell && x <= x0 + ncols * cell + cell && y >= y0 - cell &&
           y <= y0 + nrows * cell + cell;
}

namespace {

// Containing-cell index with the boundary tie resolved toward the lower
// index, clamped into the grid.
int nearest_cell_index(double coord, double origin, double cell, int count) {
    const double u = (coord - origin) / cell;
    double fl = std::floor(u);
    if (u == fl) fl -= 1.0; // boundary: equidistant centers, take the lower cell
    const long idx = static_cast<long>(fl);
    return static_cast<int>(std::clamp<long>(idx, 0, count - 1));
}

} // namespace

std::optional<double> TerrainModel::nearest(double x, double y) const {
    const int c = nearest_cell_index(x, x0, cell, ncols);
    const int r = nearest_cell_index(y, y0, cell, nrows);
    const double v = at(c, r);
    if (v == nodata) return std::nullopt;
    return v;
}

std::optional<double> TerrainModel::bilinear(double x, double y) const {
    const double gx = (x - x0) / cell - 0.5;
    const double gy = (y - y0) / cell - 0.5;
    const int c0 = static_cast<int>(std::clamp<long>(static_cast<long>(std::floor(gx)), 0, ncols - 1));
    const int r0 = static_cast<int>(std::clamp<long>(static_cast<long>(std::floor(gy)), 0, nrows - 1));
    const int c1 = std::min(c0 + 1, ncols - 1);
    const int r1 = std::min(r0 + 1, nrows - 1);
    const double fx = std::clamp(gx - c0, 0.0, 1.0);
    const double fy = std::clamp(gy - r0, 0.0, 1.0);
    const double v00 = at(c0, r0), v10 = at(c1, r0), v01 = at(c0, r1), v11 = at(c1, r1);
    if (v00 == nodata || v10 == nodata || v01 == nodata || v11 == nodata) return std::nullopt;
    return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

TerrainModel load_terrain(const std::filesystem::path& path) {
    auto in = open_input(path, false);
    TerrainModel t;
    std::string key;
    bool have_ncols = false, have_nrows = false, have_cell = false;
    double xll = 0, yll = 0;
    // header: keyword/value pairs until the first bare number
    while (in >> key) {
        std::string lower;
        for (char ch : key) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        if (lower == "ncols") {
            in >> t.ncols;
            have_ncols = true;
        } else if (lower == "nrows") {
            in >> t.nrows;
            have_nrows = true;
        } else if (lower == "xllcorner") {
            in >> xll;
        } else if (lower == "yllcorner") {
            in >> yll;
        } else if (lower == "cellsize") {
            in >> t.cell;
            have_cell = true;
        } else if (lower == "nodata_value") {
            in >> t.nodata;
        } else {
            break; // first data token already consumed into `key`
        }
        if (!in) throw FormatError("malformed grid header in " + q(path));
    }
    if (!have_ncols || !have_nrows || !have_cell)
        throw FormatError("grid header incomplete in " + q(path));
    if (t.ncols < 1 || t.nrows < 1) throw DataError("empty grid in " + q(path));
    if (!(t.cell > 0)) throw DataError("non-positive cellsize in " + q(path));
    t.x0 = xll;
    t.y0 = yll;

    const std::size_t n = static_cast<std::size_t>(t.ncols) * t.nrows;
    std::vector<double> file_order;
    file_order.reserve(n);
    if (!key.empty() && (std::isdigit(static_cast<unsigned char>(key[0])) || key[0] == '-' ||
                         key[0] == '+' || key[0] == '.'))
        file_order.push_back(parse_double(key, q(path)));
    double v;
    while (file_order.size() < n && (in >> v)) file_order.push_back(v);
    if (file_order.size() != n)
        throw FormatError("grid data truncated in " + q(path) + " (expected " + std::to_string(n) +
                          " values, got " + std::to_string(file_order.size()) + ")");

    // file rows run north to south; store south-up
    t.z.resize(n);
    for (int r = 0; r < t.nrows; ++r)
        for (int c = 0; c < t.ncols; ++c)
            t.z[static_cast<std::size_t>(r) * t.ncols + c] =
                file_order[static_cast<std::size_t>(t.nrows - 1 - r) * t.ncols + c];
    return t;
}

void save_terrain(const TerrainModel& terrain, const std::filesystem::path& path) {
    auto out = open_output(path, false);
    out << "ncols " << terrain.ncols << "\n";
    out << "nrows " << terrain.nrows << "\n";
    out << "xllcorner " << fmt_g17(terrain.x0) << "\n";
    out << "yllcorner " << fmt_g17(terrain.y0) << "\n";
    out << "cellsize " << fmt_g17(terrain.cell) << "\n";
    out << "NODATA_value " << fmt_g(terrain.nodata) << "\n";
    for (int r = terrain.nrows - 1; r >= 0; --r) {
        for (int c = 0; c < terrain.ncols; ++c)
            out << (c ? " " : "") << fmt_g17(terrain.at(c, r));
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + q(path));
}

// ---------------------------------------------------------------------------
// FieldInventory
// ---------------------------------------------------------------------------

const FieldInventory::Row* FieldInventory::find(int plot, int tree) const {
    for (const auto& r : rows)
        if (r.plot == plot && r.tree == tree) return &r;
    return nullptr;
}

FieldInventory load_inventory(const std::filesystem::path& path) {
    auto in = open_input(path, false);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty inventory file " + q(path));
    auto header = split_csv(line);
    const bool has_xy = header.size() >= 5;
    if (header.size() < 3 || header[0] != "plot" || header[1] != "tree" || header[2] != "dbh_cm" ||
        (has_xy && (header[3] != "x" || header[4] != "y")))
        throw FormatError("inventory header must be 'plot,tree,dbh_cm[,x,y]' in " + q(path));

    FieldInventory inv;
    std::set<std::pair<int, int>> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto tok = split_csv(line);
        const std::string ctx = q(path) + ":" + std::to_string(lineno);
        if (tok.size() < 3) throw FormatError("too few columns in " + ctx);
        FieldInventory::Row r;
        r.plot = static_cast<int>(parse_long(tok[0], ctx));
        r.tree = static_cast<int>(parse_long(tok[1], ctx));
        r.dbh_cm = parse_double(tok[2], ctx);
        if (!(r.dbh_cm > 0)) throw DataError("non-positive DBH in " + ctx);
        if (has_xy && tok.size() >= 5 && !tok[3].empty() && !tok[4].empty())
            r.position = Vec2(parse_double(tok[3], ctx), parse_double(tok[4], ctx));
        if (!seen.insert({r.plot, r.tree}).second)
            throw DataError("duplicate (plot, tree) key in " + ctx);
        inv.rows.push_back(r);
    }
    return inv;
}

void save_inventory(const FieldInventory& inventory, const std::filesystem::path& path) {
    auto out = open_output(path, false);
    out << "plot,tree,dbh_cm,x,y\n";
    for (const auto& r : inventory.rows) {
        out << r.plot << "," << r.tree << "," << fmt_g(r.dbh_cm) << ",";
        if (r.position) out << fmt_g(r.position->x()) << "," << fmt_g(r.position->y());
        else out << ",";
        out << "\n";
    }
    if (!out) throw IoError("write failed for " + q(path));
}

// ---------------------------------------------------------------------------
// TrunkLabelSet
// ---------------------------------------------------------------------------

TrunkLabelSet load_trunk_labels(const std::filesystem::path& path) {
    auto in = open_input(path, false);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty label file " + q(path));
    auto header = split_csv(line);
    if (header.size() < 2 || header[0] != "point_index" || header[1] != "tree_id")
        throw FormatError("label header must be 'point_index,tree_id' in " + q(path));

    TrunkLabelSet set;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto tok = split_csv(line);
        const std::string ctx = q(path) + ":" + std::to_string(lineno);
        if (tok.size() < 2) throw FormatError("too few columns in " + ctx);
        const long idx = parse_long(tok[0], ctx);
        if (idx < 0) throw DataError("negative point index in " + ctx);
        const int tree = static_cast<int>(parse_long(tok[1], ctx));
        if (!set.labels.emplace(static_cast<std::uint64_t>(idx), tree).second)
            throw DataError("duplicate point index in " + ctx);
    }
    return set;
}

void save_trunk_labels(const TrunkLabelSet& labels, const std::filesystem::path& path) {
    auto out = open_output(path, false);
    out << "point_index,tree_id\n";
    std::vector<std::pair<std::uint64_t, int>> sorted(labels.labels.begin(), labels.labels.end());
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [idx, tree] : sorted) out << idx << "," << tree << "\n";
    if (!out) throw IoError("write failed for " + q(path));
}

} // namespace stemsplat
