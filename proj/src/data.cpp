// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "spot/data.hpp"

#include "spot/checkpoint.hpp"
#include "spot/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace spot {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::RowVector3d random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    for (;;) {
        Eigen::RowVector3d v(g(rng), g(rng), g(rng));
        const double n = v.norm();
        if (n > 1e-9) return v / n;
    }
}

Eigen::RowVector3d sample_local(const ShapeSpec& spec, std::mt19937_64& rng) {
    const auto& p = spec.params;
    switch (spec.kind) {
    case ShapeKind::sphere:
        return random_direction(rng) * p[0];
    case ShapeKind::box: {
        // Face pairs normal to x, y, z with areas 4*hy*hz, 4*hx*hz, 4*hx*hy.
        const double areas[3] = {p[1] * p[2], p[0] * p[2], p[0] * p[1]};
        std::discrete_distribution<int> face({areas[0], areas[0], areas[1], areas[1], areas[2], areas[2]});
        const int f = face(rng);
        const int axis = f / 2;
        Eigen::RowVector3d q;
        for (int k = 0; k < 3; ++k) q[k] = uniform(rng, -p[k], p[k]);
        q[axis] = (f % 2 == 0) ? p[axis] : -p[axis];
        return q;
    }
    case ShapeKind::cylinder: {
        const double r = p[0], h = p[1];
        const double side = 2.0 * kPi * r * 2.0 * h;
        const double cap = kPi * r * r;
        std::discrete_distribution<int> part({side, cap, cap});
        const int where = part(rng);
        const double theta = uniform(rng, 0.0, 2.0 * kPi);
        if (where == 0) return {r * std::cos(theta), r * std::sin(theta), uniform(rng, -h, h)};
        const double rho = r * std::sqrt(uniform(rng, 0.0, 1.0));
        return {rho * std::cos(theta), rho * std::sin(theta), where == 1 ? h : -h};
    }
    case ShapeKind::torus: {
        const double big = p[0], small = p[1];
        for (;;) {
            const double u = uniform(rng, 0.0, 2.0 * kPi);
            const double v = uniform(rng, 0.0, 2.0 * kPi);
            const double ring = big + small * std::cos(v);
            if (uniform(rng, 0.0, big + small) > ring) continue;
            return {ring * std::cos(u), ring * std::sin(u), small * std::sin(v)};
        }
    }
    }
    throw DataError("unknown shape kind");
}

Points resample(const Points& kept, Index target_n, std::mt19937_64& rng) {
    const Index k = kept.rows();
    Points out(target_n, 3);
    if (k >= target_n) {
        std::vector<Index> idx(k);
        std::iota(idx.begin(), idx.end(), Index{0});
        for (Index i = 0; i < target_n; ++i) {
            std::uniform_int_distribution<Index> pick(i, k - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        std::sort(idx.begin(), idx.begin() + target_n);
        for (Index i = 0; i < target_n; ++i) out.row(i) = kept.row(idx[i]);
        return out;
    }
    out.topRows(k) = kept;
    std::uniform_int_distribution<Index> pick(0, k - 1);
    for (Index i = k; i < target_n; ++i) out.row(i) = kept.row(pick(rng));
    return out;
}

void write_f32_points(std::ostream& os, const Points& p) {
    binio::write_u32(os, static_cast<std::uint32_t>(p.rows()));
    for (Index i = 0; i < p.rows(); ++i)
        for (int k = 0; k < 3; ++k) binio::write_f32(os, static_cast<float>(p(i, k)));
}

Points read_f32_points(std::istream& is) {
    const auto n = binio::read_u32(is);
    if (n > (1u << 26)) throw DataError("dataset: implausible point count " + std::to_string(n));
    Points p(n, 3);
    for (Index i = 0; i < p.rows(); ++i)
        for (int k = 0; k < 3; ++k) p(i, k) = binio::read_f32(is);
    return p;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

} // namespace

std::string to_string(ShapeKind kind) {
    switch (kind) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::torus: return "torus";
    }
    return "unknown";
}

ShapeKind parse_shape_kind(const std::string& name) {
    for (ShapeKind k : all_shape_kinds())
        if (to_string(k) == name) return k;
    throw DataError("unknown shape kind '" + name + "'");
}

std::vector<ShapeKind> all_shape_kinds() {
    return {ShapeKind::sphere, ShapeKind::box, ShapeKind::cylinder, ShapeKind::torus};
}

void ShapeSpec::validate() const {
    const int used = (kind == ShapeKind::sphere) ? 1 : (kind == ShapeKind::box ? 3 : 2);
    for (int k = 0; k < used; ++k) {
        if (!(params[k] > 0.0) || !std::isfinite(params[k])) {
            throw DataError(to_string(kind) + ": dimension " + std::to_string(k) + " must be positive");
        }
    }
    if (kind == ShapeKind::torus && !(params[1] < params[0])) {
        throw DataError("torus: minor radius must be smaller than the major radius");
    }
    const double err = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-9)) throw DataError("shape rotation is not orthonormal (error " + std::to_string(err) + ")");
    if (!translation.allFinite()) throw DataError("shape translation is not finite");
}

Points sample_surface(const ShapeSpec& spec, Index n, std::mt19937_64& rng) {
    if (n < 1) throw DataError("sample_surface: n must be at least 1");
    spec.validate();
    Points out(n, 3);
    for (Index i = 0; i < n; ++i) out.row(i) = sample_local(spec, rng) * spec.rotation.transpose() + spec.translation;
    return out;
}

Points crop_halfspace(const Points& cloud, const Eigen::RowVector3d& direction, double keep_fraction, Index target_n,
                      std::mt19937_64* rng) {
    if (cloud.rows() == 0) throw DataError("crop_halfspace: empty cloud");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw DataError("crop_halfspace: keep_fraction outside (0, 1]");
    const double len = direction.norm();
    if (!(len > 0.0)) throw DataError("crop_halfspace: zero direction");
    const Eigen::VectorXd proj = cloud * (direction.transpose() / len);
    const Index n = cloud.rows();
    const Index keep = std::clamp<Index>(static_cast<Index>(std::llround(keep_fraction * static_cast<double>(n))), 1, n);
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return proj[a] < proj[b]; });
    std::sort(order.begin(), order.begin() + keep);
    Points kept(keep, 3);
    for (Index i = 0; i < keep; ++i) kept.row(i) = cloud.row(order[i]);
    if (target_n <= 0 || target_n == keep) return kept;
    std::mt19937_64 local(0x9e3779b97f4a7c15ull);
    return resample(kept, target_n, rng ? *rng : local);
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Sample make_sample(ShapeKind kind, std::uint64_t seed, const DatasetOptions& opts) {
    if (opts.input_n < 1 || opts.out_n < 1) throw DataError("dataset: point counts must be positive");
    if (!(opts.keep_min > 0.0 && opts.keep_min <= opts.keep_max && opts.keep_max < 1.0)) {
        throw DataError("dataset: keep range must satisfy 0 < min <= max < 1");
    }
    std::mt19937_64 rng(seed);
    Sample s;
    s.spec.kind = kind;
    s.spec.seed = seed;
    switch (kind) {
    case ShapeKind::sphere: s.spec.params = {uniform(rng, 0.5, 1.5), 0.0, 0.0}; break;
    case ShapeKind::box:
        s.spec.params = {uniform(rng, 0.3, 1.0), uniform(rng, 0.3, 1.0), uniform(rng, 0.3, 1.0)};
        break;
    case ShapeKind::cylinder: s.spec.params = {uniform(rng, 0.3, 0.8), uniform(rng, 0.3, 1.0), 0.0}; break;
    case ShapeKind::torus: {
        const double big = uniform(rng, 0.6, 1.0);
        s.spec.params = {big, big * uniform(rng, 0.2, 0.45), 0.0};
        break;
    }
    }
    std::normal_distribution<double> g;
    Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
    q.normalize();
    s.spec.rotation = q.toRotationMatrix();
    s.spec.translation = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};

    const Points complete = sample_surface(s.spec, opts.out_n, rng);
    s.crop_direction = random_direction(rng);
    s.keep_fraction = uniform(rng, opts.keep_min, opts.keep_max);
    const Points partial = crop_halfspace(complete, s.crop_direction, s.keep_fraction, opts.input_n, &rng);

    NormalizedCloud norm = normalize_to_unit_sphere(complete);
    s.complete = std::move(norm.points);
    s.center = norm.center;
    s.scale = norm.scale;
    s.partial = apply_normalization(partial, s.center, s.scale);
    return s;
}

std::vector<Sample> make_dataset(const DatasetOptions& opts) {
    if (opts.count < 0) throw DataError("dataset: negative sample count");
    if (opts.kinds.empty()) throw DataError("dataset: no shape kinds selected");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(opts.count));
    std::uint64_t state = opts.seed;
    for (Index i = 0; i < opts.count; ++i) {
        const std::uint64_t seed = splitmix64(state);
        // Kinds cycle so every kind is equally represented.
        out.push_back(make_sample(opts.kinds[static_cast<std::size_t>(i) % opts.kinds.size()], seed, opts));
    }
    return out;
}

void write_ply(const Points& cloud, std::ostream& os) {
    os << "ply\nformat ascii 1.0\nelement vertex " << cloud.rows()
       << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    char buf[96];
    for (Index i = 0; i < cloud.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", static_cast<double>(static_cast<float>(cloud(i, 0))),
                      static_cast<double>(static_cast<float>(cloud(i, 1))),
                      static_cast<double>(static_cast<float>(cloud(i, 2))));
        os << buf;
    }
}

void write_ply(const Points& cloud, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_ply(cloud, os);
    if (!os) throw DataError("failed writing " + path.string());
}

Points read_ply(std::istream& is) {
    struct Element {
        std::string name;
        Index count = 0;
        std::vector<std::string> props;
    };
    std::vector<Element> elements;
    std::string line;
    int lineno = 0;
    auto next = [&]() -> bool {
        if (!std::getline(is, line)) return false;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != "ply") throw ParseError("PLY: missing 'ply' magic", std::max(lineno, 1));
    bool have_format = false, done = false;
    while (!done) {
        if (!next()) throw ParseError("PLY: header ends before end_header", lineno + 1);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() != 3 || tok[2] != "1.0") throw ParseError("PLY: malformed format line", lineno);
            if (tok[1] != "ascii") throw ParseError("PLY: only ascii format is supported, got " + tok[1], lineno);
            have_format = true;
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw ParseError("PLY: malformed element line", lineno);
            Element e;
            e.name = tok[1];
            try {
                std::size_t used = 0;
                e.count = std::stoll(tok[2], &used);
                if (used != tok[2].size() || e.count < 0) throw std::invalid_argument("count");
            } catch (const std::exception&) {
                throw ParseError("PLY: bad element count '" + tok[2] + "'", lineno);
            }
            elements.push_back(e);
        } else if (tok[0] == "property") {
            if (elements.empty()) throw ParseError("PLY: property before any element", lineno);
            if (tok.size() == 3) {
                elements.back().props.push_back(tok[2]);
            } else if (tok.size() == 5 && tok[1] == "list") {
                if (elements.back().name == "vertex") throw ParseError("PLY: list properties on vertices", lineno);
                elements.back().props.push_back(tok[4]);
            } else {
                throw ParseError("PLY: malformed property line", lineno);
            }
        } else if (tok[0] == "end_header") {
            done = true;
        } else {
            throw ParseError("PLY: unexpected header keyword '" + tok[0] + "'", lineno);
        }
    }
    if (!have_format) throw ParseError("PLY: missing format line", lineno);
    const Element* vertex = nullptr;
    for (const auto& e : elements)
        if (e.name == "vertex") vertex = &e;
    if (!vertex) throw ParseError("PLY: no vertex element", lineno);
    int col[3] = {-1, -1, -1};
    for (std::size_t i = 0; i < vertex->props.size(); ++i) {
        const auto& p = vertex->props[i];
        if (p == "x") col[0] = static_cast<int>(i);
        if (p == "y") col[1] = static_cast<int>(i);
        if (p == "z") col[2] = static_cast<int>(i);
    }
    if (col[0] < 0 || col[1] < 0 || col[2] < 0) throw ParseError("PLY: vertex element lacks x, y or z", lineno);

    Points out(vertex->count, 3);
    for (const auto& e : elements) {
        for (Index r = 0; r < e.count; ++r) {
            if (!next()) throw ParseError("PLY: truncated " + e.name + " data", lineno + 1);
            if (&e != vertex) continue;
            const auto tok = split_ws(line);
            if (tok.size() < vertex->props.size()) throw ParseError("PLY: short vertex row", lineno);
            for (int k = 0; k < 3; ++k) {
                try {
                    std::size_t used = 0;
                    out(r, k) = std::stod(tok[static_cast<std::size_t>(col[k])], &used);
                    if (used != tok[static_cast<std::size_t>(col[k])].size()) throw std::invalid_argument("num");
                } catch (const std::exception&) {
                    throw ParseError("PLY: bad coordinate '" + tok[static_cast<std::size_t>(col[k])] + "'", lineno);
                }
            }
        }
    }
    if (!out.allFinite()) throw DataError("PLY: non-finite coordinates");
    return out;
}

Points read_ply(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    return read_ply(is);
}

void write_sample(std::ostream& os, const Sample& s) {
    binio::write_u32(os, static_cast<std::uint32_t>(s.spec.kind));
    for (int k = 0; k < 3; ++k) binio::write_f32(os, static_cast<float>(s.spec.params[k]));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) binio::write_f32(os, static_cast<float>(s.spec.rotation(r, c)));
    for (int k = 0; k < 3; ++k) binio::write_f32(os, static_cast<float>(s.spec.translation[k]));
    binio::write_u64(os, s.spec.seed);
    for (int k = 0; k < 3; ++k) binio::write_f32(os, static_cast<float>(s.crop_direction[k]));
    binio::write_f32(os, static_cast<float>(s.keep_fraction));
    for (int k = 0; k < 3; ++k) binio::write_f32(os, static_cast<float>(s.center[k]));
    binio::write_f32(os, static_cast<float>(s.scale));
    write_f32_points(os, s.partial);
    write_f32_points(os, s.complete);
}

Sample read_sample(std::istream& is) {
    Sample s;
    const auto kind = binio::read_u32(is);
    if (kind > static_cast<std::uint32_t>(ShapeKind::torus)) throw DataError("dataset: unknown shape kind code");
    s.spec.kind = static_cast<ShapeKind>(kind);
    for (int k = 0; k < 3; ++k) s.spec.params[k] = binio::read_f32(is);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) s.spec.rotation(r, c) = binio::read_f32(is);
    for (int k = 0; k < 3; ++k) s.spec.translation[k] = binio::read_f32(is);
    s.spec.seed = binio::read_u64(is);
    for (int k = 0; k < 3; ++k) s.crop_direction[k] = binio::read_f32(is);
    s.keep_fraction = binio::read_f32(is);
    for (int k = 0; k < 3; ++k) s.center[k] = binio::read_f32(is);
    s.scale = binio::read_f32(is);
    s.partial = read_f32_points(is);
    s.complete = read_f32_points(is);
    if (s.partial.rows() == 0 || s.complete.rows() == 0) throw DataError("dataset: empty cloud in sample");
    if (!s.partial.allFinite() || !s.complete.allFinite()) throw DataError("dataset: non-finite coordinates");
    return s;
}

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write("SPDS", 4);
    binio::write_u32(os, kDatasetVersion);
    binio::write_u32(os, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) write_sample(os, s);
    if (!os) throw DataError("failed writing " + path.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "SPDS", 4) != 0) {
        throw DataError(path.string() + ": not a dataset file (bad magic)");
    }
    const auto version = binio::read_u32(is);
    if (version != kDatasetVersion) throw DataError(path.string() + ": unsupported dataset version");
    const auto count = binio::read_u32(is);
    std::vector<Sample> out;
    out.reserve(std::min<std::uint32_t>(count, 1u << 16));
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(read_sample(is));
    return out;
}

} // namespace spot
