#include "mvc/geometry/mesh.hpp"

#include "mvc/errors.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

namespace mvc {

void validate(const Mesh& mesh) {
    const auto n = static_cast<int>(mesh.vertices.size());
    if (mesh.normals.size() != mesh.vertices.size() || mesh.uvs.size() != mesh.vertices.size())
        throw InputError("mesh: normals/uvs must be given for every vertex");
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k)
            if (tri[k] < 0 || tri[k] >= n)
                throw InputError("mesh: triangle " + std::to_string(t) + " index out of range");
    }
    for (std::size_t v = 0; v < mesh.normals.size(); ++v)
        if (std::abs(mesh.normals[v].norm() - 1.0) > 1e-4)
            throw InputError("mesh: normal " + std::to_string(v) + " is not unit length");
    for (const auto& p : mesh.vertices)
        if (!p.allFinite()) throw InputError("mesh: non-finite vertex");
}

BoundingSphere bounding_sphere(const Mesh& mesh) {
    if (mesh.vertices.empty()) return {Eigen::Vector3d::Zero(), 0.0};
    Eigen::Vector3d lo = mesh.vertices.front(), hi = lo;
    for (const auto& p : mesh.vertices) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return {0.5 * (lo + hi), 0.5 * (hi - lo).norm()};
}

namespace {

// Resolves a 1-based (or negative, relative) OBJ index.
int obj_index(const std::string& token, std::size_t count, int line) {
    int idx = 0;
    try {
        idx = std::stoi(token);
    } catch (const std::exception&) {
        throw InputError("obj line " + std::to_string(line) + ": bad index '" + token + "'");
    }
    const int resolved = idx > 0 ? idx - 1 : static_cast<int>(count) + idx;
    if (idx == 0 || resolved < 0 || resolved >= static_cast<int>(count))
        throw InputError("obj line " + std::to_string(line) + ": index out of range");
    return resolved;
}

} // namespace

Mesh parse_obj(const std::string& text) {
    std::vector<Eigen::Vector3d> pos, nrm;
    std::vector<Eigen::Vector2d> tex;
    Mesh mesh;
    std::map<std::tuple<int, int, int>, int> corner_ids;

    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::istringstream ls(raw);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Eigen::Vector3d p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw InputError("obj line " + std::to_string(line) + ": bad vertex");
            pos.push_back(p);
        } else if (tag == "vt") {
            Eigen::Vector2d t;
            if (!(ls >> t.x() >> t.y()))
                throw InputError("obj line " + std::to_string(line) + ": bad texcoord");
            tex.push_back(t);
        } else if (tag == "vn") {
            Eigen::Vector3d n;
            if (!(ls >> n.x() >> n.y() >> n.z()))
                throw InputError("obj line " + std::to_string(line) + ": bad normal");
            const double len = n.norm();
            if (!(len > 0.0))
                throw InputError("obj line " + std::to_string(line) + ": zero normal");
            nrm.push_back(n / len);
        } else if (tag == "f") {
            std::vector<int> corners;
            std::string c;
            while (ls >> c) {
                const auto s1 = c.find('/');
                const auto s2 = s1 == std::string::npos ? s1 : c.find('/', s1 + 1);
                if (s1 == std::string::npos || s2 == std::string::npos || s2 == s1 + 1 ||
                    s2 + 1 >= c.size())
                    throw InputError("obj line " + std::to_string(line) +
                                     ": face corners need v/vt/vn indices");
                const int vi = obj_index(c.substr(0, s1), pos.size(), line);
                const int ti = obj_index(c.substr(s1 + 1, s2 - s1 - 1), tex.size(), line);
                const int ni = obj_index(c.substr(s2 + 1), nrm.size(), line);
                const auto key = std::make_tuple(vi, ti, ni);
                auto it = corner_ids.find(key);
                if (it == corner_ids.end()) {
                    it = corner_ids.emplace(key, static_cast<int>(mesh.vertices.size())).first;
                    mesh.vertices.push_back(pos[vi]);
                    mesh.uvs.push_back(tex[ti]);
                    mesh.normals.push_back(nrm[ni]);
                }
                corners.push_back(it->second);
            }
            if (corners.size() < 3)
                throw InputError("obj line " + std::to_string(line) + ": face with < 3 corners");
            for (std::size_t k = 1; k + 1 < corners.size(); ++k)
                mesh.triangles.emplace_back(corners[0], corners[k], corners[k + 1]);
        } else if (tag == "o" || tag == "g" || tag == "s" || tag == "usemtl" || tag == "mtllib") {
            continue;
        } else {
            throw InputError("obj line " + std::to_string(line) + ": unsupported record '" + tag +
                             "'");
        }
    }
    validate(mesh);
    return mesh;
}

Mesh load_obj(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open mesh: " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_obj(ss.str());
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write mesh: " + path.string());
    f.precision(17);
    for (const auto& p : mesh.vertices) f << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const auto& t : mesh.uvs) f << "vt " << t.x() << ' ' << t.y() << '\n';
    for (const auto& n : mesh.normals) f << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    for (const auto& tri : mesh.triangles) {
        f << 'f';
        for (int k = 0; k < 3; ++k) {
            const int i = tri[k] + 1;
            f << ' ' << i << '/' << i << '/' << i;
        }
        f << '\n';
    }
}

Mesh make_uv_sphere(double radius, int segments, int rings) {
    if (radius <= 0.0 || segments < 3 || rings < 2)
        throw InputError("sphere: need radius > 0, segments >= 3, rings >= 2");
    Mesh m;
    const double pi = std::numbers::pi;
    for (int r = 0; r <= rings; ++r) {
        const double v = static_cast<double>(r) / rings;
        const double theta = v * pi;
        for (int s = 0; s <= segments; ++s) {
            const double u = static_cast<double>(s) / segments;
            const double phi = u * 2.0 * pi;
            const Eigen::Vector3d n(std::sin(theta) * std::sin(phi), std::cos(theta),
                                    std::sin(theta) * std::cos(phi));
            m.vertices.push_back(radius * n);
            m.normals.push_back(n.normalized());
            m.uvs.emplace_back(u, v);
        }
    }
    const int stride = segments + 1;
    for (int r = 0; r < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const int a = r * stride + s, b = a + 1, c = a + stride, d = c + 1;
            // Outward winding; pole rows keep one non-degenerate triangle per quad.
            if (r != 0) m.triangles.emplace_back(a, c, b);
            if (r != rings - 1) m.triangles.emplace_back(b, c, d);
        }
    }
    return m;
}

Mesh make_cube(double half_extent) {
    if (half_extent <= 0.0) throw InputError("cube: half extent must be positive");
    Mesh m;
    struct Face {
        Eigen::Vector3d n, u, v;
    };
    const Face faces[6] = {
        {{0, 0, 1}, {1, 0, 0}, {0, -1, 0}},  {{1, 0, 0}, {0, 0, -1}, {0, -1, 0}},
        {{0, 0, -1}, {-1, 0, 0}, {0, -1, 0}}, {{-1, 0, 0}, {0, 0, 1}, {0, -1, 0}},
        {{0, 1, 0}, {1, 0, 0}, {0, 0, 1}},   {{0, -1, 0}, {1, 0, 0}, {0, 0, -1}},
    };
    const double inset = 1.0 / 64.0; // gutter between atlas cells
    for (int f = 0; f < 6; ++f) {
        const double cu = (f % 3) / 3.0, cv = (f / 3) / 2.0;
        const int base = static_cast<int>(m.vertices.size());
        for (int k = 0; k < 4; ++k) {
            const double a = (k == 1 || k == 2) ? 1.0 : 0.0;
            const double b = (k >= 2) ? 1.0 : 0.0;
            const Eigen::Vector3d p =
                half_extent * (faces[f].n + (2 * a - 1) * faces[f].u + (2 * b - 1) * faces[f].v);
            m.vertices.push_back(p);
            m.normals.push_back(faces[f].n);
            m.uvs.emplace_back(cu + inset + a * (1.0 / 3.0 - 2 * inset),
                               cv + inset + b * (0.5 - 2 * inset));
        }
        // u x v points against n for this table, so wind (0,2,1) to face outwards.
        const Eigen::Vector3d cross = faces[f].u.cross(faces[f].v);
        if (cross.dot(faces[f].n) < 0) {
            m.triangles.emplace_back(base, base + 2, base + 1);
            m.triangles.emplace_back(base, base + 3, base + 2);
        } else {
            m.triangles.emplace_back(base, base + 1, base + 2);
            m.triangles.emplace_back(base, base + 2, base + 3);
        }
    }
    return m;
}

Mesh make_quad(double half_extent) {
    if (half_extent <= 0.0) throw InputError("quad: half extent must be positive");
    Mesh m;
    const double h = half_extent;
    // v grows downwards in image order so a camera looking down -z sees u right, v down.
    m.vertices = {{-h, h, 0}, {h, h, 0}, {h, -h, 0}, {-h, -h, 0}};
    m.uvs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    m.normals.assign(4, Eigen::Vector3d(0, 0, 1));
    m.triangles = {{0, 2, 1}, {0, 3, 2}};
    return m;
}

Mesh load_scene_mesh(const std::string& spec) {
    if (spec == "builtin:sphere") return make_uv_sphere(1.0, 64, 32);
    if (spec == "builtin:cube") return make_cube(0.8);
    if (spec == "builtin:quad") return make_quad(1.0);
    if (spec.rfind("builtin:", 0) == 0) throw InputError("unknown built-in scene: " + spec);
    return load_obj(spec);
}

} // namespace mvc
