// io.hpp — file formats (OFF/OBJ meshes, LGRID label grids, JSON rule sets
// and phantom specs) plus marching-cubes reference surface extraction.
//
// All text numerics are written with 17 significant digits so write/read
// round-trips are lossless. Parsers throw ParseError with a line number and
// never crash on malformed input.
#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "relmesh/core.hpp"
#include "relmesh/synth.hpp"

namespace relmesh {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string &path, int line, const std::string &what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

namespace detail {

inline std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

struct Token {
    std::string text;
    int line;
};

inline std::vector<Token> tokenize(const std::string &content, bool strip_comments) {
    std::vector<Token> out;
    int line = 1;
    std::string cur;
    bool in_comment = false;
    for (char ch : content) {
        if (ch == '\n') {
            if (!cur.empty()) { out.push_back({cur, line}); cur.clear(); }
            in_comment = false;
            ++line;
            continue;
        }
        if (in_comment) continue;
        if (strip_comments && ch == '#') {
            if (!cur.empty()) { out.push_back({cur, line}); cur.clear(); }
            in_comment = true;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) { out.push_back({cur, line}); cur.clear(); }
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back({cur, line});
    return out;
}

inline long parse_long(const Token &t, const std::string &path) {
    try {
        std::size_t used = 0;
        const long v = std::stol(t.text, &used);
        if (used != t.text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception &) {
        throw ParseError(path, t.line, "expected integer, got '" + t.text + "'");
    }
}

inline double parse_double(const Token &t, const std::string &path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(t.text, &used);
        if (used != t.text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception &) {
        throw ParseError(path, t.line, "expected number, got '" + t.text + "'");
    }
}

inline bool ends_with_ci(const std::string &s, const std::string &suffix) {
    if (s.size() < suffix.size()) return false;
    for (std::size_t i = 0; i < suffix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) !=
            suffix[i])
            return false;
    return true;
}

} // namespace detail

// ---------------------------------------------------------------------------
// meshes (ASCII OFF and OBJ, triangles only)

inline TriMesh read_mesh_off(const std::string &path) {
    const auto tokens = detail::tokenize(detail::read_file(path), true);
    std::size_t pos = 0;
    auto next = [&]() -> const detail::Token & {
        if (pos >= tokens.size())
            throw ParseError(path, tokens.empty() ? 1 : tokens.back().line, "unexpected end of file");
        return tokens[pos++];
    };
    const detail::Token &magic = next();
    if (magic.text != "OFF") throw ParseError(path, magic.line, "missing OFF header");
    const long nv = detail::parse_long(next(), path);
    const long nf = detail::parse_long(next(), path);
    detail::parse_long(next(), path); // edge count, ignored
    if (nv < 0 || nf < 0) throw ParseError(path, magic.line, "negative counts");

    TriMesh mesh;
    mesh.vertices.reserve(nv);
    for (long i = 0; i < nv; ++i) {
        const double x = detail::parse_double(next(), path);
        const double y = detail::parse_double(next(), path);
        const double z = detail::parse_double(next(), path);
        mesh.vertices.push_back({x, y, z});
    }
    for (long f = 0; f < nf; ++f) {
        const detail::Token &cnt_tok = next();
        const long cnt = detail::parse_long(cnt_tok, path);
        if (cnt != 3) throw ParseError(path, cnt_tok.line, "triangles only");
        std::array<int, 3> face{};
        for (int e = 0; e < 3; ++e) {
            const detail::Token &t = next();
            const long idx = detail::parse_long(t, path);
            if (idx < 0 || idx >= nv)
                throw ParseError(path, t.line, "face index out of range");
            face[e] = static_cast<int>(idx);
        }
        mesh.faces.push_back(face);
    }
    return mesh;
}

inline TriMesh read_mesh_obj(const std::string &path) {
    const std::string content = detail::read_file(path);
    TriMesh mesh;
    int line_no = 0;
    std::istringstream lines(content);
    std::string line;
    while (std::getline(lines, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag.empty() || tag[0] == '#') continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw ParseError(path, line_no, "vertex needs three coordinates");
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string ref;
            while (ls >> ref) {
                const std::string first = ref.substr(0, ref.find('/'));
                long v = 0;
                try {
                    v = std::stol(first);
                } catch (const std::exception &) {
                    throw ParseError(path, line_no, "bad face index '" + ref + "'");
                }
                if (v < 0) throw ParseError(path, line_no, "negative indices unsupported");
                if (v == 0 || v > static_cast<long>(mesh.vertices.size()))
                    throw ParseError(path, line_no, "face index out of range");
                idx.push_back(static_cast<int>(v - 1));
            }
            if (idx.size() != 3) throw ParseError(path, line_no, "triangles only");
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
        }
        // other record types (vn, vt, g, ...) are ignored
    }
    return mesh;
}

inline TriMesh read_mesh(const std::string &path) {
    TriMesh mesh;
    if (detail::ends_with_ci(path, ".off")) mesh = read_mesh_off(path);
    else if (detail::ends_with_ci(path, ".obj")) mesh = read_mesh_obj(path);
    else throw std::runtime_error("unsupported mesh extension (want .off or .obj): " + path);
    return mesh;
}

inline void write_mesh(const std::string &path, const TriMesh &mesh) {
    check_face_indices(mesh);
    std::string out;
    if (detail::ends_with_ci(path, ".off")) {
        out = "OFF\n" + std::to_string(mesh.vertices.size()) + ' ' +
              std::to_string(mesh.faces.size()) + " 0\n";
        for (const auto &v : mesh.vertices)
            out += detail::g17(v.x) + ' ' + detail::g17(v.y) + ' ' + detail::g17(v.z) + '\n';
        for (const auto &f : mesh.faces)
            out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' +
                   std::to_string(f[2]) + '\n';
    } else if (detail::ends_with_ci(path, ".obj")) {
        for (const auto &v : mesh.vertices)
            out += "v " + detail::g17(v.x) + ' ' + detail::g17(v.y) + ' ' + detail::g17(v.z) + '\n';
        for (const auto &f : mesh.faces)
            out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' +
                   std::to_string(f[2] + 1) + '\n';
    } else {
        throw std::runtime_error("unsupported mesh extension (want .off or .obj): " + path);
    }
    detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// label grids (LGRID: ASCII header + raw little-endian u8 payload, x-fastest)

inline void write_grid(const std::string &path, const LabelGrid &grid) {
    check_grid(grid);
    std::string out = "LGRID 1\n";
    out += "dims " + std::to_string(grid.dims[0]) + ' ' + std::to_string(grid.dims[1]) + ' ' +
           std::to_string(grid.dims[2]) + "\naffine\n";
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c)
            out += detail::g17(grid.affine.at(r, c)) + (c == 3 ? "" : " ");
        out += '\n';
    }
    out += "dtype u8\ndata\n";
    out.append(reinterpret_cast<const char *>(grid.labels.data()), grid.labels.size());
    detail::write_file(path, out);
}

inline LabelGrid read_grid(const std::string &path) {
    const std::string content = detail::read_file(path);
    std::size_t cursor = 0;
    int line_no = 0;
    auto next_line = [&]() -> std::string {
        if (cursor >= content.size()) throw ParseError(path, line_no + 1, "unexpected end of file");
        const std::size_t nl = content.find('\n', cursor);
        const std::size_t end = (nl == std::string::npos) ? content.size() : nl;
        std::string line = content.substr(cursor, end - cursor);
        cursor = (nl == std::string::npos) ? content.size() : nl + 1;
        ++line_no;
        return line;
    };

    if (next_line() != "LGRID 1") throw ParseError(path, line_no, "bad magic, expected 'LGRID 1'");

    LabelGrid grid;
    {
        std::istringstream ls(next_line());
        std::string tag;
        long nx = 0, ny = 0, nz = 0;
        if (!(ls >> tag >> nx >> ny >> nz) || tag != "dims")
            throw ParseError(path, line_no, "expected 'dims nx ny nz'");
        if (nx <= 0 || ny <= 0 || nz <= 0) throw ParseError(path, line_no, "dims must be positive");
        if (nx * ny * nz > 0x7fffffffL)
            throw ParseError(path, line_no, "dims product exceeds 32-bit range");
        grid.dims = {static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz)};
    }
    if (next_line() != "affine") throw ParseError(path, line_no, "expected 'affine'");
    for (int r = 0; r < 4; ++r) {
        std::istringstream ls(next_line());
        for (int c = 0; c < 4; ++c)
            if (!(ls >> grid.affine.at(r, c)))
                throw ParseError(path, line_no, "affine row needs four numbers");
    }
    if (next_line() != "dtype u8") throw ParseError(path, line_no, "expected 'dtype u8'");
    if (next_line() != "data") throw ParseError(path, line_no, "expected 'data'");

    const std::size_t expected = static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2];
    const std::size_t available = content.size() - cursor;
    if (available != expected)
        throw ParseError(path, line_no,
                         "payload size mismatch: expected " + std::to_string(expected) +
                             " bytes, found " + std::to_string(available));
    grid.labels.assign(content.begin() + static_cast<std::ptrdiff_t>(cursor), content.end());
    check_grid(grid);
    return grid;
}

// ---------------------------------------------------------------------------
// rule sets (JSON)

inline RuleSet read_rules(const std::string &path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(path, 1, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError(path, 1, "rule file must be a JSON array");
    RuleSet rs;
    for (const auto &item : doc) {
        if (!item.is_object() || !item.contains("subject") || !item.contains("object") ||
            !item.contains("relation"))
            throw ParseError(path, 1, "rule needs subject, object and relation");
        Rule rule;
        rule.subject = item.at("subject").get<int>();
        rule.object = item.at("object").get<int>();
        const std::string rel = item.at("relation").get<std::string>();
        if (rel == "inclusion") rule.relation = 1;
        else if (rel == "exclusion") rule.relation = 0;
        else throw ParseError(path, 1, "unknown relation '" + rel + "'");
        rs.rules.push_back(rule);
    }
    try {
        check_rules(rs);
    } catch (const std::invalid_argument &e) {
        throw ParseError(path, 1, e.what());
    }
    return rs;
}

inline void write_rules(const std::string &path, const RuleSet &rules) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto &r : rules.rules)
        doc.push_back({{"subject", r.subject},
                       {"object", r.object},
                       {"relation", r.relation == 1 ? "inclusion" : "exclusion"}});
    detail::write_file(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// phantom specs (JSON)

inline PhantomSpec read_phantom_spec(const std::string &path, RuleSet *rules_out = nullptr) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(path, 1, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError(path, 1, "phantom spec must be a JSON object");

    PhantomSpec spec;
    if (doc.contains("preset")) {
        const std::string preset = doc.at("preset").get<std::string>();
        if (preset != "cardiac") throw ParseError(path, 1, "unknown preset '" + preset + "'");
        auto [pspec, prules] = cardiac_preset();
        spec = pspec;
        if (rules_out) *rules_out = prules;
    } else if (rules_out) {
        *rules_out = RuleSet{};
    }
    if (doc.contains("dims")) {
        const auto d = doc.at("dims");
        if (!d.is_array() || d.size() != 3) throw ParseError(path, 1, "dims must be [nx,ny,nz]");
        spec.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    }
    if (doc.contains("voxel_mm")) spec.voxel_mm = doc.at("voxel_mm").get<double>();
    if (doc.contains("structures")) {
        spec.structures.clear();
        for (const auto &s : doc.at("structures")) {
            Primitive p;
            p.label = s.at("label").get<int>();
            const auto c = s.at("center");
            p.center = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
            if (s.contains("radius")) {
                const double r = s.at("radius").get<double>();
                p.radii = {r, r, r};
            } else {
                const auto r = s.at("radii");
                p.radii = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
            }
            spec.structures.push_back(p);
        }
    }
    if (doc.contains("violations")) {
        for (const auto &v : doc.at("violations")) {
            ViolationSpec vs;
            const std::string type = v.at("type").get<std::string>();
            if (type == "overlap") vs.type = ViolationType::Overlap;
            else if (type == "leakage") vs.type = ViolationType::Leakage;
            else if (type == "gap") vs.type = ViolationType::Gap;
            else throw ParseError(path, 1, "unknown violation type '" + type + "'");
            vs.magnitude = v.at("magnitude").get<double>();
            vs.subject = v.at("subject").get<int>();
            vs.object = v.at("object").get<int>();
            spec.violations.push_back(vs);
        }
    }
    try {
        spec.check();
    } catch (const std::invalid_argument &e) {
        throw ParseError(path, 1, e.what());
    }
    return spec;
}

// ---------------------------------------------------------------------------
// marching cubes (binary field, midpoint edge vertices, zero padding)

namespace detail {

struct McTables {
    // edge e connects corners edge_c0[e], edge_c1[e] along edge_axis[e]
    std::array<int, 12> edge_c0{}, edge_c1{}, edge_axis{};
    // per corner configuration: triangles as triples of edge indices
    std::array<std::vector<std::array<int, 3>>, 256> tris;
};

inline Vec3 mc_corner_pos(int c) {
    return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
            static_cast<double>((c >> 2) & 1)};
}

// Builds the 256-case table from first principles: on every cube face the
// contour segments are chosen per the face's own corner pattern (ambiguous
// diagonal patterns always cut off both inside corners), so two cells
// sharing a face always agree and the global mesh is closed. Segments are
// oriented with the inside region to the left seen from outside the cell;
// chained loops are emitted in reverse so triangle normals point out of the
// inside region.
inline McTables build_mc_tables() {
    McTables t;
    int edge_lookup[8][8];
    for (auto &row : edge_lookup)
        for (auto &v : row) v = -1;
    int ne = 0;
    for (int axis = 0; axis < 3; ++axis)
        for (int c = 0; c < 8; ++c) {
            if ((c >> axis) & 1) continue;
            const int c2 = c | (1 << axis);
            t.edge_c0[ne] = c;
            t.edge_c1[ne] = c2;
            t.edge_axis[ne] = axis;
            edge_lookup[c][c2] = edge_lookup[c2][c] = ne;
            ++ne;
        }

    struct Face {
        std::array<int, 4> cycle; // corner ids, CCW viewed from outside the cube
        Vec3 outward;
    };
    std::vector<Face> faces;
    for (int n = 0; n < 3; ++n)
        for (int s = 0; s < 2; ++s) {
            const int u = (n == 0) ? 1 : 0;
            const int v = (n == 2) ? 1 : 2;
            std::array<int, 4> cyc{};
            const std::array<std::pair<int, int>, 4> uv{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
            for (int i = 0; i < 4; ++i)
                cyc[i] = (s << n) | (uv[i].first << u) | (uv[i].second << v);
            Vec3 outward{};
            (n == 0 ? outward.x : (n == 1 ? outward.y : outward.z)) = s ? 1.0 : -1.0;
            const Vec3 p0 = mc_corner_pos(cyc[0]), p1 = mc_corner_pos(cyc[1]),
                       p2 = mc_corner_pos(cyc[2]);
            if ((p1 - p0).cross(p2 - p1).dot(outward) < 0.0)
                std::swap(cyc[1], cyc[3]);
            faces.push_back({cyc, outward});
        }

    for (int config = 0; config < 256; ++config) {
        auto inside = [&](int corner) { return (config >> corner) & 1; };

        // directed segments between cube edges: succ[from] = to
        int succ[12];
        for (auto &s : succ) s = -1;
        auto emit = [&](int corner_a1, int corner_a2, int corner_b1, int corner_b2,
                        int ref_corner, const Vec3 &outward) {
            const int ea = edge_lookup[corner_a1][corner_a2];
            const int eb = edge_lookup[corner_b1][corner_b2];
            const Vec3 pa = (mc_corner_pos(corner_a1) + mc_corner_pos(corner_a2)) * 0.5;
            const Vec3 pb = (mc_corner_pos(corner_b1) + mc_corner_pos(corner_b2)) * 0.5;
            const Vec3 q = mc_corner_pos(ref_corner);
            if ((pb - pa).cross(q - pa).dot(outward) > 0.0)
                succ[ea] = eb;
            else
                succ[eb] = ea;
        };

        for (const auto &face : faces) {
            const auto &c = face.cycle;
            int count = 0;
            for (int i = 0; i < 4; ++i) count += inside(c[i]);
            if (count == 0 || count == 4) continue;
            if (count == 1 || count == 3) {
                int i = 0;
                while (inside(c[i]) != (count == 1)) ++i;
                const int prev = c[(i + 3) % 4], next = c[(i + 1) % 4];
                const int ref = (count == 1) ? c[i] : next;
                emit(prev, c[i], c[i], next, ref, face.outward);
            } else {
                bool adjacent = false;
                for (int i = 0; i < 4 && !adjacent; ++i)
                    if (inside(c[i]) && inside(c[(i + 1) % 4])) {
                        const int prev = c[(i + 3) % 4], nn = c[(i + 2) % 4];
                        emit(prev, c[i], c[(i + 1) % 4], nn, c[i], face.outward);
                        adjacent = true;
                    }
                if (!adjacent) {
                    for (int i = 0; i < 4; ++i) {
                        if (!inside(c[i])) continue;
                        const int prev = c[(i + 3) % 4], next = c[(i + 1) % 4];
                        emit(prev, c[i], c[i], next, c[i], face.outward);
                    }
                }
            }
        }

        // chain into loops, emit reversed fans
        bool used[12] = {};
        for (int start = 0; start < 12; ++start) {
            if (succ[start] < 0 || used[start]) continue;
            std::vector<int> loop;
            int cur = start;
            do {
                loop.push_back(cur);
                used[cur] = true;
                cur = succ[cur];
            } while (cur != start && cur >= 0 && !used[cur]);
            if (loop.size() < 3) continue;
            for (std::size_t i = 1; i + 1 < loop.size(); ++i)
                t.tris[config].push_back({loop[0], loop[i + 1], loop[i]});
        }
    }
    return t;
}

inline const McTables &mc_tables() {
    static const McTables t = build_mc_tables();
    return t;
}

} // namespace detail

// Isosurface of one label's binary mask: 256-case lookup, vertices at the
// midpoints of sign-changing lattice edges, one voxel of zero padding so
// boundary-touching labels still close. Output is watertight.
inline TriMesh marching_cubes(const LabelGrid &grid, int label) {
    check_grid(grid);
    bool present = false;
    for (auto l : grid.labels)
        if (l == label) { present = true; break; }
    if (!present) throw std::invalid_argument("marching_cubes: label absent from grid");

    const auto &tables = detail::mc_tables();
    const int sx = grid.dims[0] + 2, sy = grid.dims[1] + 2, sz = grid.dims[2] + 2;
    auto sample_inside = [&](int si, int sj, int sk) -> bool {
        const int i = si - 1, j = sj - 1, k = sk - 1;
        return grid.in_bounds(i, j, k) && grid.at(i, j, k) == label;
    };
    auto sample_lin = [&](int si, int sj, int sk) {
        return (static_cast<std::int64_t>(sk) * sy + sj) * sx + si;
    };

    TriMesh mesh;
    mesh.structure_label = label;
    std::unordered_map<std::int64_t, int> weld; // (sample,axis) -> vertex id
    auto edge_vertex = [&](int si, int sj, int sk, int axis) {
        const std::int64_t key = sample_lin(si, sj, sk) * 4 + axis;
        auto it = weld.find(key);
        if (it != weld.end()) return it->second;
        Vec3 idx_pos{si - 1 + 0.5, sj - 1 + 0.5, sk - 1 + 0.5};
        (axis == 0 ? idx_pos.x : (axis == 1 ? idx_pos.y : idx_pos.z)) += 0.5;
        mesh.vertices.push_back(grid.affine.apply(idx_pos));
        const int id = static_cast<int>(mesh.vertices.size()) - 1;
        weld.emplace(key, id);
        return id;
    };

    for (int ck = 0; ck + 1 < sz; ++ck)
        for (int cj = 0; cj + 1 < sy; ++cj)
            for (int ci = 0; ci + 1 < sx; ++ci) {
                int config = 0;
                for (int c = 0; c < 8; ++c)
                    if (sample_inside(ci + (c & 1), cj + ((c >> 1) & 1), ck + ((c >> 2) & 1)))
                        config |= 1 << c;
                const auto &tris = tables.tris[config];
                if (tris.empty()) continue;
                for (const auto &tri : tris) {
                    std::array<int, 3> face{};
                    for (int e = 0; e < 3; ++e) {
                        const int c0 = tables.edge_c0[tri[e]];
                        face[e] = edge_vertex(ci + (c0 & 1), cj + ((c0 >> 1) & 1),
                                              ck + ((c0 >> 2) & 1), tables.edge_axis[tri[e]]);
                    }
                    mesh.faces.push_back(face);
                }
            }
    return mesh;
}

} // namespace relmesh
