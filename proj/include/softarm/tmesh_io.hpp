#pragma once

// ASCII `tmesh` mesh format:
//
//   tmesh 1
//   nodes <N>
//   <x> <y> <z>            # N lines
//   tets <M>
//   <i> <j> <k> <l>        # M lines, 0-based
//   groups <G>
//   group <name> tri <T>
//   <a> <b> <c>            # T lines
//   group <name> nodes <K>
//   <i>                    # K lines
//
// Whitespace-separated, '#' starts a comment, LF line endings. write_mesh
// emits a canonical form (shortest round-trip float formatting, groups in
// name order); load_mesh(write_mesh(m)) reproduces the bytes exactly.

#include "softarm/tet_mesh.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

namespace softarm {

namespace detail {

class TokenReader {
public:
    explicit TokenReader(std::istream& in, std::string origin)
        : in_(in), origin_(std::move(origin)) {}

    // Next whitespace-delimited token, skipping '#' comments. Empty at EOF.
    std::string next() {
        std::string tok;
        while (true) {
            const int c = in_.get();
            if (c == EOF) return tok;
            if (c == '\n') {
                if (!tok.empty()) {  // report errors on the token's own line
                    in_.unget();
                    return tok;
                }
                ++line_;
                continue;
            }
            if (c == '#') {
                if (!tok.empty()) {
                    in_.unget();
                    return tok;
                }
                std::string junk;
                std::getline(in_, junk);
                ++line_;
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
    }

    std::string expect_token(const char* what) {
        std::string tok = next();
        if (tok.empty()) fail(std::string("unexpected end of file, expected ") + what);
        return tok;
    }

    long expect_int(const char* what) {
        const std::string tok = expect_token(what);
        long value = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
            fail("expected integer for " + std::string(what) + ", got '" + tok + "'");
        return value;
    }

    double expect_double(const char* what) {
        const std::string tok = expect_token(what);
        double value = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
            fail("expected number for " + std::string(what) + ", got '" + tok + "'");
        return value;
    }

    void expect_keyword(const char* kw) {
        const std::string tok = expect_token(kw);
        if (tok != kw) fail("expected '" + std::string(kw) + "', got '" + tok + "'");
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(origin_ + ":" + std::to_string(line_) + ": " + msg);
    }

private:
    std::istream& in_;
    std::string origin_;
    int line_ = 1;
};

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline TetMesh read_mesh(std::istream& in, const std::string& origin) {
    detail::TokenReader r(in, origin);
    TetMesh mesh;

    r.expect_keyword("tmesh");
    const long version = r.expect_int("format version");
    if (version != 1) r.fail("unsupported tmesh version " + std::to_string(version));

    r.expect_keyword("nodes");
    const long n = r.expect_int("node count");
    if (n < 0) r.fail("negative node count");
    mesh.vertices.reserve(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
        Vec3 p;
        p.x() = r.expect_double("node x");
        p.y() = r.expect_double("node y");
        p.z() = r.expect_double("node z");
        mesh.vertices.push_back(p);
    }

    r.expect_keyword("tets");
    const long m = r.expect_int("tet count");
    if (m < 0) r.fail("negative tet count");
    mesh.tets.reserve(static_cast<size_t>(m));
    for (long i = 0; i < m; ++i) {
        std::array<int, 4> t;
        for (int j = 0; j < 4; ++j) t[j] = static_cast<int>(r.expect_int("tet node index"));
        mesh.tets.push_back(t);
    }

    r.expect_keyword("groups");
    const long g = r.expect_int("group count");
    if (g < 0) r.fail("negative group count");
    for (long gi = 0; gi < g; ++gi) {
        r.expect_keyword("group");
        const std::string name = r.expect_token("group name");
        if (mesh.groups.count(name)) r.fail("duplicate group name '" + name + "'");
        const std::string kind = r.expect_token("group kind (tri|nodes)");
        MeshGroup grp;
        if (kind == "tri") {
            grp.kind = MeshGroup::Kind::Triangles;
            const long t = r.expect_int("triangle count");
            if (t < 0) r.fail("negative triangle count");
            grp.triangles.reserve(static_cast<size_t>(t));
            for (long i = 0; i < t; ++i) {
                std::array<int, 3> tri;
                for (int j = 0; j < 3; ++j)
                    tri[j] = static_cast<int>(r.expect_int("triangle node index"));
                grp.triangles.push_back(tri);
            }
        } else if (kind == "nodes") {
            grp.kind = MeshGroup::Kind::Nodes;
            const long k = r.expect_int("node count");
            if (k < 0) r.fail("negative node count");
            grp.nodes.reserve(static_cast<size_t>(k));
            for (long i = 0; i < k; ++i)
                grp.nodes.push_back(static_cast<int>(r.expect_int("group node index")));
        } else {
            r.fail("unknown group kind '" + kind + "'");
        }
        mesh.groups.emplace(name, std::move(grp));
    }

    const std::string trailing = r.next();
    if (!trailing.empty()) r.fail("trailing content '" + trailing + "'");

    try {
        mesh.validate();
    } catch (const Error& e) {
        throw Error(origin + ": " + e.what());
    }
    return mesh;
}

inline TetMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mesh file '" + path + "'");
    return read_mesh(in, path);
}

inline void write_mesh(const TetMesh& mesh, std::ostream& out) {
    out << "tmesh 1\n";
    out << "nodes " << mesh.num_vertices() << "\n";
    for (const Vec3& p : mesh.vertices)
        out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
            << detail::format_double(p.z()) << "\n";
    out << "tets " << mesh.num_tets() << "\n";
    for (const auto& t : mesh.tets)
        out << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << "\n";
    out << "groups " << mesh.groups.size() << "\n";
    for (const auto& [name, g] : mesh.groups) {
        if (g.kind == MeshGroup::Kind::Triangles) {
            out << "group " << name << " tri " << g.triangles.size() << "\n";
            for (const auto& tri : g.triangles) out << tri[0] << ' ' << tri[1] << ' ' << tri[2] << "\n";
        } else {
            out << "group " << name << " nodes " << g.nodes.size() << "\n";
            for (int i : g.nodes) out << i << "\n";
        }
    }
}

inline void write_mesh(const TetMesh& mesh, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: keep LF endings everywhere
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_mesh(mesh, out);
    out.flush();
    if (!out) throw Error("write failed for '" + path + "'");
}

inline std::string write_mesh_string(const TetMesh& mesh) {
    std::ostringstream ss;
    write_mesh(mesh, ss);
    return ss.str();
}

}  // namespace softarm
