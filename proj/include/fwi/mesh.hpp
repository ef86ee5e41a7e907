#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fwi/error.hpp"

namespace fwi {

using Point = Eigen::Vector2d;
using Triangle = std::array<int, 3>;

enum class BoundaryTag { Dirichlet, Neumann };

struct BoundaryEdge {
    std::array<int, 2> v;
    BoundaryTag tag;
};

inline char tag_char(BoundaryTag tag) { return tag == BoundaryTag::Dirichlet ? 'D' : 'N'; }

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

inline double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace detail

/// Conforming triangulation of a polygonal domain with every boundary edge
/// tagged Dirichlet or Neumann. Immutable after construction; triangles are
/// stored counterclockwise and per-element geometry is cached.
class TriMesh {
public:
    TriMesh(std::vector<Point> vertices, std::vector<Triangle> triangles,
            std::vector<BoundaryEdge> boundary)
        : vertices_(std::move(vertices)), triangles_(std::move(triangles)),
          boundary_(std::move(boundary)) {
        validate_and_orient();
        compute_geometry();
    }

    std::size_t vertex_count() const noexcept { return vertices_.size(); }
    std::size_t triangle_count() const noexcept { return triangles_.size(); }
    const std::vector<Point>& vertices() const noexcept { return vertices_; }
    const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
    const std::vector<BoundaryEdge>& boundary_edges() const noexcept { return boundary_; }
    const Point& vertex(std::size_t i) const { return vertices_[i]; }
    const Triangle& triangle(std::size_t t) const { return triangles_[t]; }

    /// Largest element diameter (longest edge over all triangles).
    double h() const noexcept { return h_; }
    double area(std::size_t t) const { return areas_[t]; }
    const std::vector<double>& areas() const noexcept { return areas_; }
    double total_area() const noexcept { return total_area_; }

    /// Row i holds the constant gradient of the i-th barycentric coordinate on t.
    const Eigen::Matrix<double, 3, 2>& basis_gradients(std::size_t t) const { return grads_[t]; }

    Point centroid(std::size_t t) const {
        const auto& tri = triangles_[t];
        return (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]) / 3.0;
    }

    /// Smallest interior angle in radians (shape-regularity diagnostic only).
    double min_angle() const {
        double best = std::numbers::pi;
        for (const auto& tri : triangles_) {
            for (int k = 0; k < 3; ++k) {
                const Point e1 = vertices_[tri[(k + 1) % 3]] - vertices_[tri[k]];
                const Point e2 = vertices_[tri[(k + 2) % 3]] - vertices_[tri[k]];
                const double c = e1.dot(e2) / (e1.norm() * e2.norm());
                best = std::min(best, std::acos(std::clamp(c, -1.0, 1.0)));
            }
        }
        return best;
    }

    bool has_dirichlet() const {
        return std::any_of(boundary_.begin(), boundary_.end(),
                           [](const BoundaryEdge& e) { return e.tag == BoundaryTag::Dirichlet; });
    }

private:
    void validate_and_orient() {
        const long nv = static_cast<long>(vertices_.size());
        if (triangles_.empty()) throw MeshError("mesh has no triangles");

        std::vector<char> referenced(vertices_.size(), 0);
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            auto& tri = triangles_[t];
            for (int k = 0; k < 3; ++k) {
                if (tri[k] < 0 || tri[k] >= nv) throw MeshError("vertex index out of range", long(t));
                referenced[tri[k]] = 1;
            }
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
                throw MeshError("triangle repeats a vertex", long(t));
            }
            const Point& a = vertices_[tri[0]];
            const double signed_area =
                0.5 * detail::cross(vertices_[tri[1]] - a, vertices_[tri[2]] - a);
            const double scale = std::max({(vertices_[tri[1]] - a).squaredNorm(),
                                           (vertices_[tri[2]] - a).squaredNorm(), 1e-300});
            if (std::abs(signed_area) <= 1e-14 * scale) {
                throw MeshError("degenerate or inverted triangle", long(t));
            }
            if (signed_area < 0) std::swap(tri[1], tri[2]);
        }
        for (long i = 0; i < nv; ++i) {
            if (!referenced[i]) throw MeshError("vertex " + std::to_string(i) + " not used by any triangle");
        }

        // Each edge key maps to (use count, directed orientation of first use, owner triangle).
        struct EdgeUse {
            int count = 0;
            int from = -1;
            long owner = -1;
        };
        std::unordered_map<std::uint64_t, EdgeUse> edges;
        edges.reserve(triangles_.size() * 3);
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            for (int k = 0; k < 3; ++k) {
                const int a = tri[k], b = tri[(k + 1) % 3];
                auto& use = edges[detail::edge_key(a, b)];
                if (use.count == 0) {
                    use.from = a;
                    use.owner = long(t);
                } else if (use.count == 1) {
                    // Neighbours traverse a shared edge in opposite directions.
                    if (use.from == a) throw MeshError("inverted triangle overlaps its neighbour", long(t));
                } else {
                    throw MeshError("edge shared by more than two triangles", long(t));
                }
                ++use.count;
            }
        }

        std::unordered_map<int, std::vector<int>> boundary_adjacency;
        for (const auto& [key, use] : edges) {
            if (use.count != 1) continue;
            const int a = int(key >> 32), b = int(key & 0xffffffffu);
            boundary_adjacency[a].push_back(b);
            boundary_adjacency[b].push_back(a);
        }

        // A hanging vertex v on edge (a,b) shows up as single-use edges (a,b), (a,v), (v,b).
        for (const auto& [a, nbrs] : boundary_adjacency) {
            for (int b : nbrs) {
                if (b < a) continue;
                const Point ab = vertices_[b] - vertices_[a];
                for (int v : nbrs) {
                    if (v == b) continue;
                    if (!edges.count(detail::edge_key(v, b)) || edges[detail::edge_key(v, b)].count != 1) continue;
                    const Point av = vertices_[v] - vertices_[a];
                    const double along = av.dot(ab) / ab.squaredNorm();
                    if (along > 0 && along < 1 &&
                        std::abs(detail::cross(ab, av)) <= 1e-12 * ab.squaredNorm()) {
                        throw MeshError("non-conforming mesh: hanging vertex " + std::to_string(v),
                                        edges[detail::edge_key(a, b)].owner);
                    }
                }
            }
        }

        std::unordered_map<std::uint64_t, int> tagged;
        for (std::size_t e = 0; e < boundary_.size(); ++e) {
            const auto [a, b] = boundary_[e].v;
            if (a < 0 || a >= nv || b < 0 || b >= nv) throw MeshError("boundary edge index out of range", long(e));
            const auto key = detail::edge_key(a, b);
            auto it = edges.find(key);
            if (it == edges.end() || it->second.count != 1) {
                throw MeshError("tagged edge is not a boundary edge", long(e));
            }
            if (tagged.count(key)) throw MeshError("boundary edge tagged twice", long(e));
            tagged[key] = int(e);
        }

        for (const auto& [key, use] : edges) {
            if (use.count == 1 && !tagged.count(key)) throw MeshError("untagged boundary edge", use.owner);
        }

        const bool has_neumann = std::any_of(boundary_.begin(), boundary_.end(), [](const BoundaryEdge& e) {
            return e.tag == BoundaryTag::Neumann;
        });
        if (!has_neumann) throw MeshError("at least one boundary edge must be tagged Neumann");
    }

    void compute_geometry() {
        areas_.resize(triangles_.size());
        grads_.resize(triangles_.size());
        h_ = 0;
        total_area_ = 0;
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            const Point& p0 = vertices_[tri[0]];
            const Point& p1 = vertices_[tri[1]];
            const Point& p2 = vertices_[tri[2]];
            const double det = detail::cross(p1 - p0, p2 - p0);
            areas_[t] = 0.5 * det;
            total_area_ += areas_[t];
            // grad lambda_i = rot90(opposite edge) / (2|T|)
            auto& g = grads_[t];
            g.row(0) = Eigen::RowVector2d(p1.y() - p2.y(), p2.x() - p1.x()) / det;
            g.row(1) = Eigen::RowVector2d(p2.y() - p0.y(), p0.x() - p2.x()) / det;
            g.row(2) = Eigen::RowVector2d(p0.y() - p1.y(), p1.x() - p0.x()) / det;
            h_ = std::max({h_, (p1 - p0).norm(), (p2 - p1).norm(), (p0 - p2).norm()});
        }
    }

    std::vector<Point> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<BoundaryEdge> boundary_;
    std::vector<double> areas_;
    std::vector<Eigen::Matrix<double, 3, 2>> grads_;
    double h_ = 0;
    double total_area_ = 0;
};

// ---------------------------------------------------------------------------
// Text format:
//   vertices M      then M lines "x y"
//   triangles K     then K lines "i j k"   (0-based)
//   boundary B      then B lines "i j TAG" (TAG in {D, N})
// Blank lines and lines starting with '#' are ignored.

namespace detail {

inline bool next_content_line(std::istream& in, std::string& line, long& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        return true;
    }
    return false;
}

inline std::size_t read_section_header(std::istream& in, const std::string& name, long& lineno) {
    std::string line;
    if (!next_content_line(in, line, lineno)) throw ParseError("missing '" + name + "' section");
    std::istringstream ss(line);
    std::string word;
    long count = -1;
    if (!(ss >> word >> count) || word != name || count < 0) {
        throw ParseError("line " + std::to_string(lineno) + ": expected '" + name + " <count>'");
    }
    return std::size_t(count);
}

}  // namespace detail

inline TriMesh read_mesh(std::istream& in) {
    long lineno = 0;
    std::string line;
    auto fail = [&](const std::string& msg) {
        throw ParseError("line " + std::to_string(lineno) + ": " + msg);
    };

    const std::size_t nv = detail::read_section_header(in, "vertices", lineno);
    std::vector<Point> vertices(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        if (!detail::next_content_line(in, line, lineno)) fail("unexpected end of vertex list");
        std::istringstream ss(line);
        double x, y;
        if (!(ss >> x >> y)) fail("bad vertex " + std::to_string(i));
        vertices[i] = Point(x, y);
    }

    const std::size_t nt = detail::read_section_header(in, "triangles", lineno);
    std::vector<Triangle> triangles(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        if (!detail::next_content_line(in, line, lineno)) fail("unexpected end of triangle list");
        std::istringstream ss(line);
        if (!(ss >> triangles[t][0] >> triangles[t][1] >> triangles[t][2])) {
            fail("bad triangle " + std::to_string(t));
        }
    }

    const std::size_t nb = detail::read_section_header(in, "boundary", lineno);
    std::vector<BoundaryEdge> boundary(nb);
    for (std::size_t e = 0; e < nb; ++e) {
        if (!detail::next_content_line(in, line, lineno)) fail("unexpected end of boundary list");
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> boundary[e].v[0] >> boundary[e].v[1])) fail("bad boundary edge " + std::to_string(e));
        if (!(ss >> tag)) throw MeshError("untagged boundary edge", long(e));
        if (tag == "D") {
            boundary[e].tag = BoundaryTag::Dirichlet;
        } else if (tag == "N") {
            boundary[e].tag = BoundaryTag::Neumann;
        } else {
            fail("unknown boundary tag '" + tag + "'");
        }
    }
    return TriMesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

inline TriMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open mesh file '" + path + "'");
    return read_mesh(in);
}

inline void write_mesh(std::ostream& out, const TriMesh& mesh) {
    out << std::setprecision(17);
    out << "vertices " << mesh.vertex_count() << '\n';
    for (const auto& p : mesh.vertices()) out << p.x() << ' ' << p.y() << '\n';
    out << "triangles " << mesh.triangle_count() << '\n';
    for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out << "boundary " << mesh.boundary_edges().size() << '\n';
    for (const auto& e : mesh.boundary_edges()) out << e.v[0] << ' ' << e.v[1] << ' ' << tag_char(e.tag) << '\n';
}

inline void save_mesh(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write mesh file '" + path + "'");
    write_mesh(out, mesh);
}

// ---------------------------------------------------------------------------

/// Result of a uniform refinement: vertices [0, coarse.vertex_count()) are the
/// coarse vertices, vertex coarse.vertex_count() + k is the midpoint of
/// edge_parents[k].
struct Refinement {
    TriMesh mesh;
    std::vector<std::array<int, 2>> edge_parents;
    std::size_t coarse_vertex_count;
};

inline Refinement refine_uniform_with_transfer(const TriMesh& coarse) {
    std::vector<Point> vertices = coarse.vertices();
    std::vector<std::array<int, 2>> parents;
    std::unordered_map<std::uint64_t, int> midpoint;
    midpoint.reserve(coarse.triangle_count() * 2);
    auto mid = [&](int a, int b) {
        const auto key = detail::edge_key(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const int id = int(vertices.size());
        vertices.push_back(0.5 * (coarse.vertex(a) + coarse.vertex(b)));
        parents.push_back({std::min(a, b), std::max(a, b)});
        midpoint.emplace(key, id);
        return id;
    };

    std::vector<Triangle> triangles;
    triangles.reserve(coarse.triangle_count() * 4);
    for (const auto& t : coarse.triangles()) {
        const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        triangles.push_back({t[0], ab, ca});
        triangles.push_back({ab, t[1], bc});
        triangles.push_back({ca, bc, t[2]});
        triangles.push_back({ab, bc, ca});
    }
    std::vector<BoundaryEdge> boundary;
    boundary.reserve(coarse.boundary_edges().size() * 2);
    for (const auto& e : coarse.boundary_edges()) {
        const int m = mid(e.v[0], e.v[1]);
        boundary.push_back({{e.v[0], m}, e.tag});
        boundary.push_back({{m, e.v[1]}, e.tag});
    }
    return {TriMesh(std::move(vertices), std::move(triangles), std::move(boundary)), std::move(parents),
            coarse.vertex_count()};
}

/// Splits every triangle into four via its edge midpoints.
inline TriMesh refine_uniform(const TriMesh& mesh) { return refine_uniform_with_transfer(mesh).mesh; }

/// Exact P1 prolongation along a refinement.
inline Eigen::VectorXd prolongate(const Refinement& r, const Eigen::VectorXd& coarse) {
    check_dimension(std::size_t(coarse.size()), r.coarse_vertex_count, "prolongate");
    Eigen::VectorXd fine(r.mesh.vertex_count());
    fine.head(coarse.size()) = coarse;
    for (std::size_t k = 0; k < r.edge_parents.size(); ++k) {
        fine[r.coarse_vertex_count + k] = 0.5 * (coarse[r.edge_parents[k][0]] + coarse[r.edge_parents[k][1]]);
    }
    return fine;
}

/// Boundary tags for the four sides of the unit square.
struct SquareSides {
    BoundaryTag left = BoundaryTag::Neumann;
    BoundaryTag right = BoundaryTag::Neumann;
    BoundaryTag bottom = BoundaryTag::Neumann;
    BoundaryTag top = BoundaryTag::Neumann;
};

/// Unit square with n x n cells, each split along its anti-diagonal;
/// midpoint refinement of structured_square(n) reproduces structured_square(2n)
/// up to vertex numbering.
inline TriMesh structured_square(int n, SquareSides sides = {}) {
    if (n < 1) throw MeshError("structured_square needs n >= 1");
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    std::vector<Point> vertices;
    vertices.reserve(std::size_t(n + 1) * (n + 1));
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) vertices.emplace_back(double(i) / n, double(j) / n);
    }
    std::vector<Triangle> triangles;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            triangles.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
            triangles.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    std::vector<BoundaryEdge> boundary;
    for (int i = 0; i < n; ++i) {
        boundary.push_back({{id(i, 0), id(i + 1, 0)}, sides.bottom});
        boundary.push_back({{id(i, n), id(i + 1, n)}, sides.top});
        boundary.push_back({{id(0, i), id(0, i + 1)}, sides.left});
        boundary.push_back({{id(n, i), id(n, i + 1)}, sides.right});
    }
    return TriMesh(std::move(vertices), std::move(triangles), std::move(boundary));
}

/// Same topology with every coordinate multiplied by `factor`.
inline TriMesh scaled(const TriMesh& mesh, double factor) {
    std::vector<Point> v = mesh.vertices();
    for (auto& p : v) p *= factor;
    return TriMesh(std::move(v), mesh.triangles(), mesh.boundary_edges());
}

}  // namespace fwi
