#pragma once

#include <Eigen/Sparse>

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>

#include "sfem/errors.hpp"
#include "sfem/mesh.hpp"

namespace sfem {

namespace detail {
inline std::string vtk_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

/// Legacy ASCII VTK PolyData: LINES for d = 1, POLYGONS (triangles) for
/// d = 2, with optional scalar point data.
inline void write_vtk(std::ostream& out, const SurfaceMesh& mesh,
                      const std::map<std::string, Vector>& point_data = {}) {
    out << "# vtk DataFile Version 3.0\n";
    out << "sfem " << mesh.surface().name() << " level " << mesh.level() << "\n";
    out << "ASCII\nDATASET POLYDATA\n";
    out << "POINTS " << mesh.num_vertices() << " double\n";
    for (const Point& p : mesh.vertices())
        out << detail::vtk_number(p.x()) << ' ' << detail::vtk_number(p.y()) << ' ' << detail::vtk_number(p.z())
            << '\n';
    const int npe = mesh.nodes_per_simplex();
    out << (mesh.dim() == 1 ? "LINES " : "POLYGONS ") << mesh.num_simplices() << ' '
        << mesh.num_simplices() * (npe + 1) << '\n';
    for (int s = 0; s < mesh.num_simplices(); ++s) {
        out << npe;
        for (int v : mesh.simplex(s)) out << ' ' << v;
        out << '\n';
    }
    if (!point_data.empty()) {
        out << "POINT_DATA " << mesh.num_vertices() << '\n';
        for (const auto& [name, values] : point_data) {
            if (values.size() != mesh.num_vertices())
                throw ParameterError("write_vtk: point data '" + name + "' has wrong length");
            out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (Eigen::Index i = 0; i < values.size(); ++i) out << detail::vtk_number(values[i]) << '\n';
        }
    }
}

inline void write_vtk_file(const std::string& path, const SurfaceMesh& mesh,
                           const std::map<std::string, Vector>& point_data = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_vtk(out, mesh, point_data);
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

/// MatrixMarket coordinate real general, 1-based indices.
inline void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    for (int col = 0; col < a.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(a, col); it; ++it)
            out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << detail::vtk_number(it.value()) << '\n';
}

}  // namespace sfem
