#ifndef REGFLOW_MESH_IO_HPP
#define REGFLOW_MESH_IO_HPP

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>

#include "regflow/geometry.hpp"

namespace regflow {

// Mesh text format:
//   NODES      then lines `id x y`
//   TRIANGLES  then lines `id n1 n2 n3`   (node ids)
//   BOUNDARY   then lines `node_id facet_id`
// Blank lines and lines starting with '#' are ignored. Node ids may be any
// non-negative integers; nodes are stored in file order.
inline Triangulation read_mesh(std::istream& in) {
  enum class Section { none, nodes, triangles, boundary } section = Section::none;
  Triangulation tri;
  std::map<long, std::size_t> node_index;
  std::vector<std::pair<long, std::size_t>> boundary;
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&lineno](const std::string& msg) {
    throw ValidationError("mesh line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "NODES") { section = Section::nodes; continue; }
    if (head == "TRIANGLES") { section = Section::triangles; continue; }
    if (head == "BOUNDARY") { section = Section::boundary; continue; }
    std::istringstream row(line);
    switch (section) {
      case Section::none:
        fail("data before any section header");
        break;
      case Section::nodes: {
        long id;
        double x, y;
        if (!(row >> id >> x >> y) || id < 0) fail("expected `id x y`");
        if (!node_index.emplace(id, tri.nodes.size()).second) fail("duplicate node id");
        tri.nodes.emplace_back(x, y);
        break;
      }
      case Section::triangles: {
        long id, a, b, c;
        if (!(row >> id >> a >> b >> c)) fail("expected `id n1 n2 n3`");
        std::array<std::size_t, 3> t{};
        const long ids[3] = {a, b, c};
        for (int k = 0; k < 3; ++k) {
          auto it = node_index.find(ids[k]);
          if (it == node_index.end()) fail("unknown node id " + std::to_string(ids[k]));
          t[static_cast<std::size_t>(k)] = it->second;
        }
        tri.triangles.push_back(t);
        break;
      }
      case Section::boundary: {
        long node;
        long facet;
        if (!(row >> node >> facet) || facet < 0) fail("expected `node_id facet_id`");
        auto it = node_index.find(node);
        if (it == node_index.end()) fail("unknown node id " + std::to_string(node));
        boundary.emplace_back(node, static_cast<std::size_t>(facet));
        break;
      }
    }
  }
  tri.boundary_facets.assign(tri.nodes.size(), {});
  for (const auto& [node, facet] : boundary) tri.boundary_facets[node_index.at(node)].insert(facet);
  tri.validate();
  return tri;
}

inline Triangulation read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mesh file " + path);
  return read_mesh(in);
}

inline void write_mesh(std::ostream& out, const Triangulation& tri) {
  char buf[128];
  out << "NODES\n";
  for (std::size_t i = 0; i < tri.nodes.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g\n", i, tri.nodes[i].x(), tri.nodes[i].y());
    out << buf;
  }
  out << "TRIANGLES\n";
  for (std::size_t t = 0; t < tri.triangles.size(); ++t)
    out << t << ' ' << tri.triangles[t][0] << ' ' << tri.triangles[t][1] << ' ' << tri.triangles[t][2] << '\n';
  out << "BOUNDARY\n";
  for (std::size_t i = 0; i < tri.nodes.size(); ++i)
    for (std::size_t f : tri.boundary_facets[i]) out << i << ' ' << f << '\n';
}

}  // namespace regflow

#endif  // REGFLOW_MESH_IO_HPP
