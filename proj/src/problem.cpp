#include "topogen/problem.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "topogen/errors.hpp"

namespace topogen {

using nlohmann::json;

void ProblemSpec::validate() const {
  grid.validate();
  loads.validate(grid);
  bcs.validate(grid);
  if (!(vf_target > 0.0 && vf_target < 1.0)) {
    throw InvalidInputError("vf_target must lie in (0, 1), got " + std::to_string(vf_target));
  }
  if (optimal_compliance && !(*optimal_compliance > 0.0)) {
    throw InvalidInputError("optimal_compliance must be positive when present");
  }
}

std::string ProblemSpec::to_json() const {
  json j;
  j["grid"] = {{"nelx", grid.nelx}, {"nely", grid.nely}};
  j["vf_target"] = vf_target;

  json jloads = json::array();
  for (const auto& entry : loads.entries) {
    const int ix = entry.node / (grid.nely + 1);
    const int iy = entry.node % (grid.nely + 1);
    jloads.push_back({{"ix", ix}, {"iy", iy}, {"fx", entry.fx}, {"fy", entry.fy}});
  }
  j["loads"] = std::move(jloads);

  // Group fixed dofs per node so the file reads as support locations.
  std::map<int, std::pair<bool, bool>> per_node;
  for (int dof : bcs.fixed_dofs) {
    auto& [x_fixed, y_fixed] = per_node[dof / 2];
    (dof % 2 == 0 ? x_fixed : y_fixed) = true;
  }
  json jfixed = json::array();
  for (const auto& [node, axes] : per_node) {
    std::string dofs;
    if (axes.first) dofs += 'x';
    if (axes.second) dofs += 'y';
    jfixed.push_back({{"ix", node / (grid.nely + 1)}, {"iy", node % (grid.nely + 1)}, {"dofs", dofs}});
  }
  j["fixed"] = std::move(jfixed);

  if (optimal_compliance) {
    j["optimal_compliance"] = *optimal_compliance;
  }
  return j.dump(2) + "\n";
}

ProblemSpec ProblemSpec::from_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }

  ProblemSpec spec;
  try {
    spec.grid.nelx = j.at("grid").at("nelx").get<int>();
    spec.grid.nely = j.at("grid").at("nely").get<int>();
    spec.vf_target = j.at("vf_target").get<double>();

    for (const auto& jl : j.at("loads")) {
      const int ix = jl.at("ix").get<int>();
      const int iy = jl.at("iy").get<int>();
      spec.loads.entries.push_back(PointLoad{
          ix * (spec.grid.nely + 1) + iy,
          jl.at("fx").get<double>(),
          jl.at("fy").get<double>(),
      });
    }
    for (const auto& jf : j.at("fixed")) {
      const int ix = jf.at("ix").get<int>();
      const int iy = jf.at("iy").get<int>();
      const int node = ix * (spec.grid.nely + 1) + iy;
      const auto dofs = jf.at("dofs").get<std::string>();
      for (char axis : dofs) {
        if (axis == 'x') {
          spec.bcs.fixed_dofs.insert(2 * node);
        } else if (axis == 'y') {
          spec.bcs.fixed_dofs.insert(2 * node + 1);
        } else {
          throw ParseError(origin + ": fixed dofs must be 'x', 'y', or 'xy'");
        }
      }
    }
    if (j.contains("optimal_compliance")) {
      spec.optimal_compliance = j.at("optimal_compliance").get<double>();
    }
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return spec;
}

void ProblemSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InvalidInputError("cannot open " + path.string() + " for writing");
  }
  out << to_json();
  if (!out) {
    throw InvalidInputError("failed writing " + path.string());
  }
}

ProblemSpec ProblemSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  ProblemSpec spec = from_json(buf.str(), path.filename().string());
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
  return spec;
}

ProblemSpec ProblemSpec::cantilever(int nelx, int nely, double vf) {
  ProblemSpec spec;
  spec.grid = Grid{nelx, nely};
  spec.grid.validate();
  spec.vf_target = vf;
  for (int iy = 0; iy <= nely; ++iy) {
    spec.bcs.fix_node(spec.grid, 0, iy, true, true);
  }
  spec.loads.entries.push_back(PointLoad{spec.grid.node_id(nelx, nely / 2), 0.0, -1.0});
  return spec;
}

}  // namespace topogen
