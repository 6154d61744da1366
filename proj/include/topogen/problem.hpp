#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "topogen/fea.hpp"
#include "topogen/grid.hpp"

namespace topogen {

// A complete problem statement: domain, loading, supports, volume budget,
// and optionally the compliance of a known optimized baseline.
struct ProblemSpec {
  Grid grid;
  Loads loads;
  BoundaryConditions bcs;
  double vf_target = 0.4;
  std::optional<double> optimal_compliance;

  void validate() const;

  std::string to_json() const;
  static ProblemSpec from_json(const std::string& text, const std::string& origin = "json");

  void save(const std::filesystem::path& path) const;
  static ProblemSpec load(const std::filesystem::path& path);

  // Left edge fully fixed, unit downward load at the middle of the right edge.
  static ProblemSpec cantilever(int nelx, int nely, double vf);
};

}  // namespace topogen
