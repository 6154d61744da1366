#include "topogen/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <string>

#include <json.hpp>

#include "topogen/errors.hpp"

namespace topogen {
namespace {

// Element ids touching node (ix, iy): up to four, clipped at the boundary.
template <typename Fn>
void for_adjacent_elements(const Grid& g, int ix, int iy, Fn&& fn) {
  for (int ex = ix - 1; ex <= ix; ++ex) {
    if (ex < 0 || ex >= g.nelx) continue;
    for (int ey = iy - 1; ey <= iy; ++ey) {
      if (ey < 0 || ey >= g.nely) continue;
      fn(g.element_id(ex, ey));
    }
  }
}

std::vector<bool> anchor_mask(const Grid& g, const std::vector<int>& nodes) {
  std::vector<bool> mask(static_cast<size_t>(g.n_elements()), false);
  for (int node : nodes) {
    const int ix = node / (g.nely + 1);
    const int iy = node % (g.nely + 1);
    for_adjacent_elements(g, ix, iy, [&](int e) { mask[e] = true; });
  }
  return mask;
}

std::vector<int> load_nodes(const Loads& loads) {
  std::vector<int> nodes;
  for (const PointLoad& l : loads.entries) nodes.push_back(l.node);
  return nodes;
}

std::vector<int> support_nodes(const BoundaryConditions& bcs) {
  std::set<int> nodes;
  for (int dof : bcs.fixed_dofs) nodes.insert(dof / 2);
  return {nodes.begin(), nodes.end()};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void append_number(std::string& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  out += buf;
}

}  // namespace

std::vector<bool> threshold_material(const DensityField& topology) {
  topology.validate();
  std::vector<bool> solid(topology.values.size());
  for (size_t i = 0; i < topology.values.size(); ++i) solid[i] = topology.values[i] >= 0.5;
  return solid;
}

bool ComponentAnalysis::any_floating() const {
  for (int c = 0; c < n_components; ++c) {
    if (!touches_load[c] && !touches_support[c]) return true;
  }
  return false;
}

ComponentAnalysis analyze_components(const DensityField& topology, const Loads& loads,
                                     const BoundaryConditions& bcs, Connectivity connectivity) {
  const Grid& g = topology.grid;
  const std::vector<bool> solid = threshold_material(topology);
  const std::vector<bool> near_load = anchor_mask(g, load_nodes(loads));
  const std::vector<bool> near_support = anchor_mask(g, support_nodes(bcs));

  ComponentAnalysis out;
  out.labels.assign(solid.size(), -1);

  std::vector<int> stack;
  for (int seed = 0; seed < g.n_elements(); ++seed) {
    if (!solid[seed] || out.labels[seed] != -1) continue;
    const int label = out.n_components++;
    out.touches_load.push_back(false);
    out.touches_support.push_back(false);

    stack.assign(1, seed);
    out.labels[seed] = label;
    while (!stack.empty()) {
      const int e = stack.back();
      stack.pop_back();
      if (near_load[e]) out.touches_load[label] = true;
      if (near_support[e]) out.touches_support[label] = true;

      const int ex = e / g.nely;
      const int ey = e % g.nely;
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
          if (dx == 0 && dy == 0) continue;
          if (connectivity == Connectivity::four && dx != 0 && dy != 0) continue;
          const int nx = ex + dx;
          const int ny = ey + dy;
          if (nx < 0 || nx >= g.nelx || ny < 0 || ny >= g.nely) continue;
          const int n = g.element_id(nx, ny);
          if (solid[n] && out.labels[n] == -1) {
            out.labels[n] = label;
            stack.push_back(n);
          }
        }
      }
    }
  }
  return out;
}

bool floating_material(const DensityField& topology, const Loads& loads,
                       const BoundaryConditions& bcs, Connectivity connectivity) {
  return analyze_components(topology, loads, bcs, connectivity).any_floating();
}

bool load_disrespect(const DensityField& topology, const Loads& loads) {
  const Grid& g = topology.grid;
  const std::vector<bool> solid = threshold_material(topology);
  for (const PointLoad& l : loads.entries) {
    const int ix = l.node / (g.nely + 1);
    const int iy = l.node % (g.nely + 1);
    bool supported = false;
    for_adjacent_elements(g, ix, iy, [&](int e) { supported = supported || solid[e]; });
    if (!supported) return true;
  }
  return false;
}

double volume_fraction_error(const DensityField& topology, double vf_target) {
  if (!(vf_target > 0.0)) {
    throw InvalidInputError("volume fraction target must be positive");
  }
  const std::vector<bool> solid = threshold_material(topology);
  double count = 0.0;
  for (bool s : solid) count += s ? 1.0 : 0.0;
  const double mean = count / static_cast<double>(solid.size());
  return 100.0 * std::abs(mean - vf_target) / vf_target;
}

double compliance_error(double c_gen, double c_opt) {
  if (!(c_opt > 0.0)) {
    throw InvalidBaselineError("baseline compliance must be positive, got " +
                               std::to_string(c_opt));
  }
  return 100.0 * (c_gen - c_opt) / c_opt;
}

void EvaluationRecord::validate() const {
  if (!(compliance_opt > 0.0)) {
    throw InvalidBaselineError("record baseline compliance must be positive");
  }
  if (!std::isfinite(compliance) || !std::isfinite(ce_percent) || !std::isfinite(vfe_percent)) {
    throw InvalidInputError("record metrics must be finite");
  }
  if (sampling_s < 0.0 || processing_s < 0.0) {
    throw InvalidInputError("timings must be non-negative");
  }
  const double total = sampling_s + processing_s;
  if (std::abs(inference_s - total) > 1e-9 * std::max(1.0, total)) {
    throw InvalidInputError("inference time must be the sum of sampling and processing");
  }
}

bool manufacturable(const EvaluationRecord& record) {
  return !record.fm && !record.ld && record.compliance < 100.0;
}

std::vector<double> compliance_cdf(const std::vector<EvaluationRecord>& records,
                                   const std::vector<double>& cutoffs) {
  if (records.empty()) {
    throw InvalidInputError("compliance cdf needs at least one record");
  }
  std::vector<double> out;
  out.reserve(cutoffs.size());
  for (double cutoff : cutoffs) {
    int count = 0;
    for (const EvaluationRecord& r : records) {
      if (r.compliance <= cutoff) ++count;
    }
    out.push_back(static_cast<double>(count) / static_cast<double>(records.size()));
  }
  return out;
}

TaskSplit TaskSplit::by_name(const std::string& name) {
  if (name == "task-1" || name == "task-2") {
    return TaskSplit{name, true, 100.0};
  }
  if (name == "task-3") {
    return TaskSplit{name, false, 100.0};
  }
  throw InvalidInputError("unknown task split " + name);
}

SplitSummary aggregate(const std::vector<EvaluationRecord>& records, const TaskSplit& split) {
  std::vector<const EvaluationRecord*> kept;
  for (const EvaluationRecord& r : records) {
    if (!split.filter_high_compliance || r.compliance <= split.compliance_cutoff) {
      kept.push_back(&r);
    }
  }
  if (kept.empty()) {
    throw EmptySplitError("no records survive the " + split.name + " filter");
  }

  SplitSummary s;
  s.split = split.name;
  s.n_records = static_cast<int>(kept.size());
  std::vector<double> compliances;
  compliances.reserve(kept.size());
  for (const EvaluationRecord* r : kept) {
    compliances.push_back(r->compliance);
    s.avg_ce_percent += r->ce_percent;
    s.avg_vfe_percent += r->vfe_percent;
    s.fm_percent += r->fm ? 100.0 : 0.0;
    s.ld_percent += r->ld ? 100.0 : 0.0;
    s.avg_sampling_s += r->sampling_s;
    s.avg_processing_s += r->processing_s;
    s.avg_inference_s += r->inference_s;
  }
  const double n = static_cast<double>(kept.size());
  s.avg_compliance = mean_of(compliances);
  s.median_compliance = median_of(compliances);
  s.avg_ce_percent /= n;
  s.avg_vfe_percent /= n;
  s.fm_percent /= n;
  s.ld_percent /= n;
  s.avg_sampling_s /= n;
  s.avg_processing_s /= n;
  s.avg_inference_s /= n;
  return s;
}

std::vector<ModelComparison> compare_models(
    const std::vector<std::pair<std::string, std::vector<EvaluationRecord>>>& per_model) {
  if (per_model.empty()) {
    throw InvalidInputError("model comparison needs at least one model");
  }
  for (const auto& [name, records] : per_model) {
    if (records.empty()) {
      throw EmptySplitError("model " + name + " has no records to compare");
    }
  }

  constexpr int kMetrics = 6;
  auto record_tuple = [](const EvaluationRecord& r) {
    return std::array<double, kMetrics>{r.compliance,   r.ce_percent,
                                        r.vfe_percent,  r.fm ? 1.0 : 0.0,
                                        r.processing_s, r.inference_s};
  };

  std::array<double, kMetrics> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& [name, records] : per_model) {
    for (const EvaluationRecord& r : records) {
      const auto t = record_tuple(r);
      for (int m = 0; m < kMetrics; ++m) {
        lo[m] = std::min(lo[m], t[m]);
        hi[m] = std::max(hi[m], t[m]);
      }
    }
  }

  // Columns without spread carry no signal and contribute zero gap.
  auto normalized = [&](double v, int m) {
    return hi[m] > lo[m] ? (v - lo[m]) / (hi[m] - lo[m]) : 0.0;
  };

  std::vector<ModelComparison> out;
  std::vector<std::array<double, kMetrics>> columns;
  for (const auto& [name, records] : per_model) {
    std::vector<double> gaps;
    gaps.reserve(records.size());
    for (const EvaluationRecord& r : records) {
      const auto t = record_tuple(r);
      double gap = 0.0;
      for (int m = 0; m < kMetrics; ++m) gap += normalized(t[m], m);
      gaps.push_back(gap / kMetrics);
    }

    ModelComparison row;
    row.model = name;
    row.avg_gap = mean_of(gaps);
    row.median_gap = median_of(gaps);
    out.push_back(row);

    const SplitSummary s = aggregate(records, TaskSplit{"all", false, 0.0});
    columns.push_back({s.avg_compliance, s.avg_ce_percent, s.avg_vfe_percent, s.fm_percent,
                       s.avg_processing_s, s.avg_inference_s});
  }

  // Rank 1 is best (smallest) per column; ties share the better rank.
  for (size_t i = 0; i < out.size(); ++i) {
    double rank_sum = 0.0;
    for (int m = 0; m < kMetrics; ++m) {
      int better = 0;
      for (size_t j = 0; j < out.size(); ++j) {
        if (columns[j][m] < columns[i][m]) ++better;
      }
      rank_sum += better + 1;
    }
    out[i].avg_rank = rank_sum / kMetrics;
  }
  return out;
}

std::string summary_csv(const std::vector<std::pair<std::string, SplitSummary>>& rows) {
  std::string out =
      "model,split,n,avg_c,mdn_c,pct_ce,pct_vfe,pct_fm,sampling_s,processing_s,inference_s\n";
  for (const auto& [model, s] : rows) {
    out += model + "," + s.split + "," + std::to_string(s.n_records);
    for (double v : {s.avg_compliance, s.median_compliance, s.avg_ce_percent, s.avg_vfe_percent,
                     s.fm_percent, s.avg_sampling_s, s.avg_processing_s, s.avg_inference_s}) {
      out += ",";
      append_number(out, v);
    }
    out += "\n";
  }
  return out;
}

std::string comparison_csv(const std::vector<ModelComparison>& rows) {
  std::string out = "model,avg_gap,mdn_gap,avg_rank\n";
  for (const ModelComparison& r : rows) {
    out += r.model;
    for (double v : {r.avg_gap, r.median_gap, r.avg_rank}) {
      out += ",";
      append_number(out, v);
    }
    out += "\n";
  }
  return out;
}

std::string records_json(const std::vector<EvaluationRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EvaluationRecord& r : records) {
    arr.push_back({{"compliance", r.compliance},
                   {"compliance_opt", r.compliance_opt},
                   {"ce_percent", r.ce_percent},
                   {"vfe_percent", r.vfe_percent},
                   {"fm", r.fm},
                   {"ld", r.ld},
                   {"sampling_s", r.sampling_s},
                   {"processing_s", r.processing_s},
                   {"inference_s", r.inference_s}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace topogen
