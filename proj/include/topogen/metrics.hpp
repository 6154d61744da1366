#pragma once

#include <string>
#include <utility>
#include <vector>

#include "topogen/fea.hpp"
#include "topogen/grid.hpp"

namespace topogen {

// Material mask at the fixed 0.5 threshold; values >= 0.5 count as solid.
std::vector<bool> threshold_material(const DensityField& topology);

enum class Connectivity { four, eight };

// Connected-component labeling of the thresholded material with per-component
// anchoring flags. Elements adjacent to a load node anchor a component to the
// load; elements adjacent to a node with any fixed dof anchor it to the
// supports.
struct ComponentAnalysis {
  std::vector<int> labels;  // per element; -1 where void
  int n_components = 0;
  std::vector<bool> touches_load;
  std::vector<bool> touches_support;

  bool any_floating() const;
};

ComponentAnalysis analyze_components(const DensityField& topology, const Loads& loads,
                                     const BoundaryConditions& bcs,
                                     Connectivity connectivity = Connectivity::eight);

// True iff some material component is anchored to neither a load nor a
// support.
bool floating_material(const DensityField& topology, const Loads& loads,
                       const BoundaryConditions& bcs,
                       Connectivity connectivity = Connectivity::eight);

// True iff some load node has no solid element touching it.
bool load_disrespect(const DensityField& topology, const Loads& loads);

// 100 |mean(threshold(topology)) - vf_target| / vf_target.
double volume_fraction_error(const DensityField& topology, double vf_target);

// 100 (c_gen - c_opt) / c_opt, signed; negative when generation beats the
// baseline.
double compliance_error(double c_gen, double c_opt);

struct EvaluationRecord {
  double compliance = 0.0;
  double compliance_opt = 0.0;
  double ce_percent = 0.0;
  double vfe_percent = 0.0;
  bool fm = false;
  bool ld = false;
  double sampling_s = 0.0;
  double processing_s = 0.0;
  double inference_s = 0.0;

  void validate() const;
};

bool manufacturable(const EvaluationRecord& record);

// Fraction of records with compliance <= cutoff, per cutoff.
std::vector<double> compliance_cdf(const std::vector<EvaluationRecord>& records,
                                   const std::vector<double>& cutoffs);

inline const std::vector<double> kCdfCutoffs = {10.0, 25.0, 50.0, 100.0};

// Evaluation splits: task-1 and task-2 drop samples with compliance above
// the cutoff, task-3 keeps everything.
struct TaskSplit {
  std::string name;
  bool filter_high_compliance = false;
  double compliance_cutoff = 100.0;

  static TaskSplit by_name(const std::string& name);
};

struct SplitSummary {
  std::string split;
  int n_records = 0;
  double avg_compliance = 0.0;
  double median_compliance = 0.0;
  double avg_ce_percent = 0.0;
  double avg_vfe_percent = 0.0;
  double fm_percent = 0.0;
  double ld_percent = 0.0;
  double avg_sampling_s = 0.0;
  double avg_processing_s = 0.0;
  double avg_inference_s = 0.0;
};

SplitSummary aggregate(const std::vector<EvaluationRecord>& records, const TaskSplit& split);

// Cross-model comparison. The design gap min-max normalizes the per-record
// tuple (compliance, CE, VFE, FM, processing, inference) over the pooled
// records and averages it, so 0 is the all-around ideal; ranks are per
// aggregated metric column, 1 is best, ties share their rank.
struct ModelComparison {
  std::string model;
  double avg_gap = 0.0;
  double median_gap = 0.0;
  double avg_rank = 0.0;
};

std::vector<ModelComparison> compare_models(
    const std::vector<std::pair<std::string, std::vector<EvaluationRecord>>>& per_model);

// CSV rows in report column order; one row per summary.
std::string summary_csv(const std::vector<std::pair<std::string, SplitSummary>>& rows);
std::string comparison_csv(const std::vector<ModelComparison>& rows);

// JSON array of per-record dumps.
std::string records_json(const std::vector<EvaluationRecord>& records);

}  // namespace topogen
