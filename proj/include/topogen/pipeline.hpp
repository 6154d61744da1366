#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "topogen/denoiser.hpp"
#include "topogen/fea.hpp"
#include "topogen/grid.hpp"
#include "topogen/guidance.hpp"
#include "topogen/kernels.hpp"
#include "topogen/metrics.hpp"
#include "topogen/problem.hpp"

namespace topogen {

// One dataset entry: the problem plus its optimized reference topology. The
// problem carries the compliance baseline for CE evaluation.
struct DatasetRecord {
  ProblemSpec problem;
  DensityField optimal;
};

// Exact volume binarization: the round(vf * n) densest elements become 1,
// ties broken toward the lower element id.
DensityField quantile_binarize(const DensityField& gray, double vf);

struct OptimalDesign {
  DensityField topology;
  double compliance = 0.0;
};

// SIMP from the uniform start, binarized to the exact volume, compliance
// measured on the binary result. The baseline used everywhere CE is reported.
OptimalDesign optimize_reference(const ProblemSpec& problem, int simp_iters = 60);

// Stress and energy conditioning channels from one solve on the uniform
// vf_target domain. Linear assembly; the stack normalizes peaks anyway.
FieldPair problem_fields(const ProblemSpec& problem);

// Per record: case_NNNN.json next to case_NNNN.tgt holding "optimal".
void save_dataset(const std::filesystem::path& dir, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& dir);

struct SynthConfig {
  int count = 50;
  int nelx = 16;
  int nely = 16;
  std::uint64_t seed = 0;
  // Loads move to the top edge with an upward fan and the support moves to
  // the bottom edge, disjoint from the training generator's ranges.
  bool ood = false;
  int simp_iters = 60;

  void validate() const;
};

// Cantilever-family problems with volume fractions on the element lattice,
// so the binarized optimum hits its target exactly.
std::vector<DatasetRecord> synth_dataset(const SynthConfig& config);

// Conditioning stacks for every record; field variants pay one FEA solve per
// problem here.
std::vector<TrainSample> make_training_set(const std::vector<DatasetRecord>& records,
                                           ModelVariant variant, const KernelParams& params);

// Thresholded compliance plus the full metric set against the problem's
// baseline. Throws InvalidBaselineError when the problem has none.
EvaluationRecord evaluate_topology(const DensityField& topology, const ProblemSpec& problem,
                                   double sampling_s, double processing_s);

struct GenerateOptions {
  ModelVariant variant = ModelVariant::topodiff_ff;
  KernelParams kernels;
  GuidanceConfig guidance;
  int steps = 100;
  int refine_iters = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GenerateResult {
  DensityField raw;
  DensityField refined;
  EvaluationRecord raw_record;
  EvaluationRecord refined_record;
  double processing_s = 0.0;
  double sampling_s = 0.0;
  double refine_s = 0.0;
  bool refine_ok = true;
};

// Conditioning stack, reverse chain, exactly refine_iters optimizer steps,
// then evaluation of both topologies. Processing time is the median of three
// stack builds; the refined record folds refine time into processing so
// inference stays sampling + processing. A refine failure keeps the raw
// result and flips refine_ok.
GenerateResult generate_and_refine(const ProblemSpec& problem, const Denoiser& model,
                                   int t_train, const GenerateOptions& options);

// FNV-1a over the byte stream; the file/dataset forms feed it file contents
// (datasets in sorted filename order).
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::string file_hash(const std::filesystem::path& path);
std::string dataset_hash(const std::filesystem::path& dir);

// Everything needed to reproduce a run, plus where its inputs came from.
struct RunManifest {
  ModelVariant variant = ModelVariant::topodiff_ff;
  int steps = 0;
  int refine_iters = 0;
  GuidanceConfig guidance;
  KernelParams kernels;
  std::vector<std::uint64_t> seeds;
  double processing_s = 0.0;
  double sampling_s = 0.0;
  double inference_s = 0.0;
  std::string checkpoint_hash;
  std::string dataset_hash;

  std::string to_json() const;
};

// Deterministic per-problem chain seed for a benchmark run seed.
std::uint64_t benchmark_seed(std::uint64_t run_seed, int problem_index);

struct BenchmarkOptions {
  std::vector<ModelVariant> variants;
  std::map<ModelVariant, std::filesystem::path> checkpoints;
  std::vector<TaskSplit> splits;
  std::vector<std::uint64_t> seeds;
  KernelParams kernels;
  GuidanceConfig guidance;
  int steps = 100;
  int refine_iters = 10;
  // 0 reads TOPOGEN_WORKERS, then hardware_concurrency.
  int workers = 0;

  void validate() const;
};

struct BenchmarkReport {
  // metrics summary columns, each followed by its across-seed std.
  std::string summary_csv;
  std::string records_json;
  std::vector<std::string> annotations;
  std::vector<RunManifest> manifests;
};

// Variants x seeds x problems fanned out over a worker pool, reduced in
// problem order. Rows are per-seed aggregates averaged across seeds. A
// variant without a checkpoint file and a split a variant leaves empty are
// annotated and skipped rather than failing the run.
BenchmarkReport run_benchmark(const std::vector<DatasetRecord>& records,
                              const BenchmarkOptions& options);

// First of stem.ext, stem-1.ext, stem-2.ext ... that does not exist yet.
std::filesystem::path unique_report_path(const std::filesystem::path& dir,
                                         const std::string& stem, const std::string& ext);

}  // namespace topogen
