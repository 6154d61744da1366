#include "topogen/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

#include <json.hpp>

#include "topogen/diffusion.hpp"
#include "topogen/errors.hpp"
#include "topogen/simp.hpp"
#include "topogen/tensor_io.hpp"

namespace topogen {

namespace {

using steady = std::chrono::steady_clock;

double seconds_since(steady::time_point start) {
  return std::chrono::duration<double>(steady::now() - start).count();
}

std::string case_stem(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "case_%04zu", index);
  return buf;
}

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  out += buf;
}

std::string hex16(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t fnv1a64_accumulate(std::uint64_t h, const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

std::uint64_t accumulate_file(std::uint64_t h, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot read " + path.string());
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    h = fnv1a64_accumulate(h, buf, static_cast<std::size_t>(in.gcount()));
  }
  return h;
}

double thresholded_compliance(const DensityField& topology, const ProblemSpec& problem) {
  DensityField binary = topology;
  for (double& v : binary.values) v = v >= 0.5 ? 1.0 : 0.0;
  const SimpConfig config;
  const SparseMatrix k = assemble_stiffness(binary, config.penal, Material{});
  const DisplacementField u = solve_displacement(k, problem.loads, problem.bcs);
  return compliance(u, problem.loads);
}

nlohmann::json record_json(const EvaluationRecord& r) {
  return {{"compliance", r.compliance},
          {"compliance_opt", r.compliance_opt},
          {"ce_percent", r.ce_percent},
          {"vfe_percent", r.vfe_percent},
          {"fm", r.fm},
          {"ld", r.ld},
          {"sampling_s", r.sampling_s},
          {"processing_s", r.processing_s},
          {"inference_s", r.inference_s}};
}

nlohmann::json guidance_json(const GuidanceConfig& g) {
  return {{"compliance", to_string(g.compliance)},
          {"floating", to_string(g.floating)},
          {"scale_c", g.scale_c},
          {"scale_fm", g.scale_fm},
          {"external_path", g.external_path.string()}};
}

nlohmann::json kernels_json(const KernelParams& k) {
  return {{"variant", to_string(k.variant)}, {"alpha", k.alpha}, {"beta", k.beta}};
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TOPOGEN_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

}  // namespace

DensityField quantile_binarize(const DensityField& gray, double vf) {
  gray.validate();
  if (!(vf > 0.0) || vf >= 1.0) {
    throw InvalidInputError("binarization volume fraction must be in (0, 1)");
  }
  const int n = gray.grid.n_elements();
  const int count = static_cast<int>(std::lround(vf * n));
  std::vector<int> order(gray.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return gray.values[a] > gray.values[b]; });
  DensityField out = DensityField::uniform(gray.grid, 0.0);
  for (int i = 0; i < count && i < n; ++i) out.values[order[i]] = 1.0;
  return out;
}

OptimalDesign optimize_reference(const ProblemSpec& problem, int simp_iters) {
  problem.validate();
  SimpConfig config;
  config.vf_target = problem.vf_target;
  config.max_iters = simp_iters;
  const OptimizationTrace trace =
      run_simp(problem, config, DensityField::uniform(problem.grid, problem.vf_target));
  OptimalDesign out;
  out.topology = quantile_binarize(trace.final_density, problem.vf_target);
  out.compliance = thresholded_compliance(out.topology, problem);
  return out;
}

FieldPair problem_fields(const ProblemSpec& problem) {
  problem.validate();
  const DensityField uniform = DensityField::uniform(problem.grid, problem.vf_target);
  const SparseMatrix k = assemble_stiffness(uniform, 1.0, Material{});
  const DisplacementField u = solve_displacement(k, problem.loads, problem.bcs);
  return stress_energy_fields(u, uniform, Material{});
}

void save_dataset(const std::filesystem::path& dir, const std::vector<DatasetRecord>& records) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string stem = case_stem(i);
    records[i].problem.save(dir / (stem + ".json"));
    TensorArchive archive;
    add_density(archive, "optimal", records[i].optimal);
    archive.save(dir / (stem + ".tgt"));
  }
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InvalidInputError("dataset path is not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> sidecars;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") sidecars.push_back(entry.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  if (sidecars.empty()) {
    std::cerr << "warning: dataset directory " << dir.string() << " has no records\n";
    return {};
  }

  std::vector<DatasetRecord> out;
  out.reserve(sidecars.size());
  for (const auto& sidecar : sidecars) {
    DatasetRecord rec;
    rec.problem = ProblemSpec::load(sidecar);
    std::filesystem::path archive_path = sidecar;
    archive_path.replace_extension(".tgt");
    if (!std::filesystem::exists(archive_path)) {
      throw ValidationError("record " + sidecar.stem().string() + " has no topology archive");
    }
    rec.optimal = read_density(TensorArchive::load(archive_path), "optimal");
    if (!(rec.optimal.grid == rec.problem.grid)) {
      throw ValidationError("record " + sidecar.stem().string() +
                            " topology does not match its problem grid");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void SynthConfig::validate() const {
  Grid{nelx, nely}.validate();
  if (count < 0) throw InvalidConfigError("synthetic dataset count must be nonnegative");
  if (simp_iters < 1) throw InvalidConfigError("synthetic dataset needs optimizer iterations");
}

std::vector<DatasetRecord> synth_dataset(const SynthConfig& config) {
  config.validate();
  const Grid grid{config.nelx, config.nely};
  const int n = grid.n_elements();
  std::mt19937_64 rng(config.seed);

  // Volume fractions land on the element lattice so the binarized optimum
  // hits the target exactly.
  std::uniform_int_distribution<int> pick_k(static_cast<int>(std::lround(0.35 * n)),
                                            static_cast<int>(std::lround(0.5 * n)));
  const double deg = std::acos(-1.0) / 180.0;

  std::vector<DatasetRecord> out;
  out.reserve(static_cast<std::size_t>(config.count));
  for (int i = 0; i < config.count; ++i) {
    ProblemSpec p;
    p.grid = grid;
    p.vf_target = static_cast<double>(pick_k(rng)) / n;
    if (!config.ood) {
      for (int iy = 0; iy <= grid.nely; ++iy) p.bcs.fix_node(grid, 0, iy, true, true);
      std::uniform_int_distribution<int> pick_iy(grid.nely / 4, 3 * grid.nely / 4);
      const int iy = pick_iy(rng);
      std::uniform_real_distribution<double> pick_theta(210.0, 330.0);
      const double theta = pick_theta(rng) * deg;
      p.loads.entries.push_back({grid.node_id(grid.nelx, iy), std::cos(theta), std::sin(theta)});
    } else {
      // Skip ix 0 so the support shares no node with the training pattern's
      // left edge; the splits stay disjoint in dof space, not just by name.
      for (int ix = 1; ix <= grid.nelx; ++ix) p.bcs.fix_node(grid, ix, grid.nely, true, true);
      std::uniform_int_distribution<int> pick_ix(grid.nelx / 4, 3 * grid.nelx / 4);
      const int ix = pick_ix(rng);
      std::uniform_real_distribution<double> pick_theta(30.0, 150.0);
      const double theta = pick_theta(rng) * deg;
      p.loads.entries.push_back({grid.node_id(ix, 0), std::cos(theta), std::sin(theta)});
    }

    const OptimalDesign reference = optimize_reference(p, config.simp_iters);
    p.optimal_compliance = reference.compliance;
    out.push_back({std::move(p), reference.topology});
  }
  return out;
}

std::vector<TrainSample> make_training_set(const std::vector<DatasetRecord>& records,
                                           ModelVariant variant, const KernelParams& params) {
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    std::optional<FieldPair> fields;
    if (variant_requires_fields(variant)) fields = problem_fields(rec.problem);
    out.push_back({rec.optimal, build_stack(rec.problem, variant, fields, params)});
  }
  return out;
}

EvaluationRecord evaluate_topology(const DensityField& topology, const ProblemSpec& problem,
                                   double sampling_s, double processing_s) {
  topology.validate();
  problem.validate();
  if (!(topology.grid == problem.grid)) {
    throw InvalidInputError("topology grid does not match the problem grid");
  }
  if (!problem.optimal_compliance) {
    throw InvalidBaselineError("problem has no compliance baseline");
  }

  EvaluationRecord r;
  r.compliance = thresholded_compliance(topology, problem);
  r.compliance_opt = *problem.optimal_compliance;
  r.ce_percent = compliance_error(r.compliance, r.compliance_opt);
  r.vfe_percent = volume_fraction_error(topology, problem.vf_target);
  r.fm = floating_material(topology, problem.loads, problem.bcs);
  r.ld = load_disrespect(topology, problem.loads);
  r.sampling_s = sampling_s;
  r.processing_s = processing_s;
  r.inference_s = sampling_s + processing_s;
  r.validate();
  return r;
}

void GenerateOptions::validate() const {
  if (steps < 1) throw InvalidConfigError("sampling needs at least one step");
  if (refine_iters < 0) throw InvalidConfigError("refine iterations must be nonnegative");
  kernels.validate();
  guidance.validate();
}

GenerateResult generate_and_refine(const ProblemSpec& problem, const Denoiser& model,
                                   int t_train, const GenerateOptions& options) {
  problem.validate();
  options.validate();

  // Warm-cache median of three builds; the stack is pure so only the last
  // copy is kept.
  const bool needs_fields = variant_requires_fields(options.variant);
  ConditioningStack stack;
  std::array<double, 3> build_s{};
  for (int rep = 0; rep < 3; ++rep) {
    const auto start = steady::now();
    std::optional<FieldPair> fields;
    if (needs_fields) fields = problem_fields(problem);
    stack = build_stack(problem, options.variant, fields, options.kernels);
    build_s[rep] = seconds_since(start);
  }
  std::sort(build_s.begin(), build_s.end());

  GenerateResult result;
  result.processing_s = build_s[1];

  if (const auto* conv = dynamic_cast<const ConvDenoiser*>(&model);
      conv != nullptr && conv->cond_channels() != static_cast<int>(stack.channels.size())) {
    throw InvalidConfigError("checkpoint expects " + std::to_string(conv->cond_channels()) +
                             " conditioning channels but variant " + to_string(options.variant) +
                             " builds " + std::to_string(stack.channels.size()));
  }

  SampleOptions sopts;
  sopts.steps = options.steps;
  sopts.t_train = t_train;
  sopts.seed = options.seed;
  if (options.guidance.scale_c != 0.0 || options.guidance.scale_fm != 0.0) {
    sopts.guidance = GuidanceEngine(problem, model, t_train, options.guidance);
  }

  const auto sample_start = steady::now();
  result.raw = sample(model, stack, sopts);
  result.sampling_s = seconds_since(sample_start);

  if (options.refine_iters == 0) {
    result.refined = result.raw;
  } else {
    const auto refine_start = steady::now();
    try {
      result.refined = refine(result.raw, problem, options.refine_iters).final_density;
      result.refine_s = seconds_since(refine_start);
    } catch (const Error& e) {
      result.refine_s = seconds_since(refine_start);
      result.refine_ok = false;
      result.refined = result.raw;
      std::cerr << "warning: refine failed, keeping the raw topology: " << e.what() << "\n";
    }
  }

  result.raw_record =
      evaluate_topology(result.raw, problem, result.sampling_s, result.processing_s);
  if (result.refine_ok && options.refine_iters > 0) {
    result.refined_record = evaluate_topology(result.refined, problem, result.sampling_s,
                                              result.processing_s + result.refine_s);
  } else {
    result.refined_record = result.raw_record;
  }
  return result;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  return fnv1a64_accumulate(kFnvBasis, data, size);
}

std::string file_hash(const std::filesystem::path& path) {
  return hex16(accumulate_file(kFnvBasis, path));
}

std::string dataset_hash(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw InvalidInputError("dataset path is not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = kFnvBasis;
  for (const auto& f : files) h = accumulate_file(h, f);
  return hex16(h);
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["variant"] = topogen::to_string(variant);
  j["steps"] = steps;
  j["refine_iters"] = refine_iters;
  j["guidance"] = guidance_json(guidance);
  j["kernels"] = kernels_json(kernels);
  j["seeds"] = seeds;
  j["timings"] = {{"processing_s", processing_s},
                  {"sampling_s", sampling_s},
                  {"inference_s", inference_s}};
  j["checkpoint_hash"] = checkpoint_hash;
  j["dataset_hash"] = dataset_hash;
  return j.dump(2) + "\n";
}

std::uint64_t benchmark_seed(std::uint64_t run_seed, int problem_index) {
  std::uint64_t x = run_seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(problem_index + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

void BenchmarkOptions::validate() const {
  if (variants.empty()) throw InvalidConfigError("benchmark needs at least one variant");
  if (splits.empty()) throw InvalidConfigError("benchmark needs at least one split");
  if (seeds.empty()) throw InvalidConfigError("benchmark needs at least one seed");
  if (steps < 1) throw InvalidConfigError("sampling needs at least one step");
  if (refine_iters < 0) throw InvalidConfigError("refine iterations must be nonnegative");
  if (workers < 0) throw InvalidConfigError("worker count must be nonnegative");
  kernels.validate();
  guidance.validate();
}

BenchmarkReport run_benchmark(const std::vector<DatasetRecord>& records,
                              const BenchmarkOptions& options) {
  options.validate();
  if (records.empty()) throw InvalidInputError("benchmark needs at least one problem");

  BenchmarkReport report;

  struct LoadedVariant {
    ModelVariant variant;
    ConvDenoiser model;
    int t_train;
    std::string hash;
  };
  std::vector<LoadedVariant> loaded;
  for (ModelVariant variant : options.variants) {
    const auto it = options.checkpoints.find(variant);
    if (it == options.checkpoints.end() || !std::filesystem::exists(it->second)) {
      report.annotations.push_back("variant " + to_string(variant) +
                                   " skipped: checkpoint unavailable");
      continue;
    }
    auto [model, t_train] = ConvDenoiser::load_checkpoint(it->second);
    loaded.push_back({variant, std::move(model), t_train, file_hash(it->second)});
  }

  struct Job {
    int variant;
    int seed;
    int problem;
  };
  std::vector<Job> jobs;
  const int n_seeds = static_cast<int>(options.seeds.size());
  const int n_problems = static_cast<int>(records.size());
  jobs.reserve(loaded.size() * static_cast<std::size_t>(n_seeds) * n_problems);
  for (int v = 0; v < static_cast<int>(loaded.size()); ++v) {
    for (int s = 0; s < n_seeds; ++s) {
      for (int p = 0; p < n_problems; ++p) jobs.push_back({v, s, p});
    }
  }

  std::vector<EvaluationRecord> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  const auto worker = [&] {
    for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
      try {
        const Job& job = jobs[j];
        GenerateOptions go;
        go.variant = loaded[job.variant].variant;
        go.kernels = options.kernels;
        if (go.variant == ModelVariant::topodiff_guided) go.guidance = options.guidance;
        go.steps = options.steps;
        go.refine_iters =
            go.variant == ModelVariant::topodiff_ff_simp ? options.refine_iters : 0;
        go.seed = benchmark_seed(options.seeds[job.seed], job.problem);
        // The denoiser's prediction scratch is per instance, so each job
        // works on its own copy.
        const ConvDenoiser model = loaded[job.variant].model;
        results[j] = generate_and_refine(records[job.problem].problem, model,
                                         loaded[job.variant].t_train, go)
                         .refined_record;
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int n_workers =
      std::max(1, std::min(worker_count(options.workers), static_cast<int>(jobs.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  // Jobs are laid out variant-major, then seed, then problem, so each
  // (variant, seed) group is already a problem-ordered slice.
  const auto slice = [&](int v, int s) {
    const std::size_t base =
        (static_cast<std::size_t>(v) * n_seeds + s) * static_cast<std::size_t>(n_problems);
    return std::vector<EvaluationRecord>(results.begin() + base,
                                         results.begin() + base + n_problems);
  };

  std::string csv =
      "model,split,n,n_std,avg_c,avg_c_std,mdn_c,mdn_c_std,pct_ce,pct_ce_std,"
      "pct_vfe,pct_vfe_std,pct_fm,pct_fm_std,sampling_s,sampling_s_std,"
      "processing_s,processing_s_std,inference_s,inference_s_std\n";
  for (int v = 0; v < static_cast<int>(loaded.size()); ++v) {
    for (const TaskSplit& split : options.splits) {
      std::vector<SplitSummary> per_seed;
      bool empty_seed = false;
      for (int s = 0; s < n_seeds && !empty_seed; ++s) {
        try {
          per_seed.push_back(aggregate(slice(v, s), split));
        } catch (const EmptySplitError&) {
          empty_seed = true;
        }
      }
      if (empty_seed) {
        report.annotations.push_back("variant " + to_string(loaded[v].variant) + " split " +
                                     split.name + " empty after filtering; row skipped");
        continue;
      }

      const auto column = [&](auto member) {
        std::vector<double> xs;
        xs.reserve(per_seed.size());
        for (const SplitSummary& s : per_seed) xs.push_back(member(s));
        return mean_std(xs);
      };
      const std::array<MeanStd, 9> cols = {
          column([](const SplitSummary& s) { return static_cast<double>(s.n_records); }),
          column([](const SplitSummary& s) { return s.avg_compliance; }),
          column([](const SplitSummary& s) { return s.median_compliance; }),
          column([](const SplitSummary& s) { return s.avg_ce_percent; }),
          column([](const SplitSummary& s) { return s.avg_vfe_percent; }),
          column([](const SplitSummary& s) { return s.fm_percent; }),
          column([](const SplitSummary& s) { return s.avg_sampling_s; }),
          column([](const SplitSummary& s) { return s.avg_processing_s; }),
          column([](const SplitSummary& s) { return s.avg_inference_s; }),
      };
      csv += to_string(loaded[v].variant) + "," + split.name;
      for (const MeanStd& c : cols) {
        csv += ',';
        append_number(csv, c.mean);
        csv += ',';
        append_number(csv, c.std);
      }
      csv += '\n';
    }
  }
  report.summary_csv = std::move(csv);

  nlohmann::json all = nlohmann::json::array();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    nlohmann::json o;
    o["model"] = to_string(loaded[jobs[j].variant].variant);
    o["seed"] = options.seeds[jobs[j].seed];
    o["problem"] = jobs[j].problem;
    o["record"] = record_json(results[j]);
    all.push_back(std::move(o));
  }
  report.records_json = all.dump(2) + "\n";

  std::uint64_t h = kFnvBasis;
  for (const DatasetRecord& rec : records) {
    const std::string pj = rec.problem.to_json();
    h = fnv1a64_accumulate(h, pj.data(), pj.size());
    h = fnv1a64_accumulate(h, rec.optimal.values.data(),
                           rec.optimal.values.size() * sizeof(double));
  }
  const std::string data_hash = hex16(h);

  for (int v = 0; v < static_cast<int>(loaded.size()); ++v) {
    RunManifest manifest;
    manifest.variant = loaded[v].variant;
    manifest.steps = options.steps;
    manifest.refine_iters =
        loaded[v].variant == ModelVariant::topodiff_ff_simp ? options.refine_iters : 0;
    if (loaded[v].variant == ModelVariant::topodiff_guided) manifest.guidance = options.guidance;
    manifest.kernels = options.kernels;
    manifest.seeds = options.seeds;
    double proc = 0.0, samp = 0.0, inf = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
      for (int p = 0; p < n_problems; ++p) {
        const EvaluationRecord& r =
            results[(static_cast<std::size_t>(v) * n_seeds + s) * n_problems + p];
        proc += r.processing_s;
        samp += r.sampling_s;
        inf += r.inference_s;
      }
    }
    const double count = static_cast<double>(n_seeds) * n_problems;
    manifest.processing_s = proc / count;
    manifest.sampling_s = samp / count;
    manifest.inference_s = inf / count;
    manifest.checkpoint_hash = loaded[v].hash;
    manifest.dataset_hash = data_hash;
    report.manifests.push_back(std::move(manifest));
  }
  return report;
}

std::filesystem::path unique_report_path(const std::filesystem::path& dir,
                                         const std::string& stem, const std::string& ext) {
  std::filesystem::path candidate = dir / (stem + ext);
  for (int i = 1; std::filesystem::exists(candidate); ++i) {
    candidate = dir / (stem + "-" + std::to_string(i) + ext);
  }
  return candidate;
}

}  // namespace topogen
