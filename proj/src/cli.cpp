#include "topogen/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topogen/denoiser.hpp"
#include "topogen/diffusion.hpp"
#include "topogen/errors.hpp"
#include "topogen/guidance.hpp"
#include "topogen/kernels.hpp"
#include "topogen/metrics.hpp"
#include "topogen/pipeline.hpp"
#include "topogen/problem.hpp"
#include "topogen/simp.hpp"
#include "topogen/tensor_io.hpp"

namespace topogen {
namespace {

std::string fmt(const char* format, double value) {
  char buf[48];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw InvalidInputError("failed writing " + path.string());
}

// topology.tgt -> topology_trace.csv and friends.
std::filesystem::path with_suffix(const std::filesystem::path& base, const std::string& suffix,
                                  const std::string& ext) {
  std::filesystem::path out = base;
  out.replace_extension();
  out += suffix;
  out += ext;
  return out;
}

struct ProblemOpts {
  std::string problem_path;
  int nelx = 16;
  int nely = 16;
  double vf = 0.4;
};

void add_problem_flags(CLI::App* cmd, ProblemOpts& o) {
  cmd->add_option("--problem", o.problem_path, "problem spec JSON; overrides the cantilever flags");
  cmd->add_option("--nelx", o.nelx, "cantilever grid width")->check(CLI::PositiveNumber);
  cmd->add_option("--nely", o.nely, "cantilever grid height")->check(CLI::PositiveNumber);
  cmd->add_option("--vf", o.vf, "cantilever volume fraction");
}

ProblemSpec resolve_problem(const ProblemOpts& o) {
  if (!o.problem_path.empty()) return ProblemSpec::load(o.problem_path);
  return ProblemSpec::cantilever(o.nelx, o.nely, o.vf);
}

struct KernelOpts {
  std::string kernel = "green_exp";
  double alpha = 10.0;
  double beta = 2.0;
};

void add_kernel_flags(CLI::App* cmd, KernelOpts& o) {
  cmd->add_option("--kernel", o.kernel, "distance kernel for the conditioning channels")
      ->check(CLI::IsMember({"green_exp", "inv_r", "inv_r2", "inv_r4", "inv_r_beta"}));
  cmd->add_option("--alpha", o.alpha, "green_exp decay length");
  cmd->add_option("--beta", o.beta, "inv_r_beta exponent");
}

KernelParams resolve_kernels(const KernelOpts& o) {
  KernelParams params;
  params.variant = kernel_variant_from_string(o.kernel);
  params.alpha = o.alpha;
  params.beta = o.beta;
  return params;
}

void add_variant_flag(CLI::App* cmd, std::string& variant) {
  cmd->add_option("--variant", variant, "model variant")
      ->check(CLI::IsMember({"topodiff", "topodiff-guided", "topodiff-ff", "topodiff-ff-simp"}));
}

struct GuidanceOpts {
  double scale_c = 0.0;
  double scale_fm = 0.0;
  std::string external;
};

void add_guidance_flags(CLI::App* cmd, GuidanceOpts& o) {
  cmd->add_option("--scale-c", o.scale_c, "compliance guidance strength; 0 disables");
  cmd->add_option("--scale-fm", o.scale_fm, "floating material guidance strength; 0 disables");
  cmd->add_option("--guidance-file", o.external,
                  "archive with precomputed g_c/g_fm instead of the oracles");
}

GuidanceConfig resolve_guidance(const GuidanceOpts& o) {
  GuidanceConfig config;
  const bool external = !o.external.empty();
  if (external) config.external_path = o.external;
  if (o.scale_c != 0.0) {
    config.compliance = external ? GuidanceKind::external : GuidanceKind::compliance_oracle;
    config.scale_c = o.scale_c;
  }
  if (o.scale_fm != 0.0) {
    config.floating = external ? GuidanceKind::external : GuidanceKind::fm_oracle;
    config.scale_fm = o.scale_fm;
  }
  return config;
}

struct OptimizeOpts {
  ProblemOpts problem;
  int iters = 60;
  std::string out = "topology.tgt";
};

int cmd_optimize(const OptimizeOpts& o) {
  const ProblemSpec problem = resolve_problem(o.problem);
  SimpConfig config;
  config.vf_target = problem.vf_target;
  config.max_iters = o.iters;
  const OptimizationTrace trace =
      run_simp(problem, config, DensityField::uniform(problem.grid, problem.vf_target));

  TensorArchive archive;
  add_density(archive, "topology", trace.final_density);
  add_density(archive, "binarized", quantile_binarize(trace.final_density, problem.vf_target));
  archive.add_text("problem", problem.to_json());
  archive.save(o.out);

  std::ostringstream csv;
  csv << "iter,compliance,max_change\n";
  for (std::size_t i = 0; i < trace.compliances.size(); ++i) {
    char row[96];
    std::snprintf(row, sizeof row, "%zu,%.17g,%.17g\n", i + 1, trace.compliances[i],
                  trace.max_changes[i]);
    csv << row;
  }
  const auto trace_path = with_suffix(o.out, "_trace", ".csv");
  write_text(trace_path, csv.str());

  std::cout << "optimize: " << trace.compliances.size() << " iterations, final compliance "
            << fmt("%.6g", trace.compliances.back()) << ", wrote " << o.out << " and "
            << trace_path.string() << "\n";
  return 0;
}

struct KernelsOpts {
  ProblemOpts problem;
  std::string variant = "topodiff-ff";
  KernelOpts kernels;
  std::string out = "stack.tgt";
};

int cmd_kernels(const KernelsOpts& o) {
  const ProblemSpec problem = resolve_problem(o.problem);
  const ModelVariant variant = model_variant_from_string(o.variant);
  std::optional<FieldPair> fields;
  if (variant_requires_fields(variant)) fields = problem_fields(problem);
  const ConditioningStack stack = build_stack(problem, variant, fields, resolve_kernels(o.kernels));

  TensorArchive archive;
  for (const NamedChannel& channel : stack.channels) {
    archive.add_f64(channel.name,
                    {static_cast<std::uint64_t>(problem.grid.nelx),
                     static_cast<std::uint64_t>(problem.grid.nely)},
                    channel.values);
  }
  archive.add_text("problem", problem.to_json());
  archive.save(o.out);
  std::cout << "kernels: wrote " << stack.channels.size() << " channels to " << o.out << "\n";
  return 0;
}

struct TrainOpts {
  std::string dataset;
  std::string variant = "topodiff-ff";
  KernelOpts kernels;
  int steps = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int width = 8;
  int t_train = 1000;
  std::string out = "checkpoint.tgt";
};

int cmd_train(const TrainOpts& o) {
  const auto records = load_dataset(o.dataset);
  if (records.empty()) throw InvalidInputError("dataset " + o.dataset + " has no records");
  const ModelVariant variant = model_variant_from_string(o.variant);
  const auto samples = make_training_set(records, variant, resolve_kernels(o.kernels));

  const int cond = static_cast<int>(samples.front().conditioning.channels.size());
  ConvDenoiser model(cond, o.width, o.seed);
  TrainConfig config;
  config.steps = o.steps;
  config.learning_rate = o.lr;
  config.seed = o.seed;
  const TrainResult result = train(model, samples, make_schedule(o.t_train), config);
  model.save_checkpoint(o.out, o.t_train);

  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    char row[64];
    std::snprintf(row, sizeof row, "%zu,%.17g\n", i + 1, result.loss_curve[i]);
    csv << row;
  }
  write_text(with_suffix(o.out, "_loss", ".csv"), csv.str());

  // Head/tail means smooth the single-sample loss noise.
  const std::size_t head = std::min<std::size_t>(25, result.loss_curve.size());
  const std::size_t tail = std::min<std::size_t>(100, result.loss_curve.size());
  double head_mean = 0.0;
  for (std::size_t i = 0; i < head; ++i) head_mean += result.loss_curve[i];
  head_mean /= static_cast<double>(head);
  double tail_mean = 0.0;
  for (std::size_t i = result.loss_curve.size() - tail; i < result.loss_curve.size(); ++i) {
    tail_mean += result.loss_curve[i];
  }
  tail_mean /= static_cast<double>(tail);

  std::cout << "train: " << samples.size() << " samples, " << o.steps << " steps, loss "
            << fmt("%.6g", head_mean) << " -> " << fmt("%.6g", tail_mean) << ", wrote " << o.out
            << "\n";
  return 0;
}

struct SampleOpts {
  ProblemOpts problem;
  std::string variant = "topodiff-ff";
  KernelOpts kernels;
  GuidanceOpts guidance;
  std::string checkpoint;
  int steps = 100;
  int refine_iters = 0;
  std::uint64_t seed = 0;
  int t_train = 1000;
  int width = 8;
  std::string out = "sample.tgt";
};

int cmd_sample(const SampleOpts& o) {
  ProblemSpec problem = resolve_problem(o.problem);
  const ModelVariant variant = model_variant_from_string(o.variant);
  const KernelParams kernels = resolve_kernels(o.kernels);

  // Evaluation needs the reference optimum; problems from dataset sidecars
  // already carry it.
  if (!problem.optimal_compliance.has_value()) {
    std::cerr << "note: computing a reference optimum for evaluation\n";
    problem.optimal_compliance = optimize_reference(problem).compliance;
  }

  GenerateOptions options;
  options.variant = variant;
  options.kernels = kernels;
  options.guidance = resolve_guidance(o.guidance);
  options.steps = o.steps;
  options.refine_iters = o.refine_iters;
  options.seed = o.seed;

  int t_train = o.t_train;
  std::string checkpoint_hash;
  std::optional<ConvDenoiser> model;
  if (!o.checkpoint.empty()) {
    auto [loaded, loaded_t] = ConvDenoiser::load_checkpoint(o.checkpoint);
    model.emplace(std::move(loaded));
    t_train = loaded_t;
    checkpoint_hash = file_hash(o.checkpoint);
  } else {
    std::cerr << "note: no checkpoint given, sampling with untrained weights\n";
    std::optional<FieldPair> fields;
    if (variant_requires_fields(variant)) fields = problem_fields(problem);
    const ConditioningStack stack = build_stack(problem, variant, fields, kernels);
    model.emplace(static_cast<int>(stack.channels.size()), o.width, 0);
    checkpoint_hash = "untrained:width=" + std::to_string(o.width) + ",seed=0";
  }

  const GenerateResult result = generate_and_refine(problem, *model, t_train, options);

  TensorArchive archive;
  add_density(archive, "topology", result.raw);
  if (o.refine_iters > 0) add_density(archive, "refined", result.refined);
  archive.add_text("problem", problem.to_json());
  archive.save(o.out);

  RunManifest manifest;
  manifest.variant = variant;
  manifest.steps = o.steps;
  manifest.refine_iters = o.refine_iters;
  manifest.guidance = options.guidance;
  manifest.kernels = kernels;
  manifest.seeds = {o.seed};
  manifest.processing_s = result.processing_s;
  manifest.sampling_s = result.sampling_s;
  manifest.inference_s = result.processing_s + result.sampling_s;
  manifest.checkpoint_hash = checkpoint_hash;
  const auto manifest_path = with_suffix(o.out, "_manifest", ".json");
  write_text(manifest_path, manifest.to_json());

  std::cout << "sample: raw compliance " << fmt("%.6g", result.raw_record.compliance) << " (CE "
            << fmt("%.4g", result.raw_record.ce_percent) << "%)";
  if (o.refine_iters > 0) {
    std::cout << ", refined " << fmt("%.6g", result.refined_record.compliance) << " (CE "
              << fmt("%.4g", result.refined_record.ce_percent) << "%)";
    if (!result.refine_ok) std::cout << " [refine failed, raw kept]";
  }
  std::cout << ", wrote " << o.out << " and " << manifest_path.string() << "\n";
  return 0;
}

struct RefineOpts {
  std::string in;
  int iters = 10;
  std::string problem_path;
  double vf = 0.4;
  std::string out;
};

int cmd_refine(const RefineOpts& o) {
  const TensorArchive archive = TensorArchive::load(o.in);
  const DensityField topology = read_density(archive, "topology");

  ProblemSpec problem;
  if (!o.problem_path.empty()) {
    problem = ProblemSpec::load(o.problem_path);
  } else if (archive.contains("problem")) {
    problem = ProblemSpec::from_json(archive.text("problem"), o.in);
  } else {
    problem = ProblemSpec::cantilever(topology.grid.nelx, topology.grid.nely, o.vf);
  }

  const OptimizationTrace trace = refine(topology, problem, o.iters);
  const std::filesystem::path out_path =
      o.out.empty() ? with_suffix(o.in, "_refined", ".tgt") : std::filesystem::path(o.out);

  TensorArchive refined;
  add_density(refined, "topology", trace.final_density);
  refined.add_text("problem", problem.to_json());
  refined.save(out_path);

  std::cout << "refine: " << o.iters << " iterations, compliance "
            << fmt("%.6g", trace.compliances.back()) << ", wrote " << out_path.string() << "\n";
  return 0;
}

struct EvaluateOpts {
  std::string in;
  std::string problem_path;
  bool refined = false;
  std::string out;
};

int cmd_evaluate(const EvaluateOpts& o) {
  const TensorArchive archive = TensorArchive::load(o.in);
  const std::string tensor = o.refined ? "refined" : "topology";
  const DensityField topology = read_density(archive, tensor);

  ProblemSpec problem;
  if (!o.problem_path.empty()) {
    problem = ProblemSpec::load(o.problem_path);
  } else if (archive.contains("problem")) {
    problem = ProblemSpec::from_json(archive.text("problem"), o.in);
  } else {
    throw InvalidInputError("evaluate needs --problem or an embedded problem record");
  }

  const EvaluationRecord record = evaluate_topology(topology, problem, 0.0, 0.0);
  const nlohmann::json report{
      {"compliance", record.compliance}, {"compliance_opt", record.compliance_opt},
      {"ce_percent", record.ce_percent}, {"vfe_percent", record.vfe_percent},
      {"fm", record.fm},                 {"ld", record.ld},
  };
  const std::string text = report.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
    std::cout << "evaluate: wrote " << o.out << "\n";
  }
  return 0;
}

struct BenchmarkOpts {
  std::string dataset;
  std::vector<std::string> variants{"topodiff-ff"};
  std::vector<std::string> splits{"task-1", "task-2", "task-3"};
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> checkpoints;
  KernelOpts kernels;
  GuidanceOpts guidance;
  int steps = 100;
  int refine_iters = 10;
  int workers = 0;
  std::string out = "reports";
};

int cmd_benchmark(const BenchmarkOpts& o) {
  const auto records = load_dataset(o.dataset);
  if (records.empty()) throw InvalidInputError("dataset " + o.dataset + " has no records");

  BenchmarkOptions options;
  for (const std::string& name : o.variants) {
    options.variants.push_back(model_variant_from_string(name));
  }
  for (const std::string& name : o.splits) options.splits.push_back(TaskSplit::by_name(name));
  options.seeds = o.seeds;
  for (const std::string& entry : o.checkpoints) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw InvalidConfigError("checkpoint must look like variant=path, got " + entry);
    }
    options.checkpoints[model_variant_from_string(entry.substr(0, eq))] = entry.substr(eq + 1);
  }
  options.kernels = resolve_kernels(o.kernels);
  options.guidance = resolve_guidance(o.guidance);
  options.steps = o.steps;
  options.refine_iters = o.refine_iters;
  options.workers = o.workers;

  const BenchmarkReport report = run_benchmark(records, options);

  std::filesystem::create_directories(o.out);
  const auto summary_path = unique_report_path(o.out, "summary", ".csv");
  write_text(summary_path, report.summary_csv);
  const auto records_path = unique_report_path(o.out, "records", ".json");
  write_text(records_path, report.records_json);
  for (const RunManifest& manifest : report.manifests) {
    write_text(unique_report_path(o.out, "manifest_" + to_string(manifest.variant), ".json"),
               manifest.to_json());
  }
  if (!report.annotations.empty()) {
    std::string notes;
    for (const std::string& note : report.annotations) {
      notes += note + "\n";
      std::cerr << "note: " << note << "\n";
    }
    write_text(unique_report_path(o.out, "annotations", ".txt"), notes);
  }
  std::cout << "benchmark: wrote " << summary_path.string() << " and " << records_path.string()
            << "\n";
  return 0;
}

struct SynthOpts {
  int count = 50;
  int nelx = 16;
  int nely = 16;
  std::uint64_t seed = 0;
  bool ood = false;
  int simp_iters = 60;
  std::string out = "dataset";
};

int cmd_dataset_synth(const SynthOpts& o) {
  SynthConfig config;
  config.count = o.count;
  config.nelx = o.nelx;
  config.nely = o.nely;
  config.seed = o.seed;
  config.ood = o.ood;
  config.simp_iters = o.simp_iters;
  const auto records = synth_dataset(config);
  save_dataset(o.out, records);
  std::cout << "dataset synth: wrote " << records.size() << " records to " << o.out << " (hash "
            << dataset_hash(o.out) << ")\n";
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"diffusion topology generation with distance kernel conditioning"};
  app.require_subcommand(0, 1);

  std::function<int()> action;

  OptimizeOpts optimize_opts;
  auto* optimize = app.add_subcommand("optimize", "run the full density optimizer");
  add_problem_flags(optimize, optimize_opts.problem);
  optimize->add_option("--iters", optimize_opts.iters, "optimizer iterations")
      ->check(CLI::PositiveNumber);
  optimize->add_option("--out", optimize_opts.out, "topology archive path");
  optimize->callback([&] { action = [&] { return cmd_optimize(optimize_opts); }; });

  KernelsOpts kernels_opts;
  auto* kernels = app.add_subcommand("kernels", "emit the conditioning stack for a problem");
  add_problem_flags(kernels, kernels_opts.problem);
  add_variant_flag(kernels, kernels_opts.variant);
  add_kernel_flags(kernels, kernels_opts.kernels);
  kernels->add_option("--out", kernels_opts.out, "stack archive path");
  kernels->callback([&] { action = [&] { return cmd_kernels(kernels_opts); }; });

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a denoiser on a dataset");
  train_cmd->add_option("--dataset", train_opts.dataset, "dataset directory")->required();
  add_variant_flag(train_cmd, train_opts.variant);
  add_kernel_flags(train_cmd, train_opts.kernels);
  train_cmd->add_option("--steps", train_opts.steps, "training steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_opts.lr, "Adam learning rate");
  train_cmd->add_option("--seed", train_opts.seed, "init and shuffle seed");
  train_cmd->add_option("--width", train_opts.width, "hidden channels")->check(CLI::PositiveNumber);
  train_cmd->add_option("--t-train", train_opts.t_train, "schedule length")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", train_opts.out, "checkpoint path");
  train_cmd->callback([&] { action = [&] { return cmd_train(train_opts); }; });

  SampleOpts sample_opts;
  auto* sample_cmd = app.add_subcommand("sample", "generate a topology with the reverse chain");
  add_problem_flags(sample_cmd, sample_opts.problem);
  add_variant_flag(sample_cmd, sample_opts.variant);
  add_kernel_flags(sample_cmd, sample_opts.kernels);
  add_guidance_flags(sample_cmd, sample_opts.guidance);
  sample_cmd->add_option("--checkpoint", sample_opts.checkpoint,
                         "trained checkpoint; untrained fallback weights when omitted");
  sample_cmd->add_option("--steps", sample_opts.steps, "reverse steps")
      ->check(CLI::PositiveNumber);
  sample_cmd->add_option("--refine-iters", sample_opts.refine_iters,
                         "optimizer iterations on the sample");
  sample_cmd->add_option("--seed", sample_opts.seed, "chain seed");
  sample_cmd->add_option("--t-train", sample_opts.t_train,
                         "schedule length for the untrained fallback")
      ->check(CLI::PositiveNumber);
  sample_cmd->add_option("--width", sample_opts.width, "untrained fallback hidden channels")
      ->check(CLI::PositiveNumber);
  sample_cmd->add_option("--out", sample_opts.out, "sample archive path");
  sample_cmd->callback([&] { action = [&] { return cmd_sample(sample_opts); }; });

  RefineOpts refine_opts;
  auto* refine_cmd = app.add_subcommand("refine", "polish a topology with optimizer iterations");
  refine_cmd->add_option("--in", refine_opts.in, "topology archive")->required();
  refine_cmd->add_option("--iters", refine_opts.iters, "optimizer iterations")
      ->check(CLI::PositiveNumber);
  refine_cmd->add_option("--problem", refine_opts.problem_path,
                         "problem spec JSON; default is the archive's embedded problem");
  refine_cmd->add_option("--vf", refine_opts.vf, "volume fraction when no problem is available");
  refine_cmd->add_option("--out", refine_opts.out, "output path; default <in>_refined.tgt");
  refine_cmd->callback([&] { action = [&] { return cmd_refine(refine_opts); }; });

  EvaluateOpts evaluate_opts;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "measure a topology against its problem");
  evaluate_cmd->add_option("--in", evaluate_opts.in, "topology archive")->required();
  evaluate_cmd->add_option("--problem", evaluate_opts.problem_path,
                           "problem spec JSON; default is the archive's embedded problem");
  evaluate_cmd->add_flag("--refined", evaluate_opts.refined, "evaluate the refined tensor");
  evaluate_cmd->add_option("--out", evaluate_opts.out, "write the record here instead of stdout");
  evaluate_cmd->callback([&] { action = [&] { return cmd_evaluate(evaluate_opts); }; });

  BenchmarkOpts benchmark_opts;
  auto* benchmark_cmd = app.add_subcommand("benchmark", "run variants over a dataset and report");
  benchmark_cmd->add_option("--dataset", benchmark_opts.dataset, "dataset directory")->required();
  benchmark_cmd
      ->add_option("--variants", benchmark_opts.variants, "model variants to benchmark")
      ->delimiter(',')
      ->check(CLI::IsMember({"topodiff", "topodiff-guided", "topodiff-ff", "topodiff-ff-simp"}));
  benchmark_cmd->add_option("--splits", benchmark_opts.splits, "evaluation splits")
      ->delimiter(',')
      ->check(CLI::IsMember({"task-1", "task-2", "task-3"}));
  benchmark_cmd->add_option("--seeds", benchmark_opts.seeds, "run seeds to average over")
      ->delimiter(',');
  benchmark_cmd->add_option("--checkpoint", benchmark_opts.checkpoints,
                            "variant=path checkpoint assignment, repeatable");
  add_kernel_flags(benchmark_cmd, benchmark_opts.kernels);
  add_guidance_flags(benchmark_cmd, benchmark_opts.guidance);
  benchmark_cmd->add_option("--steps", benchmark_opts.steps, "reverse steps")
      ->check(CLI::PositiveNumber);
  benchmark_cmd->add_option("--refine-iters", benchmark_opts.refine_iters,
                            "optimizer iterations for topodiff-ff-simp rows");
  benchmark_cmd->add_option("--workers", benchmark_opts.workers,
                            "worker threads; 0 reads TOPOGEN_WORKERS then the hardware count");
  benchmark_cmd->add_option("--out", benchmark_opts.out, "report directory");
  benchmark_cmd->callback([&] { action = [&] { return cmd_benchmark(benchmark_opts); }; });

  auto* dataset_cmd = app.add_subcommand("dataset", "dataset utilities");
  dataset_cmd->require_subcommand(1);
  SynthOpts synth_opts;
  auto* synth_cmd =
      dataset_cmd->add_subcommand("synth", "generate problems and optimizer references");
  synth_cmd->add_option("--count", synth_opts.count, "number of records")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--nelx", synth_opts.nelx, "grid width")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--nely", synth_opts.nely, "grid height")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_opts.seed, "generator seed");
  synth_cmd->add_flag("--ood", synth_opts.ood, "out-of-distribution generator ranges");
  synth_cmd->add_option("--simp-iters", synth_opts.simp_iters, "reference optimizer iterations")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", synth_opts.out, "dataset directory")->required();
  synth_cmd->callback([&] { action = [&] { return cmd_dataset_synth(synth_opts); }; });

  // CLI11 consumes the vector back to front.
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (!action) {
    std::cerr << app.help();
    return 1;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace topogen
