#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinefit/pipeline.hpp"
#include "kinefit/render.hpp"
#include "kinefit/synth.hpp"

namespace kinefit {

// Overlap score 2|A and B| / (|A| + |B|); two empty masks agree perfectly
// and score 1.
double dice(const BinaryMask& pred, const BinaryMask& truth);

// curve[m-1] = mean(a[0..m)) - mean(b[0..m)) for m = 1..length.
std::vector<double> cumulative_dice_diff(const std::vector<double>& a,
                                         const std::vector<double>& b);

// Aggregate view of one sequence run. Dice and joint-error statistics cover
// the frames where ground truth is known (score >= 0) and are -1 when no
// frame has it; sd is the population standard deviation across frames; ms
// always averages over all frames.
struct RunSummary {
  std::vector<FrameResult> frames;
  int frame_count = 0;  // survives CSV round trips that drop per-frame data
  double mean_dice = -1.0;
  double sd_dice = -1.0;
  double mean_ms = 0.0;
  double mean_err_meas = -1.0;
  double mean_err_corr = -1.0;
};

RunSummary summarize_run(std::vector<FrameResult> frames);

// Canonical per-frame re-optimization baseline: no correction network, no
// regularizer, no carried state, no base refinement.
PipelineConfig baseline_config(PipelineConfig cfg);

// Module-toggle rows: "baseline"; "temporal" (carried state plus base
// refinement); "kcn" (carried network, unregularized); "kcn_reg"; "all".
const std::vector<std::string>& ablation_rows();
PipelineConfig ablation_config(const std::string& row, PipelineConfig cfg);

struct SweepPoint {
  double value = 0.0;
  std::string variant;  // "full" or "baseline"
  uint64_t seed = 0;
  RunSummary run;
};

struct SweepResult {
  std::string axis;
  std::vector<double> values;   // deduplicated, ascending
  std::vector<uint64_t> seeds;  // deduplicated, ascending
  std::vector<SweepPoint> points;  // sorted by (value, variant, seed)
};

// Per-(value, variant) statistics pooled over every seed's frames. When a
// point carries no per-frame data its stored moments are pooled instead.
struct SweepAggregate {
  double value = 0.0;
  std::string variant;
  double mean_dice = -1.0;
  double sd_dice = -1.0;
  double mean_ms = 0.0;
  int runs = 0;
};

std::vector<SweepAggregate> aggregate(const SweepResult& sweep);

// Sweeps regenerate the dataset per seed via reseed() and run the pipeline
// at each axis value. sweep_k also runs the per-frame baseline at every k;
// the value sweeps run the full configuration only. Errors from individual
// runs are annotated with the failing point. Jobs run on `workers` threads;
// results are identical for any worker count.
SweepResult sweep_k(const DatasetSpec& spec, const PipelineConfig& cfg,
                    std::vector<int> k_values, const std::vector<uint64_t>& seeds,
                    int workers = 1);

// Anchor-weight grid {0, 1, 10, 100, 1000, 10000} with the temporal weight
// pinned to 1.
SweepResult sweep_lambda1(const DatasetSpec& spec, const PipelineConfig& cfg,
                          const std::vector<uint64_t>& seeds, int workers = 1);

// Temporal-weight grid {0, 0.1, 1, 10, 100, 1000} with the anchor weight
// pinned to 10.
SweepResult sweep_lambda2(const DatasetSpec& spec, const PipelineConfig& cfg,
                          const std::vector<uint64_t>& seeds, int workers = 1);

// Measurement-window grid {1, 3, 5, 10, 20, 40}.
SweepResult sweep_window(const DatasetSpec& spec, const PipelineConfig& cfg,
                         const std::vector<uint64_t>& seeds, int workers = 1);

struct AblationCell {
  std::string row;
  int k = 0;
  uint64_t seed = 0;
  RunSummary run;
};

using AblationTable = std::vector<AblationCell>;

// One run per (row, k, seed), rows ordered as ablation_rows(), k ascending,
// seeds ascending.
AblationTable ablate(const DatasetSpec& spec, const PipelineConfig& cfg,
                     const std::vector<uint64_t>& seeds,
                     std::vector<int> k_values = {1, 3, 5, 10}, int workers = 1);

// Per-frame CSV with columns
// "frame,dice,loss_first,loss_last,joint_err_meas,joint_err_corr,ms".
// Values are printed with %.17g so doubles round-trip bitwise; an empty
// loss trace becomes nan columns.
void write_frames_csv(const std::string& path, const std::vector<FrameResult>& frames);

// Reads the scalar columns back. Corrected joints and masks are not stored;
// the loss trace comes back as {first, last} or empty when the file holds
// nan.
std::vector<FrameResult> read_frames_csv(const std::string& path);

// Canonical file name for one point's per-frame CSV inside a sweep or
// ablation output directory.
std::string sweep_point_csv_name(const std::string& axis, double value,
                                 const std::string& variant, uint64_t seed);
std::string ablation_cell_csv_name(const std::string& row, int k, uint64_t seed);

// <dir>/<axis>_sweep.csv plus per-point frame CSVs under
// <dir>/<axis>_frames/. read_sweep_outputs restores the per-frame data when
// the frame CSVs are present and keeps the stored aggregates otherwise.
void write_sweep_outputs(const std::string& dir, const SweepResult& sweep);
SweepResult read_sweep_outputs(const std::string& dir, const std::string& axis);

// <dir>/ablation.csv plus per-cell frame CSVs under <dir>/ablation_frames/.
void write_ablation_outputs(const std::string& dir, const AblationTable& table);
AblationTable read_ablation_outputs(const std::string& dir);

struct NamedRun {
  std::string name;
  RunSummary run;
};

struct ReportInputs {
  std::vector<NamedRun> runs;
  std::vector<SweepResult> sweeps;
  AblationTable ablation;
};

// Writes, into out_dir: a recomputed <axis>_sweep.csv per sweep, always an
// ablation.csv (header-only when empty), summary.txt (no wall-clock content),
// a time-versus-Dice SVG per non-empty sweep, a cumulative Dice-difference
// SVG when a sweep holds full and baseline per-frame series, and a Dice
// timeline SVG per named run. Identical inputs produce byte-identical files.
void emit_report(const ReportInputs& inputs, const std::string& out_dir);

}  // namespace kinefit
