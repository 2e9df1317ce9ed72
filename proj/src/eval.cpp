#include "kinefit/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <thread>
#include <utility>

namespace fs = std::filesystem;

namespace kinefit {

double dice(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.height != truth.height || pred.width != truth.width)
    throw std::invalid_argument("dice: mask sizes differ");
  long long inter = 0, total = 0;
  for (size_t i = 0; i < pred.on.size(); ++i) {
    inter += (pred.on[i] && truth.on[i]) ? 1 : 0;
    total += (pred.on[i] ? 1 : 0) + (truth.on[i] ? 1 : 0);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

std::vector<double> cumulative_dice_diff(const std::vector<double>& a,
                                         const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cumulative_dice_diff: series lengths differ");
  std::vector<double> curve(a.size());
  double sum_a = 0.0, sum_b = 0.0;
  for (size_t m = 0; m < a.size(); ++m) {
    sum_a += a[m];
    sum_b += b[m];
    const double count = static_cast<double>(m + 1);
    curve[m] = sum_a / count - sum_b / count;
  }
  return curve;
}

RunSummary summarize_run(std::vector<FrameResult> frames) {
  RunSummary s;
  s.frames = std::move(frames);
  s.frame_count = static_cast<int>(s.frames.size());
  if (s.frames.empty()) return s;

  double ms = 0.0;
  for (const auto& f : s.frames) ms += f.ms;
  s.mean_ms = ms / static_cast<double>(s.frames.size());

  double dice_sum = 0.0;
  int dice_n = 0;
  for (const auto& f : s.frames)
    if (f.dice >= 0.0) {
      dice_sum += f.dice;
      ++dice_n;
    }
  if (dice_n > 0) {
    s.mean_dice = dice_sum / dice_n;
    double sq = 0.0;
    for (const auto& f : s.frames)
      if (f.dice >= 0.0) sq += (f.dice - s.mean_dice) * (f.dice - s.mean_dice);
    s.sd_dice = std::sqrt(sq / dice_n);
  }

  double em = 0.0, ec = 0.0;
  int err_n = 0;
  for (const auto& f : s.frames)
    if (f.joint_err_meas >= 0.0 && f.joint_err_corr >= 0.0) {
      em += f.joint_err_meas;
      ec += f.joint_err_corr;
      ++err_n;
    }
  if (err_n > 0) {
    s.mean_err_meas = em / err_n;
    s.mean_err_corr = ec / err_n;
  }
  return s;
}

PipelineConfig baseline_config(PipelineConfig cfg) {
  return ablation_config("baseline", std::move(cfg));
}

const std::vector<std::string>& ablation_rows() {
  static const std::vector<std::string> rows{"baseline", "temporal", "kcn", "kcn_reg", "all"};
  return rows;
}

PipelineConfig ablation_config(const std::string& row, PipelineConfig cfg) {
  if (row == "baseline") {
    cfg.use_kcn = false;
    cfg.use_reg = false;
    cfg.carry_state = false;
    cfg.optimize_base = false;
  } else if (row == "temporal") {
    cfg.use_kcn = false;
    cfg.use_reg = false;
    cfg.carry_state = true;
    cfg.optimize_base = true;
  } else if (row == "kcn") {
    cfg.use_kcn = true;
    cfg.use_reg = false;
    cfg.carry_state = true;
    cfg.optimize_base = false;
  } else if (row == "kcn_reg") {
    cfg.use_kcn = true;
    cfg.use_reg = true;
    cfg.carry_state = true;
    cfg.optimize_base = false;
  } else if (row == "all") {
    cfg.use_kcn = true;
    cfg.use_reg = true;
    cfg.carry_state = true;
    cfg.optimize_base = true;
  } else {
    throw std::invalid_argument("ablation: unknown row '" + row + "'");
  }
  return cfg;
}

namespace {

std::string fmt_exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& field, const std::string& context) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin) throw std::runtime_error(context + ": bad number '" + field + "'");
  return v;
}

long long parse_int(const std::string& field, const std::string& context) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin) throw std::runtime_error(context + ": bad integer '" + field + "'");
  return v;
}

struct GridJob {
  double value = 0.0;
  std::string variant;
  uint64_t seed = 0;
  std::string label;
  PipelineConfig cfg;
  const Dataset* dataset = nullptr;
};

std::vector<RunSummary> run_grid(const std::vector<GridJob>& jobs, int workers) {
  std::vector<RunSummary> out(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        out[i] = summarize_run(
            run_sequence(jobs[i].dataset->scene, jobs[i].dataset->data, jobs[i].cfg));
      } catch (const std::exception& e) {
        errors[i] =
            std::make_exception_ptr(std::runtime_error(jobs[i].label + ": " + e.what()));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int count =
      std::max(1, std::min(workers, static_cast<int>(jobs.size())));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

std::vector<uint64_t> sorted_seeds(std::vector<uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("sweep: seeds must not be empty");
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  return seeds;
}

std::map<uint64_t, Dataset> datasets_for(const DatasetSpec& spec,
                                         const std::vector<uint64_t>& seeds) {
  std::map<uint64_t, Dataset> sets;
  for (uint64_t seed : seeds) sets.emplace(seed, generate_dataset(reseed(spec, seed)));
  return sets;
}

SweepResult collect_points(const std::string& axis, std::vector<GridJob> jobs,
                           const std::vector<double>& values,
                           const std::vector<uint64_t>& seeds, int workers) {
  auto runs = run_grid(jobs, workers);
  SweepResult result;
  result.axis = axis;
  result.values = values;
  result.seeds = seeds;
  result.points.reserve(jobs.size());
  for (size_t i = 0; i < jobs.size(); ++i) {
    SweepPoint point;
    point.value = jobs[i].value;
    point.variant = std::move(jobs[i].variant);
    point.seed = jobs[i].seed;
    point.run = std::move(runs[i]);
    result.points.push_back(std::move(point));
  }
  return result;
}

SweepResult sweep_values(const DatasetSpec& spec, const PipelineConfig& cfg,
                         const std::string& axis, const std::vector<double>& values,
                         const std::function<void(PipelineConfig&, double)>& apply,
                         const std::vector<uint64_t>& seeds, int workers) {
  const auto seed_list = sorted_seeds(seeds);
  const auto sets = datasets_for(spec, seed_list);
  std::vector<GridJob> jobs;
  for (double value : values)
    for (uint64_t seed : seed_list) {
      GridJob job;
      job.value = value;
      job.variant = "full";
      job.seed = seed;
      job.cfg = cfg;
      apply(job.cfg, value);
      job.dataset = &sets.at(seed);
      job.label = axis + "=" + fmt_short(value) + " seed=" + std::to_string(seed);
      jobs.push_back(std::move(job));
    }
  return collect_points(axis, std::move(jobs), values, seed_list, workers);
}

// Pooled population statistics reconstructed from per-run moments, weighting
// each run by its frame count.
struct PooledStats {
  double mean_dice = -1.0;
  double sd_dice = -1.0;
  double mean_ms = 0.0;
  int runs = 0;
};

PooledStats pool_runs(const std::vector<const RunSummary*>& group) {
  PooledStats stats;
  stats.runs = static_cast<int>(group.size());
  double dice_n = 0.0, dice_sum = 0.0, dice_sq = 0.0;
  double ms_n = 0.0, ms_sum = 0.0;
  for (const RunSummary* run : group) {
    const double n = run->frames.empty() ? static_cast<double>(run->frame_count)
                                         : static_cast<double>(run->frames.size());
    if (run->mean_dice >= 0.0 && n > 0) {
      dice_n += n;
      dice_sum += n * run->mean_dice;
      dice_sq += n * (run->sd_dice * run->sd_dice + run->mean_dice * run->mean_dice);
    }
    if (n > 0) {
      ms_n += n;
      ms_sum += n * run->mean_ms;
    }
  }
  if (dice_n > 0) {
    stats.mean_dice = dice_sum / dice_n;
    stats.sd_dice = std::sqrt(std::max(0.0, dice_sq / dice_n - stats.mean_dice * stats.mean_dice));
  }
  if (ms_n > 0) stats.mean_ms = ms_sum / ms_n;
  return stats;
}

}  // namespace

std::vector<SweepAggregate> aggregate(const SweepResult& sweep) {
  std::vector<SweepAggregate> out;
  std::vector<std::pair<double, std::string>> groups;
  for (const auto& p : sweep.points) {
    const std::pair<double, std::string> key{p.value, p.variant};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  for (const auto& key : groups) {
    std::vector<const RunSummary*> runs;
    for (const auto& p : sweep.points)
      if (p.value == key.first && p.variant == key.second) runs.push_back(&p.run);
    const PooledStats stats = pool_runs(runs);
    SweepAggregate agg;
    agg.value = key.first;
    agg.variant = key.second;
    agg.mean_dice = stats.mean_dice;
    agg.sd_dice = stats.sd_dice;
    agg.mean_ms = stats.mean_ms;
    agg.runs = stats.runs;
    out.push_back(std::move(agg));
  }
  return out;
}

SweepResult sweep_k(const DatasetSpec& spec, const PipelineConfig& cfg,
                    std::vector<int> k_values, const std::vector<uint64_t>& seeds,
                    int workers) {
  if (k_values.empty()) throw std::invalid_argument("sweep: k values must not be empty");
  for (int k : k_values)
    if (k < 0) throw std::invalid_argument("sweep: k must be >= 0");
  std::sort(k_values.begin(), k_values.end());
  k_values.erase(std::unique(k_values.begin(), k_values.end()), k_values.end());

  const auto seed_list = sorted_seeds(seeds);
  const auto sets = datasets_for(spec, seed_list);
  std::vector<double> values(k_values.begin(), k_values.end());
  std::vector<GridJob> jobs;
  for (int k : k_values)
    for (const char* variant : {"full", "baseline"})
      for (uint64_t seed : seed_list) {
        GridJob job;
        job.value = k;
        job.variant = variant;
        job.seed = seed;
        job.cfg = std::string(variant) == "full" ? cfg : baseline_config(cfg);
        job.cfg.k = k;
        job.dataset = &sets.at(seed);
        job.label =
            "k=" + std::to_string(k) + " " + variant + " seed=" + std::to_string(seed);
        jobs.push_back(std::move(job));
      }
  return collect_points("k", std::move(jobs), values, seed_list, workers);
}

SweepResult sweep_lambda1(const DatasetSpec& spec, const PipelineConfig& cfg,
                          const std::vector<uint64_t>& seeds, int workers) {
  return sweep_values(spec, cfg, "lambda1", {0, 1, 10, 100, 1000, 10000},
                      [](PipelineConfig& c, double v) {
                        c.reg.lambda1 = v;
                        c.reg.lambda2 = 1.0;
                      },
                      seeds, workers);
}

SweepResult sweep_lambda2(const DatasetSpec& spec, const PipelineConfig& cfg,
                          const std::vector<uint64_t>& seeds, int workers) {
  return sweep_values(spec, cfg, "lambda2", {0, 0.1, 1, 10, 100, 1000},
                      [](PipelineConfig& c, double v) {
                        c.reg.lambda1 = 10.0;
                        c.reg.lambda2 = v;
                      },
                      seeds, workers);
}

SweepResult sweep_window(const DatasetSpec& spec, const PipelineConfig& cfg,
                         const std::vector<uint64_t>& seeds, int workers) {
  return sweep_values(spec, cfg, "window", {1, 3, 5, 10, 20, 40},
                      [](PipelineConfig& c, double v) { c.window = static_cast<int>(v); },
                      seeds, workers);
}

AblationTable ablate(const DatasetSpec& spec, const PipelineConfig& cfg,
                     const std::vector<uint64_t>& seeds, std::vector<int> k_values,
                     int workers) {
  if (k_values.empty()) throw std::invalid_argument("ablate: k values must not be empty");
  for (int k : k_values)
    if (k < 0) throw std::invalid_argument("ablate: k must be >= 0");
  std::sort(k_values.begin(), k_values.end());
  k_values.erase(std::unique(k_values.begin(), k_values.end()), k_values.end());

  const auto seed_list = sorted_seeds(seeds);
  const auto sets = datasets_for(spec, seed_list);
  std::vector<GridJob> jobs;
  for (const std::string& row : ablation_rows())
    for (int k : k_values)
      for (uint64_t seed : seed_list) {
        GridJob job;
        job.value = k;
        job.variant = row;
        job.seed = seed;
        job.cfg = ablation_config(row, cfg);
        job.cfg.k = k;
        job.dataset = &sets.at(seed);
        job.label = row + " k=" + std::to_string(k) + " seed=" + std::to_string(seed);
        jobs.push_back(std::move(job));
      }

  auto runs = run_grid(jobs, workers);
  AblationTable table;
  table.reserve(jobs.size());
  for (size_t i = 0; i < jobs.size(); ++i) {
    AblationCell cell;
    cell.row = std::move(jobs[i].variant);
    cell.k = static_cast<int>(jobs[i].value);
    cell.seed = jobs[i].seed;
    cell.run = std::move(runs[i]);
    table.push_back(std::move(cell));
  }
  return table;
}

namespace {

constexpr const char* kFramesHeader =
    "frame,dice,loss_first,loss_last,joint_err_meas,joint_err_corr,ms";
constexpr const char* kSweepHeader =
    "axis,value,variant,seed,frames,mean_dice,sd_dice,mean_ms,mean_err_meas,mean_err_corr";
constexpr const char* kAblationHeader =
    "row,k,seed,frames,mean_dice,sd_dice,mean_ms,mean_err_meas,mean_err_corr";

std::string frames_csv_text(const std::vector<FrameResult>& frames) {
  std::string text = std::string(kFramesHeader) + "\n";
  for (const auto& f : frames) {
    const double first = f.loss_trace.empty() ? std::nan("") : f.loss_trace.front();
    const double last = f.loss_trace.empty() ? std::nan("") : f.loss_trace.back();
    text += std::to_string(f.frame) + "," + fmt_exact(f.dice) + "," + fmt_exact(first) + "," +
            fmt_exact(last) + "," + fmt_exact(f.joint_err_meas) + "," +
            fmt_exact(f.joint_err_corr) + "," + fmt_exact(f.ms) + "\n";
  }
  return text;
}

std::string sweep_csv_text(const SweepResult& sweep) {
  std::string text = std::string(kSweepHeader) + "\n";
  for (const auto& p : sweep.points) {
    const int count =
        p.run.frames.empty() ? p.run.frame_count : static_cast<int>(p.run.frames.size());
    text += sweep.axis + "," + fmt_exact(p.value) + "," + p.variant + "," +
            std::to_string(p.seed) + "," + std::to_string(count) + "," +
            fmt_exact(p.run.mean_dice) + "," + fmt_exact(p.run.sd_dice) + "," +
            fmt_exact(p.run.mean_ms) + "," + fmt_exact(p.run.mean_err_meas) + "," +
            fmt_exact(p.run.mean_err_corr) + "\n";
  }
  return text;
}

std::string ablation_csv_text(const AblationTable& table) {
  std::string text = std::string(kAblationHeader) + "\n";
  for (const auto& cell : table) {
    const int count = cell.run.frames.empty() ? cell.run.frame_count
                                              : static_cast<int>(cell.run.frames.size());
    text += cell.row + "," + std::to_string(cell.k) + "," + std::to_string(cell.seed) + "," +
            std::to_string(count) + "," + fmt_exact(cell.run.mean_dice) + "," +
            fmt_exact(cell.run.sd_dice) + "," + fmt_exact(cell.run.mean_ms) + "," +
            fmt_exact(cell.run.mean_err_meas) + "," + fmt_exact(cell.run.mean_err_corr) + "\n";
  }
  return text;
}

// Non-empty data lines after a required exact header.
std::vector<std::string> csv_rows(const std::string& path, const char* header) {
  const auto lines = split_lines(read_text(path));
  if (lines.empty() || lines[0] != header)
    throw std::runtime_error(path + ": unexpected header");
  std::vector<std::string> rows;
  for (size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) rows.push_back(lines[i]);
  return rows;
}

RunSummary stored_summary(int frame_count, double mean_dice, double sd_dice, double mean_ms,
                          double err_meas, double err_corr) {
  RunSummary run;
  run.frame_count = frame_count;
  run.mean_dice = mean_dice;
  run.sd_dice = sd_dice;
  run.mean_ms = mean_ms;
  run.mean_err_meas = err_meas;
  run.mean_err_corr = err_corr;
  return run;
}

}  // namespace

void write_frames_csv(const std::string& path, const std::vector<FrameResult>& frames) {
  write_text(path, frames_csv_text(frames));
}

std::vector<FrameResult> read_frames_csv(const std::string& path) {
  std::vector<FrameResult> frames;
  int line_no = 1;
  for (const auto& row : csv_rows(path, kFramesHeader)) {
    ++line_no;
    const std::string context = path + " line " + std::to_string(line_no);
    const auto fields = split_fields(row);
    if (fields.size() != 7) throw std::runtime_error(context + ": expected 7 columns");
    FrameResult f;
    f.frame = static_cast<int>(parse_int(fields[0], context));
    f.dice = parse_double(fields[1], context);
    const double first = parse_double(fields[2], context);
    const double last = parse_double(fields[3], context);
    if (!std::isnan(first)) {
      f.loss_trace.push_back(first);
      if (!std::isnan(last)) f.loss_trace.push_back(last);
    }
    f.joint_err_meas = parse_double(fields[4], context);
    f.joint_err_corr = parse_double(fields[5], context);
    f.ms = parse_double(fields[6], context);
    frames.push_back(std::move(f));
  }
  return frames;
}

std::string sweep_point_csv_name(const std::string& axis, double value,
                                 const std::string& variant, uint64_t seed) {
  return axis + "=" + fmt_short(value) + "_" + variant + "_seed" + std::to_string(seed) +
         ".csv";
}

std::string ablation_cell_csv_name(const std::string& row, int k, uint64_t seed) {
  return row + "_k" + std::to_string(k) + "_seed" + std::to_string(seed) + ".csv";
}

void write_sweep_outputs(const std::string& dir, const SweepResult& sweep) {
  fs::create_directories(dir);
  write_text((fs::path(dir) / (sweep.axis + "_sweep.csv")).string(), sweep_csv_text(sweep));
  const fs::path frames_dir = fs::path(dir) / (sweep.axis + "_frames");
  for (const auto& p : sweep.points) {
    if (p.run.frames.empty()) continue;
    fs::create_directories(frames_dir);
    write_frames_csv(
        (frames_dir / sweep_point_csv_name(sweep.axis, p.value, p.variant, p.seed)).string(),
        p.run.frames);
  }
}

SweepResult read_sweep_outputs(const std::string& dir, const std::string& axis) {
  const std::string csv_path = (fs::path(dir) / (axis + "_sweep.csv")).string();
  SweepResult sweep;
  sweep.axis = axis;
  int line_no = 1;
  for (const auto& row : csv_rows(csv_path, kSweepHeader)) {
    ++line_no;
    const std::string context = csv_path + " line " + std::to_string(line_no);
    const auto fields = split_fields(row);
    if (fields.size() != 10) throw std::runtime_error(context + ": expected 10 columns");
    if (fields[0] != axis)
      throw std::runtime_error(context + ": axis '" + fields[0] + "' does not match " + axis);
    SweepPoint point;
    point.value = parse_double(fields[1], context);
    point.variant = fields[2];
    point.seed = static_cast<uint64_t>(parse_int(fields[3], context));
    const int count = static_cast<int>(parse_int(fields[4], context));
    const fs::path frames_path =
        fs::path(dir) / (axis + "_frames") /
        sweep_point_csv_name(axis, point.value, point.variant, point.seed);
    if (fs::exists(frames_path)) {
      point.run = summarize_run(read_frames_csv(frames_path.string()));
    } else {
      point.run = stored_summary(count, parse_double(fields[5], context),
                                 parse_double(fields[6], context),
                                 parse_double(fields[7], context),
                                 parse_double(fields[8], context),
                                 parse_double(fields[9], context));
    }
    sweep.points.push_back(std::move(point));
  }
  for (const auto& p : sweep.points) {
    if (std::find(sweep.values.begin(), sweep.values.end(), p.value) == sweep.values.end())
      sweep.values.push_back(p.value);
    if (std::find(sweep.seeds.begin(), sweep.seeds.end(), p.seed) == sweep.seeds.end())
      sweep.seeds.push_back(p.seed);
  }
  std::sort(sweep.values.begin(), sweep.values.end());
  std::sort(sweep.seeds.begin(), sweep.seeds.end());
  return sweep;
}

void write_ablation_outputs(const std::string& dir, const AblationTable& table) {
  fs::create_directories(dir);
  write_text((fs::path(dir) / "ablation.csv").string(), ablation_csv_text(table));
  const fs::path frames_dir = fs::path(dir) / "ablation_frames";
  for (const auto& cell : table) {
    if (cell.run.frames.empty()) continue;
    fs::create_directories(frames_dir);
    write_frames_csv(
        (frames_dir / ablation_cell_csv_name(cell.row, cell.k, cell.seed)).string(),
        cell.run.frames);
  }
}

AblationTable read_ablation_outputs(const std::string& dir) {
  const std::string csv_path = (fs::path(dir) / "ablation.csv").string();
  AblationTable table;
  int line_no = 1;
  for (const auto& row : csv_rows(csv_path, kAblationHeader)) {
    ++line_no;
    const std::string context = csv_path + " line " + std::to_string(line_no);
    const auto fields = split_fields(row);
    if (fields.size() != 9) throw std::runtime_error(context + ": expected 9 columns");
    AblationCell cell;
    cell.row = fields[0];
    cell.k = static_cast<int>(parse_int(fields[1], context));
    cell.seed = static_cast<uint64_t>(parse_int(fields[2], context));
    const int count = static_cast<int>(parse_int(fields[3], context));
    const fs::path frames_path =
        fs::path(dir) / "ablation_frames" / ablation_cell_csv_name(cell.row, cell.k, cell.seed);
    if (fs::exists(frames_path)) {
      cell.run = summarize_run(read_frames_csv(frames_path.string()));
    } else {
      cell.run = stored_summary(count, parse_double(fields[4], context),
                                parse_double(fields[5], context),
                                parse_double(fields[6], context),
                                parse_double(fields[7], context),
                                parse_double(fields[8], context));
    }
    table.push_back(std::move(cell));
  }
  return table;
}

namespace {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> pts;
};

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step = (norm <= 1.0 ? 1.0 : norm <= 2.0 ? 2.0 : norm <= 5.0 ? 5.0 : 10.0) * mag;
  std::vector<double> ticks;
  double t = std::ceil(lo / step) * step;
  while (t <= hi + step * 1e-9) {
    if (std::abs(t) < step * 1e-9) t = 0.0;
    ticks.push_back(t);
    t += step;
  }
  return ticks;
}

std::string render_svg_plot(const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, const std::vector<PlotSeries>& series) {
  double xlo = 0.0, xhi = 0.0, ylo = 0.0, yhi = 0.0;
  bool any = false;
  for (const auto& s : series)
    for (const auto& [x, y] : s.pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!any) {
        xlo = xhi = x;
        ylo = yhi = y;
        any = true;
      } else {
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
        ylo = std::min(ylo, y);
        yhi = std::max(yhi, y);
      }
    }
  if (!any) {
    xlo = ylo = 0.0;
    xhi = yhi = 1.0;
  }
  if (xhi - xlo < 1e-12) {
    xlo -= 1.0;
    xhi += 1.0;
  }
  if (yhi - ylo < 1e-12) {
    ylo -= 1.0;
    yhi += 1.0;
  }
  const double xpad = 0.04 * (xhi - xlo), ypad = 0.04 * (yhi - ylo);
  xlo -= xpad;
  xhi += xpad;
  ylo -= ypad;
  yhi += ypad;

  const double px0 = 70, px1 = 610, py0 = 40, py1 = 370;
  const auto map_x = [&](double x) { return px0 + (x - xlo) / (xhi - xlo) * (px1 - px0); };
  const auto map_y = [&](double y) { return py1 - (y - ylo) / (yhi - ylo) * (py1 - py0); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" "
       "height=\"420\" viewBox=\"0 0 640 420\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"420\" fill=\"#ffffff\"/>\n";

  for (double t : nice_ticks(xlo, xhi)) {
    const std::string x = fmt_coord(map_x(t));
    s += "<line x1=\"" + x + "\" y1=\"" + fmt_coord(py0) + "\" x2=\"" + x + "\" y2=\"" +
         fmt_coord(py1) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + x + "\" y=\"" + fmt_coord(py1 + 16) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\" "
         "text-anchor=\"middle\">" +
         fmt_tick(t) + "</text>\n";
  }
  for (double t : nice_ticks(ylo, yhi)) {
    const std::string y = fmt_coord(map_y(t));
    s += "<line x1=\"" + fmt_coord(px0) + "\" y1=\"" + y + "\" x2=\"" + fmt_coord(px1) +
         "\" y2=\"" + y + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    s += "<text x=\"" + fmt_coord(px0 - 6) + "\" y=\"" + y +
         "\" dy=\"4\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\" "
         "text-anchor=\"end\">" +
         fmt_tick(t) + "</text>\n";
  }
  s += "<rect x=\"" + fmt_coord(px0) + "\" y=\"" + fmt_coord(py0) + "\" width=\"" +
       fmt_coord(px1 - px0) + "\" height=\"" + fmt_coord(py1 - py0) +
       "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

  s += "<text x=\"320\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
       "fill=\"#111111\" text-anchor=\"middle\">" +
       xml_escape(title) + "</text>\n";
  s += "<text x=\"340\" y=\"406\" font-family=\"sans-serif\" font-size=\"12\" "
       "fill=\"#333333\" text-anchor=\"middle\">" +
       xml_escape(xlabel) + "</text>\n";
  s += "<text x=\"18\" y=\"205\" font-family=\"sans-serif\" font-size=\"12\" "
       "fill=\"#333333\" text-anchor=\"middle\" transform=\"rotate(-90 18 205)\">" +
       xml_escape(ylabel) + "</text>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 6];
    std::string pts;
    for (const auto& [x, y] : series[i].pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!pts.empty()) pts += " ";
      pts += fmt_coord(map_x(x)) + "," + fmt_coord(map_y(y));
    }
    if (pts.empty()) continue;
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
         "\" stroke-width=\"1.5\"/>\n";
    for (const auto& [x, y] : series[i].pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      s += "<circle cx=\"" + fmt_coord(map_x(x)) + "\" cy=\"" + fmt_coord(map_y(y)) +
           "\" r=\"3\" fill=\"" + std::string(color) + "\"/>\n";
    }
  }

  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 6];
    const double ly = 56 + 18 * static_cast<double>(i);
    s += "<line x1=\"470\" y1=\"" + fmt_coord(ly - 4) + "\" x2=\"486\" y2=\"" +
         fmt_coord(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"492\" y=\"" + fmt_coord(ly) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" +
         xml_escape(series[i].name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string sanitize_name(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string pad_right(const std::string& s, size_t width) {
  std::string out = s;
  while (out.size() < width) out += ' ';
  return out;
}

std::string fmt_stat(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%9.6f", v);
  return buf;
}

const SweepPoint* find_point(const SweepResult& sweep, double value, const std::string& variant,
                             uint64_t seed) {
  for (const auto& p : sweep.points)
    if (p.value == value && p.variant == variant && p.seed == seed) return &p;
  return nullptr;
}

// Dice series of a run, valid only when every frame has ground truth.
bool dice_series(const RunSummary& run, std::vector<double>& out) {
  out.clear();
  for (const auto& f : run.frames) {
    if (f.dice < 0.0) return false;
    out.push_back(f.dice);
  }
  return !out.empty();
}

}  // namespace

void emit_report(const ReportInputs& inputs, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  for (const auto& sweep : inputs.sweeps)
    write_text((dir / (sweep.axis + "_sweep.csv")).string(), sweep_csv_text(sweep));
  write_text((dir / "ablation.csv").string(), ablation_csv_text(inputs.ablation));

  std::string summary = "kinefit evaluation summary\n";
  summary += "\n== runs ==\n";
  summary += pad_right("name", 22) + pad_right("frames", 8) + pad_right("mean_dice", 11) +
             pad_right("sd_dice", 11) + pad_right("err_meas", 11) + "err_corr\n";
  for (const auto& named : inputs.runs) {
    const int count = named.run.frames.empty() ? named.run.frame_count
                                               : static_cast<int>(named.run.frames.size());
    summary += pad_right(named.name, 22) + pad_right(std::to_string(count), 8) +
               pad_right(fmt_stat(named.run.mean_dice), 11) +
               pad_right(fmt_stat(named.run.sd_dice), 11) +
               pad_right(fmt_stat(named.run.mean_err_meas), 11) +
               fmt_stat(named.run.mean_err_corr) + "\n";
  }

  for (const auto& sweep : inputs.sweeps) {
    summary += "\n== sweep: " + sweep.axis + " ==\n";
    summary += pad_right("value", 10) + pad_right("variant", 10) + pad_right("runs", 6) +
               pad_right("mean_dice", 11) + "sd_dice\n";
    for (const auto& agg : aggregate(sweep))
      summary += pad_right(fmt_short(agg.value), 10) + pad_right(agg.variant, 10) +
                 pad_right(std::to_string(agg.runs), 6) + pad_right(fmt_stat(agg.mean_dice), 11) +
                 fmt_stat(agg.sd_dice) + "\n";
  }

  summary += "\n== ablation ==\n";
  summary += pad_right("row", 10) + pad_right("k", 4) + pad_right("runs", 6) +
             pad_right("mean_dice", 11) + "sd_dice\n";
  std::vector<std::pair<std::string, int>> cells_seen;
  for (const auto& cell : inputs.ablation) {
    const std::pair<std::string, int> key{cell.row, cell.k};
    if (std::find(cells_seen.begin(), cells_seen.end(), key) != cells_seen.end()) continue;
    cells_seen.push_back(key);
    std::vector<const RunSummary*> group;
    for (const auto& c : inputs.ablation)
      if (c.row == key.first && c.k == key.second) group.push_back(&c.run);
    const PooledStats stats = pool_runs(group);
    summary += pad_right(key.first, 10) + pad_right(std::to_string(key.second), 4) +
               pad_right(std::to_string(stats.runs), 6) + pad_right(fmt_stat(stats.mean_dice), 11) +
               fmt_stat(stats.sd_dice) + "\n";
  }
  write_text((dir / "summary.txt").string(), summary);

  for (const auto& sweep : inputs.sweeps) {
    std::vector<PlotSeries> series;
    for (const char* variant : {"full", "baseline"}) {
      PlotSeries line;
      line.name = variant;
      for (const auto& agg : aggregate(sweep))
        if (agg.variant == variant && agg.mean_dice >= 0.0)
          line.pts.emplace_back(agg.mean_ms, agg.mean_dice);
      if (!line.pts.empty()) series.push_back(std::move(line));
    }
    if (!series.empty())
      write_text((dir / (sweep.axis + "_time_vs_dice.svg")).string(),
                 render_svg_plot(sweep.axis + " sweep", "per-frame milliseconds", "mean Dice",
                                 series));

    double chosen = 0.0;
    bool found = false;
    for (double value : sweep.values) {
      bool complete = !sweep.seeds.empty();
      for (uint64_t seed : sweep.seeds) {
        const SweepPoint* full = find_point(sweep, value, "full", seed);
        const SweepPoint* base = find_point(sweep, value, "baseline", seed);
        std::vector<double> fd, bd;
        if (!full || !base || !dice_series(full->run, fd) || !dice_series(base->run, bd) ||
            fd.size() != bd.size()) {
          complete = false;
          break;
        }
      }
      if (complete && (!found || value > chosen)) {
        chosen = value;
        found = true;
      }
    }
    if (found) {
      std::vector<PlotSeries> curves;
      for (uint64_t seed : sweep.seeds) {
        std::vector<double> fd, bd;
        dice_series(find_point(sweep, chosen, "full", seed)->run, fd);
        dice_series(find_point(sweep, chosen, "baseline", seed)->run, bd);
        const auto curve = cumulative_dice_diff(fd, bd);
        PlotSeries line;
        line.name = "seed " + std::to_string(seed);
        for (size_t m = 0; m < curve.size(); ++m)
          line.pts.emplace_back(static_cast<double>(m + 1), curve[m]);
        curves.push_back(std::move(line));
      }
      write_text((dir / (sweep.axis + "_cumulative_diff.svg")).string(),
                 render_svg_plot(sweep.axis + "=" + fmt_short(chosen) + " advantage over baseline",
                                 "frames processed", "mean Dice difference", curves));
    }
  }

  for (const auto& named : inputs.runs) {
    PlotSeries line;
    line.name = "dice";
    for (const auto& f : named.run.frames)
      if (f.dice >= 0.0) line.pts.emplace_back(static_cast<double>(f.frame), f.dice);
    if (line.pts.empty()) continue;
    write_text((dir / ("run_" + sanitize_name(named.name) + "_dice.svg")).string(),
               render_svg_plot(named.name, "frame", "Dice", {line}));
  }
}

}  // namespace kinefit
