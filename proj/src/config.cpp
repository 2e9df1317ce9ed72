#include "kinefit/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <utility>

namespace kinefit {
namespace {

constexpr int kMaxLinks = 16;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_tokens(const std::string& raw) {
  std::vector<std::string> out;
  std::istringstream in(raw);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& tok) {
  double v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ConfigError(key + ": expected a finite number, got '" + tok + "'");
  return v;
}

long long parse_integer(const std::string& key, const std::string& tok) {
  long long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw ConfigError(key + ": expected an integer, got '" + tok + "'");
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& tok) {
  uint64_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + tok + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& tok) {
  if (tok == "true") return true;
  if (tok == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + tok + "'");
}

const std::string& single_token(const std::string& key, const std::vector<std::string>& toks) {
  if (toks.size() != 1)
    throw ConfigError(key + ": expected exactly one value, got " + std::to_string(toks.size()));
  return toks.front();
}

// One configuration key: how to assign a raw value into the config and how
// to print the current value back out. Fields that do not apply to the
// current config (links past the arm's count) emit nothing.
struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::vector<std::string>&)> apply;
  std::function<bool(const ExperimentConfig&, std::string&)> emit;
};

template <class Ref>
Field double_field(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    ref(c) = parse_double(key, single_token(key, toks));
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out = format_double(ref(const_cast<ExperimentConfig&>(c)));
    return true;
  };
  return f;
}

template <class Ref>
Field int_field(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    ref(c) = static_cast<int>(parse_integer(key, single_token(key, toks)));
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out = std::to_string(ref(const_cast<ExperimentConfig&>(c)));
    return true;
  };
  return f;
}

template <class Ref>
Field u64_field(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    ref(c) = parse_u64(key, single_token(key, toks));
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out = std::to_string(ref(const_cast<ExperimentConfig&>(c)));
    return true;
  };
  return f;
}

template <class Ref>
Field bool_field(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    ref(c) = parse_bool(key, single_token(key, toks));
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out = ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
    return true;
  };
  return f;
}

template <class Ref>
Field string_field(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    if (toks.empty()) throw ConfigError(key + ": expected a value");
    std::string joined = toks.front();
    for (size_t i = 1; i < toks.size(); ++i) joined += " " + toks[i];
    ref(c) = joined;
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out = ref(const_cast<ExperimentConfig&>(c));
    return true;
  };
  return f;
}

template <class Ref>
Field double_list(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    std::vector<double> vals;
    vals.reserve(toks.size());
    for (const auto& t : toks) vals.push_back(parse_double(key, t));
    ref(c) = std::move(vals);
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out.clear();
    for (double v : ref(const_cast<ExperimentConfig&>(c))) {
      if (!out.empty()) out += " ";
      out += format_double(v);
    }
    return true;
  };
  return f;
}

template <class Ref>
Field int_list(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    std::vector<int> vals;
    vals.reserve(toks.size());
    for (const auto& t : toks) vals.push_back(static_cast<int>(parse_integer(key, t)));
    ref(c) = std::move(vals);
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out.clear();
    for (int v : ref(const_cast<ExperimentConfig&>(c))) {
      if (!out.empty()) out += " ";
      out += std::to_string(v);
    }
    return true;
  };
  return f;
}

template <class Ref>
Field u64_list(std::string key, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    std::vector<uint64_t> vals;
    vals.reserve(toks.size());
    for (const auto& t : toks) vals.push_back(parse_u64(key, t));
    ref(c) = std::move(vals);
  };
  f.emit = [ref](const ExperimentConfig& c, std::string& out) {
    out.clear();
    for (uint64_t v : ref(const_cast<ExperimentConfig&>(c))) {
      if (!out.empty()) out += " ";
      out += std::to_string(v);
    }
    return true;
  };
  return f;
}

// Exactly `n` doubles written through a pointer to the first element.
template <class Ref>
Field fixed_doubles(std::string key, int n, Ref ref) {
  Field f;
  f.key = std::move(key);
  f.apply = [key = f.key, n, ref](ExperimentConfig& c, const std::vector<std::string>& toks) {
    if (static_cast<int>(toks.size()) != n)
      throw ConfigError(key + ": expected " + std::to_string(n) + " values, got " +
                        std::to_string(toks.size()));
    double* dst = ref(c);
    for (int i = 0; i < n; ++i) dst[i] = parse_double(key, toks[i]);
  };
  f.emit = [n, ref](const ExperimentConfig& c, std::string& out) {
    const double* src = ref(const_cast<ExperimentConfig&>(c));
    out.clear();
    for (int i = 0; i < n; ++i) {
      if (!out.empty()) out += " ";
      out += format_double(src[i]);
    }
    return true;
  };
  return f;
}

Field domain_kind_field() {
  Field f;
  f.key = "domain.kind";
  f.apply = [key = f.key](ExperimentConfig& c, const std::vector<std::string>& toks) {
    try {
      c.dataset.domain.kind = domain_from_name(single_token(key, toks));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key + ": " + e.what());
    }
  };
  f.emit = [](const ExperimentConfig& c, std::string& out) {
    out = domain_name(c.dataset.domain.kind);
    return true;
  };
  return f;
}

// Resizing an arm fills new links with the default DhLink; the per-link
// keys below refuse indices at or past the current count.
Field links_count_field(const std::string& prefix, int arm) {
  Field f;
  f.key = prefix + "links";
  f.apply = [key = f.key, arm](ExperimentConfig& c, const std::vector<std::string>& toks) {
    const long long n = parse_integer(key, single_token(key, toks));
    if (n < 1 || n > kMaxLinks)
      throw ConfigError(key + ": must be between 1 and " + std::to_string(kMaxLinks));
    c.dataset.arms[arm].links.resize(static_cast<size_t>(n));
  };
  f.emit = [arm](const ExperimentConfig& c, std::string& out) {
    out = std::to_string(c.dataset.arms[arm].links.size());
    return true;
  };
  return f;
}

Field link_attr_field(const std::string& prefix, int arm, int index, const std::string& attr,
                      double DhLink::* member) {
  Field f;
  f.key = prefix + "link" + std::to_string(index) + "." + attr;
  f.apply = [key = f.key, arm, index, member](ExperimentConfig& c,
                                              const std::vector<std::string>& toks) {
    auto& links = c.dataset.arms[arm].links;
    if (index >= static_cast<int>(links.size()))
      throw ConfigError(key + ": index past the arm's link count (" +
                        std::to_string(links.size()) + "); set links first");
    links[index].*member = parse_double(key, single_token(key, toks));
  };
  f.emit = [arm, index, member](const ExperimentConfig& c, std::string& out) {
    const auto& links = c.dataset.arms[arm].links;
    if (index >= static_cast<int>(links.size())) return false;
    out = format_double(links[index].*member);
    return true;
  };
  return f;
}

Field link_kind_field(const std::string& prefix, int arm, int index) {
  Field f;
  f.key = prefix + "link" + std::to_string(index) + ".kind";
  f.apply = [key = f.key, arm, index](ExperimentConfig& c, const std::vector<std::string>& toks) {
    auto& links = c.dataset.arms[arm].links;
    if (index >= static_cast<int>(links.size()))
      throw ConfigError(key + ": index past the arm's link count (" +
                        std::to_string(links.size()) + "); set links first");
    const std::string& tok = single_token(key, toks);
    if (tok == "revolute")
      links[index].kind = JointKind::Revolute;
    else if (tok == "prismatic")
      links[index].kind = JointKind::Prismatic;
    else
      throw ConfigError(key + ": expected revolute or prismatic, got '" + tok + "'");
  };
  f.emit = [arm, index](const ExperimentConfig& c, std::string& out) {
    const auto& links = c.dataset.arms[arm].links;
    if (index >= static_cast<int>(links.size())) return false;
    out = links[index].kind == JointKind::Prismatic ? "prismatic" : "revolute";
    return true;
  };
  return f;
}

struct Section {
  std::string comment;
  std::vector<Field> fields;
};

const std::vector<Section>& registry() {
  static const std::vector<Section> sections = [] {
    std::vector<Section> out;

    Section ds;
    ds.comment = "Scene and corruption source; seed derives every stream below.";
    ds.fields.push_back(u64_field("dataset.seed",
                                  [](ExperimentConfig& c) -> uint64_t& { return c.master_seed; }));
    ds.fields.push_back(double_field(
        "dataset.tau", [](ExperimentConfig& c) -> double& { return c.dataset.tau; }));
    ds.fields.push_back(double_field("dataset.tool_intensity", [](ExperimentConfig& c) -> double& {
      return c.dataset.tool_intensity;
    }));
    ds.fields.push_back(u64_field("dataset.background_seed", [](ExperimentConfig& c) -> uint64_t& {
      return c.dataset.background_seed;
    }));
    ds.fields.push_back(u64_field(
        "dataset.render_seed",
        [](ExperimentConfig& c) -> uint64_t& { return c.dataset.render_seed; }));
    out.push_back(std::move(ds));

    Section tr;
    tr.comment = "Joint motion: seeded sinusoid sums per joint.";
    tr.fields.push_back(int_field(
        "trajectory.length", [](ExperimentConfig& c) -> int& { return c.dataset.trajectory.length; }));
    tr.fields.push_back(double_list("trajectory.offsets", [](ExperimentConfig& c) -> auto& {
      return c.dataset.trajectory.offsets;
    }));
    tr.fields.push_back(double_list("trajectory.amplitudes", [](ExperimentConfig& c) -> auto& {
      return c.dataset.trajectory.amplitudes;
    }));
    tr.fields.push_back(double_field("trajectory.freq_min", [](ExperimentConfig& c) -> double& {
      return c.dataset.trajectory.freq_min;
    }));
    tr.fields.push_back(double_field("trajectory.freq_max", [](ExperimentConfig& c) -> double& {
      return c.dataset.trajectory.freq_max;
    }));
    tr.fields.push_back(int_field("trajectory.smoothness", [](ExperimentConfig& c) -> int& {
      return c.dataset.trajectory.smoothness;
    }));
    tr.fields.push_back(u64_field("trajectory.seed", [](ExperimentConfig& c) -> uint64_t& {
      return c.dataset.trajectory.seed;
    }));
    out.push_back(std::move(tr));

    Section no;
    no.comment = "Measurement corruption: white noise plus a bias walk.";
    no.fields.push_back(double_field("noise.sigma_white", [](ExperimentConfig& c) -> double& {
      return c.dataset.noise.sigma_white;
    }));
    no.fields.push_back(double_field("noise.sigma_bias", [](ExperimentConfig& c) -> double& {
      return c.dataset.noise.sigma_bias;
    }));
    no.fields.push_back(double_list("noise.joint_scale", [](ExperimentConfig& c) -> auto& {
      return c.dataset.noise.joint_scale;
    }));
    no.fields.push_back(u64_field(
        "noise.seed", [](ExperimentConfig& c) -> uint64_t& { return c.dataset.noise.seed; }));
    out.push_back(std::move(no));

    Section dom;
    dom.comment = "Visual domain applied on top of the rendered frames.";
    dom.fields.push_back(domain_kind_field());
    dom.fields.push_back(double_field("domain.brightness", [](ExperimentConfig& c) -> double& {
      return c.dataset.domain.brightness;
    }));
    dom.fields.push_back(double_field("domain.smoke_amplitude", [](ExperimentConfig& c) -> double& {
      return c.dataset.domain.smoke_amplitude;
    }));
    dom.fields.push_back(double_field("domain.bleed_amplitude", [](ExperimentConfig& c) -> double& {
      return c.dataset.domain.bleed_amplitude;
    }));
    dom.fields.push_back(int_field("domain.bleed_count", [](ExperimentConfig& c) -> int& {
      return c.dataset.domain.bleed_count;
    }));
    dom.fields.push_back(u64_field(
        "domain.seed", [](ExperimentConfig& c) -> uint64_t& { return c.dataset.domain.seed; }));
    out.push_back(std::move(dom));

    Section cam;
    cam.comment = "Pinhole camera; world_from_camera is row-major 4x4.";
    cam.fields.push_back(double_field(
        "camera.fx", [](ExperimentConfig& c) -> double& { return c.dataset.camera.fx; }));
    cam.fields.push_back(double_field(
        "camera.fy", [](ExperimentConfig& c) -> double& { return c.dataset.camera.fy; }));
    cam.fields.push_back(double_field(
        "camera.cx", [](ExperimentConfig& c) -> double& { return c.dataset.camera.cx; }));
    cam.fields.push_back(double_field(
        "camera.cy", [](ExperimentConfig& c) -> double& { return c.dataset.camera.cy; }));
    cam.fields.push_back(int_field(
        "camera.width", [](ExperimentConfig& c) -> int& { return c.dataset.camera.width; }));
    cam.fields.push_back(int_field(
        "camera.height", [](ExperimentConfig& c) -> int& { return c.dataset.camera.height; }));
    cam.fields.push_back(fixed_doubles("camera.world_from_camera", 16, [](ExperimentConfig& c) {
      return c.dataset.camera.world_from_camera.data();
    }));
    out.push_back(std::move(cam));

    for (int arm = 0; arm < 2; ++arm) {
      const std::string prefix = "arm" + std::to_string(arm + 1) + ".";
      Section as;
      as.comment = prefix.substr(0, prefix.size() - 1) +
                   ": serial chain in distal Denavit-Hartenberg form.";
      as.fields.push_back(string_field(prefix + "name", [arm](ExperimentConfig& c) -> std::string& {
        return c.dataset.arms[arm].name;
      }));
      as.fields.push_back(bool_field(prefix + "jaw", [arm](ExperimentConfig& c) -> bool& {
        return c.dataset.arms[arm].jaw;
      }));
      as.fields.push_back(links_count_field(prefix, arm));
      for (int i = 0; i < kMaxLinks; ++i) {
        as.fields.push_back(link_attr_field(prefix, arm, i, "a", &DhLink::a));
        as.fields.push_back(link_attr_field(prefix, arm, i, "alpha", &DhLink::alpha));
        as.fields.push_back(link_attr_field(prefix, arm, i, "d", &DhLink::d_offset));
        as.fields.push_back(link_attr_field(prefix, arm, i, "theta", &DhLink::theta_offset));
        as.fields.push_back(link_attr_field(prefix, arm, i, "radius", &DhLink::radius));
        as.fields.push_back(link_kind_field(prefix, arm, i));
      }
      out.push_back(std::move(as));
    }

    Section bt;
    bt.comment = "Arm mounting poses: rx ry rz tx ty tz (axis-angle, then meters).";
    bt.fields.push_back(fixed_doubles("base_true.arm1", 6, [](ExperimentConfig& c) {
      return c.dataset.base_true[0].v.data();
    }));
    bt.fields.push_back(fixed_doubles("base_true.arm2", 6, [](ExperimentConfig& c) {
      return c.dataset.base_true[1].v.data();
    }));
    bt.fields.push_back(fixed_doubles("base_init.arm1", 6, [](ExperimentConfig& c) {
      return c.dataset.base_init[0].v.data();
    }));
    bt.fields.push_back(fixed_doubles("base_init.arm2", 6, [](ExperimentConfig& c) {
      return c.dataset.base_init[1].v.data();
    }));
    out.push_back(std::move(bt));

    Section pl;
    pl.comment = "Optimizer: correction iterations, window, rates, weights.";
    pl.fields.push_back(
        int_field("pipeline.k", [](ExperimentConfig& c) -> int& { return c.pipeline.k; }));
    pl.fields.push_back(int_field(
        "pipeline.window", [](ExperimentConfig& c) -> int& { return c.pipeline.window; }));
    pl.fields.push_back(double_field(
        "pipeline.lr_theta", [](ExperimentConfig& c) -> double& { return c.pipeline.lr_theta; }));
    pl.fields.push_back(double_field(
        "pipeline.lr_base", [](ExperimentConfig& c) -> double& { return c.pipeline.lr_base; }));
    pl.fields.push_back(double_field("pipeline.lambda1", [](ExperimentConfig& c) -> double& {
      return c.pipeline.reg.lambda1;
    }));
    pl.fields.push_back(double_field("pipeline.lambda2", [](ExperimentConfig& c) -> double& {
      return c.pipeline.reg.lambda2;
    }));
    pl.fields.push_back(double_field(
        "pipeline.tau", [](ExperimentConfig& c) -> double& { return c.pipeline.tau; }));
    pl.fields.push_back(int_field("pipeline.dilate_radius", [](ExperimentConfig& c) -> int& {
      return c.pipeline.dilate_radius;
    }));
    pl.fields.push_back(double_field("pipeline.tool_intensity", [](ExperimentConfig& c) -> double& {
      return c.pipeline.tool_intensity;
    }));
    pl.fields.push_back(bool_field(
        "pipeline.use_kcn", [](ExperimentConfig& c) -> bool& { return c.pipeline.use_kcn; }));
    pl.fields.push_back(bool_field(
        "pipeline.use_reg", [](ExperimentConfig& c) -> bool& { return c.pipeline.use_reg; }));
    pl.fields.push_back(bool_field("pipeline.optimize_base", [](ExperimentConfig& c) -> bool& {
      return c.pipeline.optimize_base;
    }));
    pl.fields.push_back(bool_field("pipeline.carry_state", [](ExperimentConfig& c) -> bool& {
      return c.pipeline.carry_state;
    }));
    pl.fields.push_back(u64_field(
        "pipeline.init_seed", [](ExperimentConfig& c) -> uint64_t& { return c.pipeline.init_seed; }));
    pl.fields.push_back(int_list(
        "pipeline.hidden", [](ExperimentConfig& c) -> auto& { return c.pipeline.hidden; }));
    out.push_back(std::move(pl));

    Section ev;
    ev.comment = "Evaluation: seeds for repeated runs, sweep grids, outputs.";
    ev.fields.push_back(
        u64_list("eval.seeds", [](ExperimentConfig& c) -> auto& { return c.eval_seeds; }));
    ev.fields.push_back(
        int_field("eval.workers", [](ExperimentConfig& c) -> int& { return c.workers; }));
    ev.fields.push_back(int_list("sweep.k", [](ExperimentConfig& c) -> auto& { return c.sweep_k; }));
    ev.fields.push_back(int_list("sweep.n", [](ExperimentConfig& c) -> auto& { return c.sweep_n; }));
    ev.fields.push_back(double_list(
        "sweep.lambda1", [](ExperimentConfig& c) -> auto& { return c.sweep_lambda1; }));
    ev.fields.push_back(double_list(
        "sweep.lambda2", [](ExperimentConfig& c) -> auto& { return c.sweep_lambda2; }));
    ev.fields.push_back(
        string_field("output.dir", [](ExperimentConfig& c) -> std::string& { return c.out_dir; }));
    out.push_back(std::move(ev));

    return out;
  }();
  return sections;
}

const std::map<std::string, const Field*>& field_index() {
  static const std::map<std::string, const Field*> index = [] {
    std::map<std::string, const Field*> out;
    for (const Section& s : registry())
      for (const Field& f : s.fields) out.emplace(f.key, &f);
    return out;
  }();
  return index;
}

struct Assignment {
  std::string key;
  std::string value;
  std::string where;  // origin:line or the --set literal
};

std::vector<Assignment> collect(const std::string& text, const std::vector<std::string>& overrides,
                                const std::string& origin) {
  std::vector<Assignment> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected 'section.key = value', got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty() || key.find('.') == std::string::npos)
      throw ConfigError(where + ": expected a section.key name before '='");
    out.push_back({key, trim(stripped.substr(eq + 1)), where});
  }
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "': expected section.key=value");
    const std::string key = trim(ov.substr(0, eq));
    if (key.empty() || key.find('.') == std::string::npos)
      throw ConfigError("override '" + ov + "': expected a section.key name before '='");
    out.push_back({key, trim(ov.substr(eq + 1)), "override '" + ov + "'"});
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    dataset.validate();
    pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (dataset.arms.size() != 2) throw ConfigError("config: exactly two arms are supported");
  if (eval_seeds.empty()) throw ConfigError("eval.seeds: must not be empty");
  if (workers < 1) throw ConfigError("eval.workers: must be >= 1");
  for (int k : sweep_k)
    if (k < 0) throw ConfigError("sweep.k: entries must be >= 0");
  for (int n : sweep_n)
    if (n < 1) throw ConfigError("sweep.n: entries must be >= 1");
  for (double l : sweep_lambda1)
    if (!(l >= 0)) throw ConfigError("sweep.lambda1: entries must be >= 0");
  for (double l : sweep_lambda2)
    if (!(l >= 0)) throw ConfigError("sweep.lambda2: entries must be >= 0");
  if (out_dir.empty()) throw ConfigError("output.dir: must not be empty");
  if (std::filesystem::path(out_dir).is_absolute())
    throw ConfigError("output.dir: must be relative to the work directory");
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides,
                              const std::string& origin) {
  const auto assignments = collect(text, overrides, origin);

  // The master seed rebuilds the benchmark scene and the derived stream
  // seeds, so it must land before any other key no matter where it was
  // written; explicit per-stream seeds still win afterwards.
  ExperimentConfig cfg;
  for (const Assignment& a : assignments) {
    if (a.key != "dataset.seed") continue;
    try {
      cfg.master_seed = parse_u64(a.key, single_token(a.key, split_tokens(a.value)));
    } catch (const ConfigError& e) {
      throw ConfigError(a.where + ": " + e.what());
    }
  }
  cfg.dataset = benchmark_spec(cfg.master_seed);

  bool tau_set = false, tool_set = false;
  const auto& index = field_index();
  for (const Assignment& a : assignments) {
    if (a.key == "dataset.seed") continue;
    const auto it = index.find(a.key);
    if (it == index.end()) throw ConfigError(a.where + ": unknown key '" + a.key + "'");
    try {
      it->second->apply(cfg, split_tokens(a.value));
    } catch (const ConfigError& e) {
      throw ConfigError(a.where + ": " + e.what());
    }
    if (a.key == "pipeline.tau") tau_set = true;
    if (a.key == "pipeline.tool_intensity") tool_set = true;
  }
  if (!tau_set) cfg.pipeline.tau = cfg.dataset.tau;
  if (!tool_set) cfg.pipeline.tool_intensity = cfg.dataset.tool_intensity;

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides, path.string());
}

std::string echo_config(const ExperimentConfig& config) {
  std::ostringstream out;
  bool first = true;
  for (const Section& s : registry()) {
    if (!first) out << "\n";
    first = false;
    out << "# " << s.comment << "\n";
    for (const Field& f : s.fields) {
      std::string value;
      if (f.emit(config, value)) out << f.key << " = " << value << "\n";
    }
  }
  return out.str();
}

}  // namespace kinefit
