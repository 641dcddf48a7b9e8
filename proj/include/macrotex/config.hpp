#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "macrotex/errors.hpp"
#include "macrotex/features.hpp"
#include "macrotex/image_io.hpp"
#include "macrotex/soul.hpp"
#include "macrotex/synth.hpp"
#include "macrotex/weights_io.hpp"

namespace macrotex {

// Fully resolved run configuration. Every field has either an explicit
// value from the config file or the documented default below; delta0 and
// gamma0 are mandatory (the experimental schedules fix only the asymptotic
// order, so the constants must be stated).
struct RunConfig {
  std::string command;  // synth | baseline | check | oracle (set by the CLI)

  // [run]
  std::string exemplar;
  int output_height = 0;  // 0 = exemplar height
  int output_width = 0;   // 0 = exemplar width
  std::uint64_t seed = 0;
  std::string run_name = "run";

  // [features]
  std::string type = "filterbank";       // firstorder | filterbank | convnet
  std::string transforms = "identity";   // comma list (firstorder)
  std::string phi = "softplus";          // filterbank nonlinearity
  int kernel_size = 3;                   // filterbank
  int kernel_count = 8;                  // filterbank
  std::uint64_t kernel_seed = 12345;     // filterbank kernel draw
  std::string padding = "periodic";      // periodic | zero
  std::string preset = "custom";         // shallow3 | mid6 | deep8 | custom
  std::string layers = "";               // comma list (convnet, custom preset)
  std::string weights = "";              // manifest path (convnet)
  std::string weight_mode = "trained";   // trained | gaussian

  // [model]
  double epsilon = 0.0;

  // [soul]
  int iterations = 1000;
  double delta0 = std::nan("");  // mandatory
  double gamma0 = std::nan("");  // mandatory
  double delta_exponent = 1.0;
  double gamma_exponent = 1.0;
  int m = 1;
  std::string theta_domain = "unbounded";  // unbounded | ball
  double theta_radius = 1.0;
  std::string theta_average = "last";      // last | running
  std::string init = "gaussian-field";     // gaussian-field | white-noise
  bool histogram_match = true;

  // [baseline]
  int baseline_steps = 100;
  double baseline_eta = 0.1;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw config_error("config: key '" + key + "': not a number: '" + v + "'");
  }
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (...) {
    throw config_error("config: key '" + key + "': not an integer: '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    std::uint64_t i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (...) {
    throw config_error("config: key '" + key + "': not an integer: '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw config_error("config: key '" + key + "': not a boolean: '" + v + "'");
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies one section-qualified assignment; unknown keys are hard errors.
inline void apply_config_entry(RunConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
  const std::string full = section.empty() ? key : section + "." + key;
  auto is = [&](const char* sec, const char* k) {
    return section == sec && key == k;
  };
  using namespace detail;
  if (is("run", "exemplar")) cfg.exemplar = value;
  else if (is("run", "output_height")) cfg.output_height = parse_int(full, value);
  else if (is("run", "output_width")) cfg.output_width = parse_int(full, value);
  else if (is("run", "seed")) cfg.seed = parse_u64(full, value);
  else if (is("run", "run_name")) cfg.run_name = value;
  else if (is("features", "type")) cfg.type = value;
  else if (is("features", "transforms")) cfg.transforms = value;
  else if (is("features", "phi")) cfg.phi = value;
  else if (is("features", "kernel_size")) cfg.kernel_size = parse_int(full, value);
  else if (is("features", "kernel_count")) cfg.kernel_count = parse_int(full, value);
  else if (is("features", "kernel_seed")) cfg.kernel_seed = parse_u64(full, value);
  else if (is("features", "padding")) cfg.padding = value;
  else if (is("features", "preset")) cfg.preset = value;
  else if (is("features", "layers")) cfg.layers = value;
  else if (is("features", "weights")) cfg.weights = value;
  else if (is("features", "weight_mode")) cfg.weight_mode = value;
  else if (is("model", "epsilon")) cfg.epsilon = parse_double(full, value);
  else if (is("soul", "iterations")) cfg.iterations = parse_int(full, value);
  else if (is("soul", "delta0")) cfg.delta0 = parse_double(full, value);
  else if (is("soul", "gamma0")) cfg.gamma0 = parse_double(full, value);
  else if (is("soul", "delta_exponent")) cfg.delta_exponent = parse_double(full, value);
  else if (is("soul", "gamma_exponent")) cfg.gamma_exponent = parse_double(full, value);
  else if (is("soul", "m")) cfg.m = parse_int(full, value);
  else if (is("soul", "theta_domain")) cfg.theta_domain = value;
  else if (is("soul", "theta_radius")) cfg.theta_radius = parse_double(full, value);
  else if (is("soul", "theta_average")) cfg.theta_average = value;
  else if (is("soul", "init")) cfg.init = value;
  else if (is("soul", "histogram_match")) cfg.histogram_match = parse_bool(full, value);
  else if (is("baseline", "steps")) cfg.baseline_steps = parse_int(full, value);
  else if (is("baseline", "eta")) cfg.baseline_eta = parse_double(full, value);
  else
    throw config_error("config: unknown key '" + full + "'");
}

// Parses INI-style text: [section] headers, key = value lines, # comments.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(lineno) +
                         ": expected key = value");
    apply_config_entry(cfg, section, detail::trim(line.substr(0, eq)),
                       detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Mandatory-field check, run after file + flag overrides are merged.
inline void validate_config(const RunConfig& cfg) {
  if (std::isnan(cfg.delta0)) throw config_error("config: missing mandatory key 'soul.delta0'");
  if (std::isnan(cfg.gamma0)) throw config_error("config: missing mandatory key 'soul.gamma0'");
  if (cfg.command != "oracle" && cfg.exemplar.empty())
    throw config_error("config: missing mandatory key 'run.exemplar'");
}

// Canonical echo of the resolved configuration; parse(emit(c)) == c.
inline std::string emit_config(const RunConfig& cfg) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "[run]\n"
     << "exemplar = " << cfg.exemplar << "\n"
     << "output_height = " << cfg.output_height << "\n"
     << "output_width = " << cfg.output_width << "\n"
     << "seed = " << cfg.seed << "\n"
     << "run_name = " << cfg.run_name << "\n"
     << "[features]\n"
     << "type = " << cfg.type << "\n"
     << "transforms = " << cfg.transforms << "\n"
     << "phi = " << cfg.phi << "\n"
     << "kernel_size = " << cfg.kernel_size << "\n"
     << "kernel_count = " << cfg.kernel_count << "\n"
     << "kernel_seed = " << cfg.kernel_seed << "\n"
     << "padding = " << cfg.padding << "\n"
     << "preset = " << cfg.preset << "\n"
     << "layers = " << cfg.layers << "\n"
     << "weights = " << cfg.weights << "\n"
     << "weight_mode = " << cfg.weight_mode << "\n"
     << "[model]\n"
     << "epsilon = " << fmt_double(cfg.epsilon) << "\n"
     << "[soul]\n"
     << "iterations = " << cfg.iterations << "\n"
     << "delta0 = " << fmt_double(cfg.delta0) << "\n"
     << "gamma0 = " << fmt_double(cfg.gamma0) << "\n"
     << "delta_exponent = " << fmt_double(cfg.delta_exponent) << "\n"
     << "gamma_exponent = " << fmt_double(cfg.gamma_exponent) << "\n"
     << "m = " << cfg.m << "\n"
     << "theta_domain = " << cfg.theta_domain << "\n"
     << "theta_radius = " << fmt_double(cfg.theta_radius) << "\n"
     << "theta_average = " << cfg.theta_average << "\n"
     << "init = " << cfg.init << "\n"
     << "histogram_match = " << (cfg.histogram_match ? "true" : "false") << "\n"
     << "[baseline]\n"
     << "steps = " << cfg.baseline_steps << "\n"
     << "eta = " << fmt_double(cfg.baseline_eta) << "\n";
  return os.str();
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Builds the feature map described by the configuration. `channels` is the
// exemplar channel count (needed only for manifests' input offsets).
inline FeatureMapSpec build_feature_spec(const RunConfig& cfg) {
  if (cfg.type == "firstorder") {
    FirstOrderSpec spec;
    for (const auto& name : detail::split_list(cfg.transforms))
      spec.transforms.push_back(nonlinearity(name));
    if (spec.transforms.empty())
      throw config_error("config: features.transforms is empty");
    return spec;
  }
  if (cfg.type == "filterbank") {
    FilterBankSpec spec;
    spec.phi = nonlinearity(cfg.phi);
    spec.pad = padding_mode(cfg.padding);
    RandomStream kstream(cfg.kernel_seed);
    const int k = cfg.kernel_size;
    const double scale = 1.0 / k;  // keeps filter responses O(1)
    for (int i = 0; i < cfg.kernel_count; ++i) {
      Kernel kernel;
      kernel.kh = kernel.kw = k;
      kernel.taps.resize(static_cast<std::size_t>(k) * k);
      for (double& t : kernel.taps) t = scale * kstream.normal();
      spec.kernels.push_back(std::move(kernel));
    }
    return spec;
  }
  if (cfg.type == "convnet") {
    if (cfg.weights.empty())
      throw config_error("config: features.weights required for convnet");
    ConvNetSpec net = load_weights(cfg.weights);
    if (cfg.preset == "custom") {
      for (const auto& tok : detail::split_list(cfg.layers))
        net.selected_layers.push_back(detail::parse_int("features.layers", tok));
      if (net.selected_layers.empty())
        throw config_error("config: features.layers required for preset 'custom'");
    } else {
      net.selected_layers = layer_preset(cfg.preset);
    }
    for (int j : net.selected_layers)
      if (j < 1 || j > static_cast<int>(net.layers.size()))
        throw config_error("config: selected layer " + std::to_string(j) +
                           " outside the loaded network");
    if (cfg.weight_mode == "gaussian") {
      RandomStream wstream = RandomStream(cfg.seed).substream(2);
      net = randomize_weights(net, wstream);
    } else if (cfg.weight_mode != "trained") {
      throw config_error("config: unknown weight_mode '" + cfg.weight_mode + "'");
    }
    return net;
  }
  throw config_error("config: unknown features.type '" + cfg.type + "'");
}

inline SoulConfig build_soul_config(const RunConfig& cfg) {
  SoulConfig soul;
  soul.schedule.delta = cfg.delta_exponent == 0.0
                            ? StepSequence::constant(cfg.delta0)
                            : StepSequence::power(cfg.delta0, cfg.delta_exponent);
  soul.schedule.gamma = cfg.gamma_exponent == 0.0
                            ? StepSequence::constant(cfg.gamma0)
                            : StepSequence::power(cfg.gamma0, cfg.gamma_exponent);
  soul.schedule.inner = StepSequence::constant(cfg.m);
  soul.outer_iterations = cfg.iterations;
  if (cfg.theta_domain == "unbounded")
    soul.domain = ThetaDomain::unbounded();
  else if (cfg.theta_domain == "ball")
    soul.domain = ThetaDomain::ball(cfg.theta_radius);
  else
    throw config_error("config: unknown theta_domain '" + cfg.theta_domain + "'");
  if (cfg.theta_average == "last")
    soul.averaging = ThetaAverage::LastIterate;
  else if (cfg.theta_average == "running")
    soul.averaging = ThetaAverage::RunningAverage;
  else
    throw config_error("config: unknown theta_average '" + cfg.theta_average + "'");
  return soul;
}

inline SynthesisJob build_job(const RunConfig& cfg) {
  SynthesisJob job;
  job.exemplar = read_image(cfg.exemplar);
  job.out_height = cfg.output_height > 0 ? cfg.output_height : job.exemplar.height;
  job.out_width = cfg.output_width > 0 ? cfg.output_width : job.exemplar.width;
  job.spec = build_feature_spec(cfg);
  job.epsilon = cfg.epsilon;
  job.soul = build_soul_config(cfg);
  job.histogram_matching = cfg.histogram_match;
  if (cfg.init == "gaussian-field")
    job.init_mode = InitMode::GaussianField;
  else if (cfg.init == "white-noise")
    job.init_mode = InitMode::WhiteNoise;
  else
    throw config_error("config: unknown init '" + cfg.init + "'");
  job.seed = cfg.seed;
  return job;
}

}  // namespace macrotex
