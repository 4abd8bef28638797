#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hbt/cli.hpp"
#include "hbt/errors.hpp"
#include "presets.hpp"

namespace hbt::cli {

namespace {

constexpr unsigned kAnalysis = kFit | kRange | kSnr;

constexpr Field kFields[] = {
    {"scenario", "wavelength_nm", FieldType::Number, kSimulate, "518", "source center wavelength, nm"},
    {"scenario", "coherence_time_ns", FieldType::Number, kSimulate, "23.2", "source coherence time, ns"},
    {"scenario", "photon_rate_per_s", FieldType::Number, kSimulate, "1e6", "source photon rate into the beam splitter, 1/s"},
    {"scenario", "distance_m", FieldType::Number, kSimulate, "0", "one-way target distance, m"},
    {"scenario", "refractive_index", FieldType::Number, kSimulate | kRange, "1", "refractive index of the probe path"},
    {"scenario", "split_ref", FieldType::Number, kSimulate, "0.04", "fraction of the source sent to the reference detector"},
    {"scenario", "split_probe", FieldType::Number, kSimulate, "0.92", "fraction of the source sent to the target"},
    {"scenario", "probe_transmission", FieldType::Number, kSimulate, "1", "round-trip transmission of the probe path"},
    {"scenario", "ambient_rate_ref_per_s", FieldType::Number, kSimulate, "0", "ambient light at the reference detector, 1/s"},
    {"scenario", "ambient_rate_probe_per_s", FieldType::Number, kSimulate, "0", "ambient light at the probe detector, 1/s"},
    {"scenario", "duration_s", FieldType::Number, kSimulate, "1", "acquisition time, s"},
    {"scenario", "seed", FieldType::Integer, kSimulate, "1", "random seed"},
    {"scenario", "field_step_ps", FieldType::Number, kSimulate, "0", "thermal field grid step, ps (0 = coherence time / 100)"},

    {"detector_ref", "efficiency", FieldType::Number, kSimulate, "1", "reference detector efficiency"},
    {"detector_ref", "jitter_fwhm_ps", FieldType::Number, kSimulate, "0", "reference detector timing jitter FWHM, ps"},
    {"detector_ref", "dead_time_ns", FieldType::Number, kSimulate, "0", "reference detector dead time, ns"},
    {"detector_ref", "dark_rate_per_s", FieldType::Number, kSimulate, "0", "reference detector dark counts, 1/s"},
    {"detector_ref", "saturation_rate_per_s", FieldType::Number, kSimulate, "0", "reference detector maximum incident rate, 1/s (0 = none)"},
    {"detector_probe", "efficiency", FieldType::Number, kSimulate, "1", "probe detector efficiency"},
    {"detector_probe", "jitter_fwhm_ps", FieldType::Number, kSimulate, "0", "probe detector timing jitter FWHM, ps"},
    {"detector_probe", "dead_time_ns", FieldType::Number, kSimulate, "0", "probe detector dead time, ns"},
    {"detector_probe", "dark_rate_per_s", FieldType::Number, kSimulate, "0", "probe detector dark counts, 1/s"},
    {"detector_probe", "saturation_rate_per_s", FieldType::Number, kSimulate, "0", "probe detector maximum incident rate, 1/s (0 = none)"},

    {"correlation", "bin_width_ps", FieldType::Integer, kCorrelate, "1000", "histogram bin width, ps"},
    {"correlation", "window_min_ps", FieldType::Integer, kCorrelate, "-500000", "lower edge of the delay window, ps"},
    {"correlation", "window_max_ps", FieldType::Integer, kCorrelate, "500000", "upper edge of the delay window, ps"},
    {"correlation", "chunk_ps", FieldType::Integer, kCorrelate, "0", "process the acquisition in time chunks of this length, ps (0 = whole)"},
    {"correlation", "threads", FieldType::Integer, kCorrelate, "0", "worker threads (0 = OpenMP default)"},
    {"correlation", "duration_s", FieldType::Number, kCorrelate, "0", "acquisition time of the input, s (0 = latest timestamp)"},

    {"fit", "max_iterations", FieldType::Integer, kAnalysis, "200", "iteration limit of the fit"},
    {"fit", "tolerance", FieldType::Number, kAnalysis, "1e-10", "relative chi-squared change that ends the fit"},

    {"snr", "rate_per_s", FieldType::Number, kSnr, "0", "detected rate r, 1/s (default from the histogram metadata)", "rate"},
    {"snr", "v2", FieldType::Number, kSnr, "0", "squared visibility, for prediction without a histogram", "v2"},
    {"snr", "tauc_ns", FieldType::Number, kSnr, "0", "coherence time, ns, for prediction without a histogram", "tauc-ns"},
    {"snr", "dt_ms", FieldType::Number, kSnr, "0", "integration time, ms (default from the histogram metadata)", "dt-ms"},

    {"output", "tags_path", FieldType::Text, kSimulate | kCorrelate, "\"tags.bin\"", "tag file written by simulate and read by correlate"},
    {"output", "format", FieldType::Text, kSimulate | kConvert, "\"binary\"", "tag file format: binary or text"},
    {"output", "resolution_ps", FieldType::Integer, kSimulate | kConvert, "1", "tag file time resolution, ps"},
    {"output", "quantization", FieldType::Text, kSimulate | kConvert, "\"exact\"", "exact, or rounded to the nearest resolution step"},
    {"output", "histogram_path", FieldType::Text, kCorrelate | kAnalysis, "\"g2.csv\"", "histogram CSV written by correlate and read by fit, range and snr"},
    {"output", "result_path", FieldType::Text, kAnalysis, "\"\"", "result document path (empty = none)"},
    {"output", "result_format", FieldType::Text, kAnalysis, "\"json\"", "result document format: json or kv"},
};

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : kFields) {
    if (section == f.section && key == f.key) {
      return &f;
    }
  }
  return nullptr;
}

bool type_matches(const Field& f, const nlohmann::json& v) {
  switch (f.type) {
    case FieldType::Number:
      return v.is_number();
    case FieldType::Integer:
      return v.is_number_integer() || (v.is_number_float() && std::trunc(v.get<double>()) == v.get<double>());
    case FieldType::Text:
      return v.is_string();
  }
  return false;
}

double num(const RunConfig& c, const char* section, const char* key) { return c.at(section).at(key).get<double>(); }

std::int64_t integer(const RunConfig& c, const char* section, const char* key) {
  return c.at(section).at(key).get<std::int64_t>();
}

DetectorSpec detector_from(const RunConfig& c, const char* section) {
  DetectorSpec d;
  d.efficiency = num(c, section, "efficiency");
  d.jitter_fwhm = picoseconds(num(c, section, "jitter_fwhm_ps"));
  d.dead_time = nanoseconds(num(c, section, "dead_time_ns"));
  d.dark_rate = per_second(num(c, section, "dark_rate_per_s"));
  const double saturation = num(c, section, "saturation_rate_per_s");
  d.saturation_rate = per_second(saturation > 0.0 ? saturation : std::numeric_limits<double>::infinity());
  return d;
}

}  // namespace

std::span<const Field> fields() { return kFields; }

std::string flag_name(const Field& field) {
  std::string name = "--";
  if (field.flag != nullptr) {
    return name + field.flag;
  }
  const std::string_view section = field.section;
  if (section == "detector_ref") {
    name += "ref-";
  } else if (section == "detector_probe") {
    name += "probe-";
  }
  for (const char* p = field.key; *p != '\0'; ++p) {
    name += *p == '_' ? '-' : *p;
  }
  return name;
}

RunConfig default_config() {
  RunConfig config = RunConfig::object();
  for (const auto& f : kFields) {
    config[f.section][f.key] = nlohmann::ordered_json::parse(f.default_value);
  }
  return config;
}

void apply_overlay(RunConfig& config, const nlohmann::json& doc, const std::string& origin) {
  if (!doc.is_object()) {
    throw ConfigError(origin + ": top level must be an object");
  }
  for (const auto& [section, values] : doc.items()) {
    if (!config.contains(section)) {
      throw ConfigError(origin + ": unknown section '" + section + "'");
    }
    if (!values.is_object()) {
      throw ConfigError(origin + ": section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : values.items()) {
      const Field* f = find_field(section, key);
      if (f == nullptr) {
        throw ConfigError(origin + ": unknown key '" + section + "." + key + "'");
      }
      if (!type_matches(*f, value)) {
        throw ConfigError(origin + ": '" + section + "." + key + "' has the wrong type");
      }
      if (f->type == FieldType::Integer && value.is_number_float()) {
        config[section][key] = static_cast<std::int64_t>(value.get<double>());
      } else {
        config[section][key] = value;
      }
    }
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig config = default_config();
  apply_overlay(config, doc, path.string());
  return config;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : embedded_presets()) {
    names.emplace_back(p.name);
  }
  return names;
}

std::optional<std::string_view> preset_text(std::string_view name) {
  for (const auto& p : embedded_presets()) {
    if (p.name == name) {
      return p.text;
    }
  }
  return std::nullopt;
}

ScenarioConfig scenario_from(const RunConfig& c) {
  ScenarioConfig s;
  s.source = SourceSpec::from_coherence_time(nanometers(num(c, "scenario", "wavelength_nm")),
                                             nanoseconds(num(c, "scenario", "coherence_time_ns")),
                                             per_second(num(c, "scenario", "photon_rate_per_s")));
  s.distance = meters(num(c, "scenario", "distance_m"));
  const double n = num(c, "scenario", "refractive_index");
  if (!(n >= 1.0)) {
    throw ConfigError("refractive_index must be >= 1");
  }
  s.medium = Medium::with_index(n);
  s.split_ref = num(c, "scenario", "split_ref");
  s.split_probe = num(c, "scenario", "split_probe");
  s.probe_round_trip_transmission = num(c, "scenario", "probe_transmission");
  s.ambient_rate_ref = per_second(num(c, "scenario", "ambient_rate_ref_per_s"));
  s.ambient_rate_probe = per_second(num(c, "scenario", "ambient_rate_probe_per_s"));
  s.duration = seconds(num(c, "scenario", "duration_s"));
  const std::int64_t seed = integer(c, "scenario", "seed");
  if (seed < 0) {
    throw ConfigError("seed must be non-negative");
  }
  s.seed = static_cast<std::uint64_t>(seed);
  s.field_step = picoseconds(num(c, "scenario", "field_step_ps"));
  s.detector_ref = detector_from(c, "detector_ref");
  s.detector_probe = detector_from(c, "detector_probe");
  s.validate();
  return s;
}

CorrelationConfig correlation_from(const RunConfig& c) {
  return CorrelationConfig::make(Tick{integer(c, "correlation", "bin_width_ps")},
                                 Tick{integer(c, "correlation", "window_min_ps")},
                                 Tick{integer(c, "correlation", "window_max_ps")});
}

FitOptions fit_options_from(const RunConfig& c) {
  FitOptions o;
  o.max_iterations = static_cast<int>(integer(c, "fit", "max_iterations"));
  o.tolerance = num(c, "fit", "tolerance");
  if (o.max_iterations < 1 || !(o.tolerance > 0.0)) {
    throw ConfigError("fit needs max_iterations >= 1 and tolerance > 0");
  }
  return o;
}

Quantization quantization_from(const RunConfig& c) {
  const std::string q = c.at("output").at("quantization").get<std::string>();
  if (q == "exact") {
    return Quantization::Exact;
  }
  if (q == "rounded") {
    return Quantization::Rounded;
  }
  throw ConfigError("quantization must be 'exact' or 'rounded', got '" + q + "'");
}

nlohmann::ordered_json truth_document(const ScenarioTruth& truth, const RunConfig& config) {
  nlohmann::ordered_json j;
  j["seed"] = truth.seed;
  j["distance_m"] = truth.distance.value();
  j["refractive_index"] = truth.refractive_index;
  j["delay_ps"] = truth.delay.count;
  j["coherence_time_s"] = truth.coherence_time.value();
  j["field_step_s"] = truth.field_step.value();
  j["duration_s"] = truth.duration.value();
  j["signal_rate_ref_per_s"] = truth.signal_rate_ref.value();
  j["signal_rate_probe_per_s"] = truth.signal_rate_probe.value();
  j["background_rate_ref_per_s"] = truth.background_rate_ref.value();
  j["background_rate_probe_per_s"] = truth.background_rate_probe.value();
  j["signal_fraction_ref"] = truth.signal_fraction_ref();
  j["signal_fraction_probe"] = truth.signal_fraction_probe();
  j["expected_amplitude"] = truth.expected_amplitude();
  j["detected_ref"] = truth.detected_ref;
  j["detected_probe"] = truth.detected_probe;
  j["config"] = config;
  return j;
}

}  // namespace hbt::cli
