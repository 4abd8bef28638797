#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "hbt/cli.hpp"
#include "hbt/errors.hpp"

namespace hbt::cli {

namespace {

struct CommandSpec {
  Command id;
  const char* name;
  const char* description;
};

constexpr CommandSpec kCommands[] = {
    {kSimulate, "simulate", "Simulate a two-detector thermal-light ranging run and write a tag file plus truth JSON"},
    {kCorrelate, "correlate", "Histogram the reference-to-probe delays of a two-channel tag file into a g2 CSV"},
    {kFit, "fit", "Fit the bunching peak of a g2 CSV"},
    {kRange, "range", "Fit a g2 CSV and convert the peak delay to a target distance"},
    {kSnr, "snr", "Predict the signal-to-noise ratio, or measure it from a g2 CSV"},
    {kConvert, "convert", "Convert tag files between the binary and text formats"},
};

// Everything one subcommand collected from the command line.
struct Invocation {
  const CommandSpec* spec = nullptr;
  CLI::App* app = nullptr;
  std::string config_path;
  std::string preset;
  std::string out_path;
  std::string window;
  bool seed_from_entropy = false;
  std::vector<std::string> positional;
  std::map<const Field*, std::string> flags;
};

nlohmann::ordered_json parse_flag_value(const Field& f, const std::string& text) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  switch (f.type) {
    case FieldType::Number: {
      double v = 0.0;
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw ConfigError(flag_name(f) + ": expected a number, got '" + text + "'");
      }
      return v;
    }
    case FieldType::Integer: {
      std::int64_t v = 0;
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw ConfigError(flag_name(f) + ": expected an integer, got '" + text + "'");
      }
      return v;
    }
    case FieldType::Text:
      return text;
  }
  return nullptr;
}

std::pair<std::int64_t, std::int64_t> parse_window(const std::string& text) {
  const auto colon = text.find(':', 1);
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  if (colon != std::string::npos) {
    const char* mid = text.data() + colon;
    const char* end = text.data() + text.size();
    const auto a = std::from_chars(text.data(), mid, lo);
    const auto b = std::from_chars(mid + 1, end, hi);
    if (a.ec == std::errc() && a.ptr == mid && b.ec == std::errc() && b.ptr == end) {
      return {lo, hi};
    }
  }
  throw ConfigError("--window-ps: expected MIN:MAX in ps, got '" + text + "'");
}

RunConfig effective_config(const Invocation& inv) {
  RunConfig config = default_config();
  if (!inv.preset.empty()) {
    const auto text = preset_text(inv.preset);
    if (!text) {
      std::string known;
      for (const auto& n : preset_names()) {
        known += (known.empty() ? "" : ", ") + n;
      }
      throw ConfigError("unknown preset '" + inv.preset + "' (known: " + known + ")");
    }
    apply_overlay(config, nlohmann::json::parse(*text), "preset " + inv.preset);
  }
  if (!inv.config_path.empty()) {
    std::ifstream in(inv.config_path);
    if (!in) {
      throw IoError("cannot open config " + inv.config_path);
    }
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(inv.config_path + ": " + e.what());
    }
    apply_overlay(config, doc, inv.config_path);
  }
  for (const auto& [field, text] : inv.flags) {
    config[field->section][field->key] = parse_flag_value(*field, text);
  }
  if (!inv.window.empty()) {
    const auto [lo, hi] = parse_window(inv.window);
    config["correlation"]["window_min_ps"] = lo;
    config["correlation"]["window_max_ps"] = hi;
  }
  if (!inv.out_path.empty()) {
    const char* key = inv.spec->id == kSimulate ? "tags_path" : inv.spec->id == kCorrelate ? "histogram_path" : "result_path";
    config["output"][key] = inv.out_path;
  }
  return config;
}

std::string text_at(const RunConfig& c, const char* section, const char* key) {
  return c.at(section).at(key).get<std::string>();
}

bool text_format(const std::string& format) {
  if (format == "text") {
    return true;
  }
  if (format == "binary") {
    return false;
  }
  throw ConfigError("format must be 'binary' or 'text', got '" + format + "'");
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.flush();
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
}

std::filesystem::path meta_path(const std::filesystem::path& csv) { return csv.string() + ".meta.json"; }

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Two-column aligned table.
class Table {
public:
  void row(std::string label, std::string value) { rows_.emplace_back(std::move(label), std::move(value)); }
  void print(std::ostream& out) const {
    std::size_t width = 0;
    for (const auto& r : rows_) {
      width = std::max(width, r.first.size());
    }
    for (const auto& r : rows_) {
      out << "  " << std::left << std::setw(static_cast<int>(width)) << r.first << "  " << r.second << '\n';
    }
  }

private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

std::string with_sigma(double v, double sigma, double scale, const char* unit) {
  return fmt(v * scale, 8) + " +/- " + fmt(sigma * scale, 3) + " " + unit;
}

void fit_table(const FitResult& f, Table& t) {
  t.row("baseline B", with_sigma(f.baseline, f.baseline_sigma, 1.0, ""));
  t.row("amplitude A (V^2)", with_sigma(f.amplitude, f.amplitude_sigma, 1.0, ""));
  t.row("delay tau0", with_sigma(f.delay.value(), f.delay_sigma.value(), 1e9, "ns"));
  t.row("coherence time tau_c", with_sigma(f.coherence_time.value(), f.coherence_time_sigma.value(), 1e9, "ns"));
  t.row("peak g2 (bin)", fmt(f.peak_g2()));
  t.row("reduced chi2", fmt(f.reduced_chi2, 4) + " (" + std::to_string(f.n_points) + " points, " +
                            std::to_string(f.n_free_params) + " parameters)");
  t.row("converged", (f.converged ? "yes" : "no") + std::string(" after ") + std::to_string(f.iterations) + " iterations");
}

void write_result(const RunConfig& config, const nlohmann::ordered_json& doc) {
  const std::string path = text_at(config, "output", "result_path");
  if (path.empty()) {
    return;
  }
  const std::string format = text_at(config, "output", "result_format");
  if (format == "json") {
    write_file(path, doc.dump(2) + "\n");
  } else if (format == "kv") {
    std::ostringstream kv;
    kv.precision(17);
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object()) {
        for (const auto& [sub, inner] : value.items()) {
          kv << key << '.' << sub << '=' << inner.dump() << '\n';
        }
      } else {
        kv << key << '=' << value.dump() << '\n';
      }
    }
    write_file(path, kv.str());
  } else {
    throw ConfigError("result_format must be 'json' or 'kv', got '" + format + "'");
  }
}

std::filesystem::path input_or(const Invocation& inv, const RunConfig& config, const char* key) {
  if (!inv.positional.empty()) {
    return inv.positional.front();
  }
  return text_at(config, "output", key);
}

G2Curve load_curve(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open histogram " + path.string());
  }
  return read_g2_csv(in);
}

int cmd_simulate(const Invocation& inv, RunConfig config, std::ostream& out) {
  if (inv.seed_from_entropy) {
    std::random_device entropy;
    const std::uint64_t seed = (static_cast<std::uint64_t>(entropy()) << 31) ^ entropy();
    config["scenario"]["seed"] = static_cast<std::int64_t>(seed >> 1);
  }
  const ScenarioConfig scenario = scenario_from(config);
  const std::filesystem::path path = text_at(config, "output", "tags_path");
  const bool text = text_format(text_at(config, "output", "format"));
  const std::int64_t resolution = config.at("output").at("resolution_ps").get<std::int64_t>();
  if (resolution < 1) {
    throw ConfigError("resolution_ps must be at least 1");
  }
  const Quantization mode = quantization_from(config);

  const ScenarioResult result = simulate_ranging_scenario(scenario);
  const std::vector<EventStream> streams{result.reference, result.probe};
  if (text) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
      throw IoError("cannot open " + path.string() + " for writing");
    }
    write_text_tags(streams, static_cast<std::uint64_t>(resolution), file, mode);
    file.flush();
    if (!file) {
      throw IoError("write to " + path.string() + " failed");
    }
  } else {
    write_tags(streams, static_cast<std::uint64_t>(resolution), path, mode);
  }
  const std::filesystem::path truth_path = path.string() + ".truth.json";
  write_file(truth_path, truth_document(result.truth, config).dump(2) + "\n");

  Table t;
  t.row("seed", std::to_string(result.truth.seed));
  t.row("duration", fmt(scenario.duration.value()) + " s");
  t.row("true delay tau0", fmt(to_seconds(result.truth.delay).value() * 1e9, 8) + " ns");
  t.row("true distance", fmt(scenario.distance.value(), 8) + " m");
  t.row("reference events", std::to_string(result.truth.detected_ref));
  t.row("probe events", std::to_string(result.truth.detected_probe));
  t.row("expected amplitude", fmt(result.truth.expected_amplitude()));
  t.row("tag file", path.string());
  t.row("truth", truth_path.string());
  t.print(out);
  return 0;
}

int cmd_correlate(const Invocation& inv, const RunConfig& config, std::ostream& out) {
  const std::filesystem::path input = input_or(inv, config, "tags_path");
  TagFile file = read_any_tags(input);
  if (file.streams.size() != 2) {
    throw ConfigError(input.string() + ": expected 2 channels, file has " + std::to_string(file.streams.size()));
  }
  for (const auto& s : file.streams) {
    if (s.empty()) {
      throw ConfigError(input.string() + ": no events on channel " + std::to_string(s.channel));
    }
  }
  const double duration_s = config.at("correlation").at("duration_s").get<double>();
  if (duration_s < 0.0) {
    throw ConfigError("duration_s must be non-negative");
  }
  if (duration_s > 0.0) {
    const Tick duration = to_ticks(seconds(duration_s));
    if (duration < file.streams[0].duration) {
      throw ConfigError("duration_s is shorter than the latest timestamp in the file");
    }
    for (auto& s : file.streams) {
      s.duration = duration;
    }
  }
  const CorrelationConfig cc = correlation_from(config);
  const std::int64_t chunk = config.at("correlation").at("chunk_ps").get<std::int64_t>();
  const std::int64_t threads = config.at("correlation").at("threads").get<std::int64_t>();
  if (chunk < 0 || threads < 0) {
    throw ConfigError("chunk_ps and threads must be non-negative");
  }
  const CorrelationHistogram h = chunk > 0 ? cross_correlate_chunked(file.streams[0], file.streams[1], cc, Tick{chunk})
                                           : cross_correlate(file.streams[0], file.streams[1], cc, static_cast<int>(threads));

  const std::filesystem::path csv = text_at(config, "output", "histogram_path");
  std::ostringstream body;
  write_histogram_csv(h, body);
  write_file(csv, body.str());
  nlohmann::ordered_json meta;
  meta["input"] = input.string();
  meta["n_a"] = h.n_a;
  meta["n_b"] = h.n_b;
  meta["duration_ps"] = h.duration.count;
  meta["bin_width_ps"] = cc.bin_width.count;
  meta["window_min_ps"] = cc.window_min.count;
  meta["window_max_ps"] = cc.window_max.count;
  meta["total_pairs"] = h.total_pairs();
  write_file(meta_path(csv), meta.dump(2) + "\n");

  Table t;
  t.row("reference events", std::to_string(h.n_a));
  t.row("probe events", std::to_string(h.n_b));
  t.row("acquisition", fmt(to_seconds(h.duration).value(), 9) + " s");
  t.row("pairs in window", std::to_string(h.total_pairs()));
  t.row("bins", std::to_string(cc.bin_count()) + " x " + std::to_string(cc.bin_width.count) + " ps");
  t.row("histogram", csv.string());
  t.print(out);
  return 0;
}

int cmd_fit(const Invocation& inv, const RunConfig& config, std::ostream& out, std::ostream& err, bool range) {
  const G2Curve curve = load_curve(input_or(inv, config, "histogram_path"));
  const FitResult fit = fit_g2(curve, fit_options_from(config));
  nlohmann::ordered_json doc = to_json(fit);
  Table t;
  fit_table(fit, t);
  if (!fit.converged) {
    t.print(out);
    write_result(config, doc);
    err << "hbtlidar: error: fit did not converge within " << fit.iterations << " iterations\n";
    return 1;
  }
  if (range) {
    const Medium medium = Medium::with_index(config.at("scenario").at("refractive_index").get<double>());
    const RangeEstimate r = estimate_range(fit, medium);
    doc["range"] = to_json(r);
    t.row("distance d", fmt(r.distance.value(), 9) + " +/- " + fmt(r.sigma.value(), 3) + " m");
  }
  t.print(out);
  write_result(config, doc);
  return 0;
}

int cmd_snr(const Invocation& inv, const RunConfig& config, std::ostream& out) {
  const auto& s = config.at("snr");
  double rate = s.at("rate_per_s").get<double>();
  double dt_ms = s.at("dt_ms").get<double>();
  Table t;
  nlohmann::ordered_json doc;
  if (inv.positional.empty()) {
    const double v2 = s.at("v2").get<double>();
    const double tauc_ns = s.at("tauc_ns").get<double>();
    const double snr = snr_predict(per_second(rate), v2, nanoseconds(tauc_ns), milliseconds(dt_ms));
    doc["predicted_snr"] = snr;
    doc["rate_per_s"] = rate;
    doc["v2"] = v2;
    doc["coherence_time_s"] = tauc_ns * 1e-9;
    doc["integration_s"] = dt_ms * 1e-3;
    t.row("predicted SNR", fmt(snr, 3));
    t.print(out);
    write_result(config, doc);
    return 0;
  }

  const std::filesystem::path csv = inv.positional.front();
  const G2Curve curve = load_curve(csv);
  const FitResult fit = fit_g2(curve, fit_options_from(config));
  if (rate <= 0.0 || dt_ms <= 0.0) {
    std::ifstream in(meta_path(csv));
    if (!in) {
      throw ConfigError("no " + meta_path(csv).string() + "; pass --rate and --dt-ms");
    }
    const auto meta = nlohmann::json::parse(in);
    const double duration_s = meta.at("duration_ps").get<double>() * 1e-12;
    if (rate <= 0.0) {
      rate = std::sqrt(meta.at("n_a").get<double>() * meta.at("n_b").get<double>()) / duration_s;
    }
    if (dt_ms <= 0.0) {
      dt_ms = duration_s * 1e3;
    }
  }
  const SnrReport report = snr_measure(curve, fit, per_second(rate), milliseconds(dt_ms));
  doc = to_json(report);
  doc["fit"] = to_json(fit);
  t.row("rate r", fmt(rate) + " /s");
  t.row("integration", fmt(dt_ms) + " ms");
  t.row("fitted V^2", fmt(fit.amplitude));
  t.row("fitted tau_c", fmt(fit.coherence_time.value() * 1e9) + " ns");
  t.row("predicted SNR", fmt(report.predicted_snr, 3));
  t.row("measured SNR", report.measured_finite ? fmt(report.measured_snr, 4) : std::string("inf (zero residuals)"));
  t.row("off-peak bins", std::to_string(report.off_peak_bins));
  t.print(out);
  write_result(config, doc);
  if (!fit.converged) {
    return 1;
  }
  return 0;
}

int cmd_convert(const Invocation& inv, const RunConfig& config, std::ostream& out) {
  if (inv.positional.size() != 2) {
    throw ConfigError("convert needs INPUT and OUTPUT paths");
  }
  const std::filesystem::path input = inv.positional[0];
  const std::filesystem::path output = inv.positional[1];
  const TagFile file = read_any_tags(input);

  auto given = [&](const char* key) {
    for (const auto& [field, value] : inv.flags) {
      if (std::string_view(field->section) == "output" && std::string_view(field->key) == key) {
        return true;
      }
    }
    return false;
  };
  bool text = false;
  if (given("format")) {
    text = text_format(text_at(config, "output", "format"));
  } else {
    const std::string ext = output.extension().string();
    text = ext == ".txt" || ext == ".csv";
  }
  const std::uint64_t resolution = given("resolution_ps")
                                       ? static_cast<std::uint64_t>(config.at("output").at("resolution_ps").get<std::int64_t>())
                                       : file.header.resolution_ps;
  const Quantization mode = given("quantization") ? quantization_from(config) : file.quantization;
  if (resolution < 1) {
    throw ConfigError("resolution_ps must be at least 1");
  }
  if (text) {
    std::ofstream f(output, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw IoError("cannot open " + output.string() + " for writing");
    }
    write_text_tags(file.streams, resolution, f, mode);
    f.flush();
    if (!f) {
      throw IoError("write to " + output.string() + " failed");
    }
  } else {
    write_tags(file.streams, resolution, output, mode);
  }
  std::size_t events = 0;
  for (const auto& s : file.streams) {
    events += s.size();
  }
  Table t;
  t.row("channels", std::to_string(file.streams.size()));
  t.row("events", std::to_string(events));
  t.row("resolution", std::to_string(resolution) + " ps");
  t.row("written", output.string() + (text ? " (text)" : " (binary)"));
  t.print(out);
  return 0;
}

}  // namespace

TagFile read_any_tags(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  char magic[8] = {};
  in.read(magic, sizeof magic);
  const bool binary = in.gcount() == 8 && std::string_view(magic, 8) == "BLTTAG01";
  in.clear();
  in.seekg(0);
  return binary ? read_tags(in) : read_text_tags(in);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermal-light intensity-interferometry ranging: simulate, correlate, fit.", "hbtlidar"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");

  std::vector<std::unique_ptr<Invocation>> invocations;
  for (const auto& spec : kCommands) {
    auto inv = std::make_unique<Invocation>();
    inv->spec = &spec;
    CLI::App* sub = app.add_subcommand(spec.name, spec.description);
    inv->app = sub;
    sub->add_option("--config", inv->config_path, "JSON run configuration file");
    sub->add_option("--preset", inv->preset, "built-in configuration: short-range, long-range-1km, long-range-2km");
    switch (spec.id) {
      case kSimulate:
        sub->add_option("--out", inv->out_path, "tag file to write (same as --tags-path)");
        sub->add_flag("--seed-from-entropy", inv->seed_from_entropy,
                      "draw the seed from the system entropy source; it is recorded in the truth file");
        break;
      case kCorrelate:
        sub->add_option("input", inv->positional, "tag file (default: --tags-path)");
        sub->add_option("--out", inv->out_path, "histogram CSV to write (same as --histogram-path)");
        sub->add_option("--window-ps", inv->window, "delay window MIN:MAX, ps");
        break;
      case kFit:
      case kRange:
        sub->add_option("histogram", inv->positional, "g2 CSV (default: --histogram-path)");
        sub->add_option("--out", inv->out_path, "result document to write (same as --result-path)");
        break;
      case kSnr:
        sub->add_option("histogram", inv->positional, "g2 CSV to measure; without it the SNR is only predicted");
        sub->add_option("--out", inv->out_path, "result document to write (same as --result-path)");
        break;
      case kConvert:
        sub->add_option("paths", inv->positional, "INPUT OUTPUT tag files")->expected(2);
        break;
    }
    for (const auto& f : fields()) {
      if ((f.commands & spec.id) == 0) {
        continue;
      }
      std::string help = f.help;
      help += " [";
      help += f.default_value;
      help += "]";
      Invocation* raw = inv.get();
      const Field* field = &f;
      sub->add_option_function<std::string>(
          flag_name(f), [raw, field](const std::string& v) { raw->flags[field] = v; }, help)
          ->type_name(f.type == FieldType::Number ? "NUM" : f.type == FieldType::Integer ? "INT" : "TEXT");
    }
    invocations.push_back(std::move(inv));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  const Invocation* inv = nullptr;
  for (const auto& candidate : invocations) {
    if (candidate->app->parsed()) {
      inv = candidate.get();
    }
  }
  if (inv == nullptr) {
    err << "hbtlidar: error: no subcommand\n";
    return 1;
  }

  try {
    const RunConfig config = effective_config(*inv);
    switch (inv->spec->id) {
      case kSimulate:
        return cmd_simulate(*inv, config, out);
      case kCorrelate:
        return cmd_correlate(*inv, config, out);
      case kFit:
        return cmd_fit(*inv, config, out, err, false);
      case kRange:
        return cmd_fit(*inv, config, out, err, true);
      case kSnr:
        return cmd_snr(*inv, config, out);
      case kConvert:
        return cmd_convert(*inv, config, out);
    }
  } catch (const ConfigError& e) {
    err << "hbtlidar: error: " << e.what() << '\n';
    return 1;
  } catch (const DomainError& e) {
    err << "hbtlidar: error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    err << "hbtlidar: error: " << e.what() << '\n';
    return 1;
  } catch (const FitError& e) {
    err << "hbtlidar: error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    err << "hbtlidar: error: " << e.what() << '\n';
    return 1;
  } catch (const OverflowError& e) {
    err << "hbtlidar: error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "hbtlidar: error: malformed JSON: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "hbtlidar: internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace hbt::cli
