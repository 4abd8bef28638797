#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <system_error>

#include "hbt/correlator.hpp"
#include "hbt/errors.hpp"

namespace hbt {

namespace {

// Shortest representation that round-trips.
void put_number(std::ostream& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

void put_number(std::ostream& out, std::uint64_t v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

constexpr const char* kCsvHeader = "tau_ps,counts,g2,sigma";

}  // namespace

G2Curve normalize_g2(const CorrelationHistogram& h) {
  if (h.n_a == 0 || h.n_b == 0) {
    throw ConfigError("cannot normalize a histogram with an empty stream");
  }
  if (h.duration.count <= 0) {
    throw ConfigError("cannot normalize a histogram with zero acquisition time");
  }
  const double w = static_cast<double>(h.config.bin_width.count);
  const double scale = static_cast<double>(h.duration.count) /
                       (static_cast<double>(h.n_a) * static_cast<double>(h.n_b) * w);
  G2Curve curve;
  curve.bin_width = to_seconds(h.config.bin_width);
  curve.points.reserve(h.counts.size());
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const auto c = static_cast<double>(h.counts[k]);
    curve.points.push_back({picoseconds(h.config.bin_center_ps(k)), c * scale,
                            std::sqrt(std::max(c, 1.0)) * scale});
  }
  return curve;
}

void write_histogram_csv(const CorrelationHistogram& h, std::ostream& out) {
  const G2Curve curve = normalize_g2(h);
  out << kCsvHeader << '\n';
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    put_number(out, h.config.bin_center_ps(k));
    out << ',';
    put_number(out, h.counts[k]);
    out << ',';
    put_number(out, curve.points[k].g2);
    out << ',';
    put_number(out, curve.points[k].sigma);
    out << '\n';
  }
}

G2Curve read_g2_csv(std::istream& in) {
  std::string line;
  std::uint64_t line_no = 1;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw FormatError(FormatError::Kind::MalformedLine, line_no,
                      "line 1: expected header '" + std::string(kCsvHeader) + "'");
  }
  G2Curve curve;
  std::vector<double> taus_ps;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    double fields[4];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int f = 0; f < 4; ++f) {
      auto res = std::from_chars(p, end, fields[f]);
      const bool want_comma = f < 3;
      if (res.ec != std::errc{} || (want_comma ? (res.ptr == end || *res.ptr != ',') : res.ptr != end)) {
        throw FormatError(FormatError::Kind::MalformedLine, line_no,
                          "line " + std::to_string(line_no) + ": malformed histogram row");
      }
      p = res.ptr + (want_comma ? 1 : 0);
    }
    taus_ps.push_back(fields[0]);
    curve.points.push_back({picoseconds(fields[0]), fields[2], fields[3]});
  }
  if (taus_ps.size() < 2) {
    throw FormatError(FormatError::Kind::MalformedLine, line_no,
                      "histogram needs at least two rows to infer the bin width");
  }
  const double width = taus_ps[1] - taus_ps[0];
  for (std::size_t k = 1; k < taus_ps.size(); ++k) {
    if (!(width > 0.0) || std::abs((taus_ps[k] - taus_ps[k - 1]) - width) > 1e-6 * width) {
      throw FormatError(FormatError::Kind::MalformedLine, k + 2,
                        "line " + std::to_string(k + 2) + ": tau column is not uniformly spaced");
    }
  }
  curve.bin_width = picoseconds(width);
  return curve;
}

}  // namespace hbt
