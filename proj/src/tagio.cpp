#include "hbt/tagio.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>

#include "hbt/errors.hpp"

namespace hbt {

namespace {

constexpr std::array<unsigned char, 8> kMagic{'B', 'L', 'T', 'T', 'A', 'G', '0', '1'};
constexpr std::size_t kChecksumOffset = 28;
constexpr std::size_t kRecordsPerChunk = 4096;

template <typename T>
void put_le(unsigned char* p, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    p[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

std::string offset_text(std::uint64_t offset) { return " at offset " + std::to_string(offset); }

// One stream converted to resolution units, ready to merge.
struct Lane {
  std::uint8_t channel;
  std::vector<std::uint64_t> units;
  std::size_t next = 0;
};

std::vector<Lane> quantize(std::span<const EventStream> streams, std::uint64_t resolution_ps, Quantization mode,
                           std::uint16_t& channel_count) {
  if (resolution_ps == 0) {
    throw ConfigError("resolution_ps must be at least 1");
  }
  std::array<bool, 256> seen{};
  channel_count = 0;
  std::vector<Lane> lanes;
  lanes.reserve(streams.size());
  for (const auto& s : streams) {
    if (seen[s.channel]) {
      throw ConfigError("duplicate channel " + std::to_string(s.channel));
    }
    seen[s.channel] = true;
    channel_count = std::max<std::uint16_t>(channel_count, static_cast<std::uint16_t>(s.channel + 1));
    if (!s.is_sorted()) {
      throw PreconditionError("channel " + std::to_string(s.channel) + " is not sorted");
    }
    Lane lane{s.channel, {}, 0};
    lane.units.reserve(s.size());
    for (const Tick t : s.times) {
      if (t.count < 0) {
        throw PreconditionError("negative timestamp on channel " + std::to_string(s.channel));
      }
      const auto ps = static_cast<std::uint64_t>(t.count);
      if (mode == Quantization::Exact) {
        if (ps % resolution_ps != 0) {
          throw ConfigError("time " + std::to_string(ps) + " ps is not a multiple of resolution " +
                            std::to_string(resolution_ps) + " ps; use rounded quantization");
        }
        lane.units.push_back(ps / resolution_ps);
      } else {
        lane.units.push_back(ps / resolution_ps + (ps % resolution_ps >= (resolution_ps + 1) / 2 ? 1 : 0));
      }
    }
    lanes.push_back(std::move(lane));
  }
  std::sort(lanes.begin(), lanes.end(), [](const Lane& a, const Lane& b) { return a.channel < b.channel; });
  return lanes;
}

// Visits events in global (time, channel) order. Lanes are sorted by channel,
// so the first lane holding the minimum time wins ties.
template <typename Visit>
void merge_lanes(std::vector<Lane>& lanes, Visit&& visit) {
  for (;;) {
    Lane* best = nullptr;
    for (auto& lane : lanes) {
      if (lane.next < lane.units.size() && (best == nullptr || lane.units[lane.next] < best->units[best->next])) {
        best = &lane;
      }
    }
    if (best == nullptr) {
      return;
    }
    visit(best->units[best->next], best->channel);
    ++best->next;
  }
}

std::array<unsigned char, TagFileHeader::kSize> encode_header(std::uint64_t resolution_ps,
                                                              std::uint16_t channel_count) {
  std::array<unsigned char, TagFileHeader::kSize> h{};
  std::copy(kMagic.begin(), kMagic.end(), h.begin());
  put_le<std::uint32_t>(h.data() + 8, TagFileHeader::kVersion);
  put_le<std::uint64_t>(h.data() + 12, resolution_ps);
  put_le<std::uint16_t>(h.data() + 20, channel_count);
  put_le<std::uint32_t>(h.data() + kChecksumOffset, header_checksum(h));
  return h;
}

TagFile make_file(std::uint64_t resolution_ps, std::uint16_t channel_count) {
  TagFile file;
  file.header.resolution_ps = resolution_ps;
  file.header.channel_count = channel_count;
  file.streams.resize(channel_count);
  for (std::uint16_t c = 0; c < channel_count; ++c) {
    file.streams[c].channel = static_cast<std::uint8_t>(c);
    file.streams[c].origin = StreamOrigin::Loaded;
  }
  return file;
}

void finish(TagFile& file) {
  Tick last{0};
  for (const auto& s : file.streams) {
    if (!s.times.empty()) {
      last = std::max(last, s.times.back());
    }
  }
  for (auto& s : file.streams) {
    s.duration = last;
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return in;
}

void check_written(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) {
    throw IoError("write to " + path.string() + " failed");
  }
}

}  // namespace

std::uint32_t header_checksum(std::span<const unsigned char> header) {
  if (header.size() < kChecksumOffset) {
    throw PreconditionError("header checksum needs 28 bytes");
  }
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), header.data(), kChecksumOffset));
}

void write_tags(std::span<const EventStream> streams, std::uint64_t resolution_ps, std::ostream& out,
                Quantization mode) {
  std::uint16_t channel_count = 0;
  std::vector<Lane> lanes = quantize(streams, resolution_ps, mode, channel_count);
  const auto header = encode_header(resolution_ps, channel_count);
  out.write(reinterpret_cast<const char*>(header.data()), header.size());

  const unsigned char flags = mode == Quantization::Rounded ? 1 : 0;
  std::vector<unsigned char> buffer;
  buffer.reserve(kRecordsPerChunk * TagFileHeader::kRecordSize);
  merge_lanes(lanes, [&](std::uint64_t units, std::uint8_t channel) {
    unsigned char record[TagFileHeader::kRecordSize] = {};
    put_le<std::uint64_t>(record, units);
    record[8] = channel;
    record[9] = flags;
    buffer.insert(buffer.end(), record, record + sizeof record);
    if (buffer.size() == buffer.capacity()) {
      out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
      buffer.clear();
    }
  });
  out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
}

void write_tags(std::span<const EventStream> streams, std::uint64_t resolution_ps,
                const std::filesystem::path& path, Quantization mode) {
  auto out = open_out(path);
  write_tags(streams, resolution_ps, out, mode);
  check_written(out, path);
}

void write_tags(const TagFile& file, const std::filesystem::path& path) {
  write_tags(file.streams, file.header.resolution_ps, path, file.quantization);
}

TagFile read_tags(std::istream& in) {
  std::array<unsigned char, TagFileHeader::kSize> h{};
  in.read(reinterpret_cast<char*>(h.data()), h.size());
  const auto got = static_cast<std::size_t>(in.gcount());
  // A short file that is a prefix of the magic is truncated, anything else is not ours.
  const std::size_t magic_seen = std::min(got, kMagic.size());
  if (!std::equal(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(magic_seen), kMagic.begin())) {
    throw FormatError(FormatError::Kind::BadMagic, 0, "bad magic" + offset_text(0));
  }
  if (got < h.size()) {
    throw FormatError(FormatError::Kind::Truncated, got, "truncated header" + offset_text(got));
  }
  const auto version = get_le<std::uint32_t>(h.data() + 8);
  if (version != TagFileHeader::kVersion) {
    throw FormatError(FormatError::Kind::BadVersion, 8,
                      "unsupported version " + std::to_string(version) + offset_text(8));
  }
  for (std::size_t i = 22; i < kChecksumOffset; ++i) {
    if (h[i] != 0) {
      throw FormatError(FormatError::Kind::NonzeroReserved, i, "nonzero reserved byte" + offset_text(i));
    }
  }
  const auto stored = get_le<std::uint32_t>(h.data() + kChecksumOffset);
  if (stored != header_checksum(h)) {
    throw FormatError(FormatError::Kind::BadChecksum, kChecksumOffset,
                      "header checksum mismatch" + offset_text(kChecksumOffset));
  }
  const auto resolution = get_le<std::uint64_t>(h.data() + 12);
  if (resolution == 0 || resolution > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw FormatError(FormatError::Kind::BadHeader, 12, "invalid resolution_ps" + offset_text(12));
  }
  const auto channel_count = get_le<std::uint16_t>(h.data() + 20);
  if (channel_count > 256) {
    throw FormatError(FormatError::Kind::BadHeader, 20,
                      "channel_count " + std::to_string(channel_count) + " exceeds 256" + offset_text(20));
  }

  TagFile file = make_file(resolution, channel_count);
  const std::uint64_t max_units = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) / resolution;
  std::vector<unsigned char> buffer(kRecordsPerChunk * TagFileHeader::kRecordSize);
  std::uint64_t offset = TagFileHeader::kSize;
  std::uint64_t prev_units = 0;
  int prev_channel = -1;
  int mode_bit = -1;
  for (;;) {
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    if (n == 0) {
      break;
    }
    const std::size_t whole = n / TagFileHeader::kRecordSize;
    for (std::size_t r = 0; r < whole; ++r, offset += TagFileHeader::kRecordSize) {
      const unsigned char* rec = buffer.data() + r * TagFileHeader::kRecordSize;
      const auto units = get_le<std::uint64_t>(rec);
      const std::uint8_t channel = rec[8];
      const std::uint8_t flags = rec[9];
      if (channel >= channel_count) {
        throw FormatError(FormatError::Kind::BadChannel, offset + 8,
                          "channel " + std::to_string(channel) + " not below channel_count " +
                              std::to_string(channel_count) + offset_text(offset + 8));
      }
      if ((flags & ~1u) != 0 || (mode_bit >= 0 && (flags & 1) != mode_bit)) {
        throw FormatError(FormatError::Kind::BadFlags, offset + 9, "invalid record flags" + offset_text(offset + 9));
      }
      mode_bit = flags & 1;
      for (std::size_t i = 10; i < TagFileHeader::kRecordSize; ++i) {
        if (rec[i] != 0) {
          throw FormatError(FormatError::Kind::NonzeroReserved, offset + i,
                            "nonzero record padding" + offset_text(offset + i));
        }
      }
      if (units < prev_units || (units == prev_units && static_cast<int>(channel) < prev_channel)) {
        throw FormatError(FormatError::Kind::TimeRegression, offset, "time regression" + offset_text(offset));
      }
      if (units > max_units) {
        throw FormatError(FormatError::Kind::BadHeader, offset,
                          "timestamp overflows the picosecond range" + offset_text(offset));
      }
      prev_units = units;
      prev_channel = channel;
      file.streams[channel].times.push_back(Tick{static_cast<std::int64_t>(units * resolution)});
    }
    if (n % TagFileHeader::kRecordSize != 0) {
      throw FormatError(FormatError::Kind::Truncated, offset, "truncated record" + offset_text(offset));
    }
  }
  file.quantization = mode_bit == 1 ? Quantization::Rounded : Quantization::Exact;
  finish(file);
  return file;
}

TagFile read_tags(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tags(in);
}

void write_text_tags(std::span<const EventStream> streams, std::uint64_t resolution_ps, std::ostream& out,
                     Quantization mode) {
  std::uint16_t channel_count = 0;
  std::vector<Lane> lanes = quantize(streams, resolution_ps, mode, channel_count);
  out << "# resolution_ps=" << resolution_ps << '\n';
  out << "# channels=" << channel_count << '\n';
  out << "# quantization=" << (mode == Quantization::Rounded ? "rounded" : "exact") << '\n';
  merge_lanes(lanes, [&](std::uint64_t units, std::uint8_t channel) {
    // 20 digits, comma, 3 digits, newline.
    char buf[32];
    char* p = std::to_chars(buf, buf + 20, units * resolution_ps).ptr;
    *p++ = ',';
    p = std::to_chars(p, p + 3, static_cast<unsigned>(channel)).ptr;
    *p++ = '\n';
    out.write(buf, p - buf);
  });
}

void write_text_tags(const TagFile& file, std::ostream& out) {
  write_text_tags(file.streams, file.header.resolution_ps, out, file.quantization);
}

void write_text_tags(const TagFile& file, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_text_tags(file, out);
  check_written(out, path);
}

TagFile read_text_tags(std::istream& in) {
  std::string line;
  std::uint64_t line_no = 0;
  auto malformed = [&](const std::string& why) {
    return FormatError(FormatError::Kind::MalformedLine, line_no, "line " + std::to_string(line_no) + ": " + why);
  };
  auto parse_uint = [&](std::string_view text, std::uint64_t& value) {
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    return res.ec == std::errc() && res.ptr == text.data() + text.size() && !text.empty();
  };
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) {
      return false;
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    return true;
  };

  if (!next_line()) {
    line_no = 1;
    throw malformed("missing '# resolution_ps=N' header");
  }
  constexpr std::string_view kResolution = "# resolution_ps=";
  std::uint64_t resolution = 0;
  if (line.rfind(kResolution, 0) != 0 || !parse_uint(std::string_view(line).substr(kResolution.size()), resolution) ||
      resolution == 0) {
    throw malformed("expected '# resolution_ps=N' with N >= 1");
  }

  int declared_channels = -1;
  Quantization mode = Quantization::Exact;
  std::vector<std::pair<std::uint64_t, std::uint8_t>> events;
  bool in_rows = false;
  std::uint64_t prev_ps = 0;
  int prev_channel = -1;
  while (next_line()) {
    if (line.empty()) {
      continue;
    }
    if (line[0] == '#') {
      if (in_rows) {
        throw malformed("header line after data rows");
      }
      constexpr std::string_view kChannels = "# channels=";
      constexpr std::string_view kQuantization = "# quantization=";
      std::uint64_t value = 0;
      if (line.rfind(kChannels, 0) == 0 && parse_uint(std::string_view(line).substr(kChannels.size()), value) &&
          value <= 256) {
        declared_channels = static_cast<int>(value);
      } else if (line == std::string(kQuantization) + "exact") {
        mode = Quantization::Exact;
      } else if (line == std::string(kQuantization) + "rounded") {
        mode = Quantization::Rounded;
      } else {
        throw malformed("unrecognized header line '" + line + "'");
      }
      continue;
    }
    in_rows = true;
    const auto comma = line.find(',');
    std::uint64_t ps = 0;
    std::uint64_t channel = 0;
    if (comma == std::string::npos || !parse_uint(std::string_view(line).substr(0, comma), ps) ||
        !parse_uint(std::string_view(line).substr(comma + 1), channel)) {
      throw malformed("expected 'ticks_ps,channel', got '" + line + "'");
    }
    if (channel > 255 || (declared_channels >= 0 && channel >= static_cast<std::uint64_t>(declared_channels))) {
      throw FormatError(FormatError::Kind::BadChannel, line_no,
                        "line " + std::to_string(line_no) + ": channel " + std::to_string(channel) + " out of range");
    }
    if (ps % resolution != 0 || ps > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw malformed("time " + std::to_string(ps) + " is not a representable multiple of the resolution");
    }
    if (ps < prev_ps || (ps == prev_ps && static_cast<int>(channel) < prev_channel)) {
      throw FormatError(FormatError::Kind::TimeRegression, line_no,
                        "line " + std::to_string(line_no) + ": time regression");
    }
    prev_ps = ps;
    prev_channel = static_cast<int>(channel);
    events.emplace_back(ps, static_cast<std::uint8_t>(channel));
  }

  int channel_count = declared_channels;
  if (channel_count < 0) {
    channel_count = 0;
    for (const auto& e : events) {
      channel_count = std::max(channel_count, e.second + 1);
    }
  }
  TagFile file = make_file(resolution, static_cast<std::uint16_t>(channel_count));
  file.quantization = mode;
  for (const auto& [ps, channel] : events) {
    file.streams[channel].times.push_back(Tick{static_cast<std::int64_t>(ps)});
  }
  finish(file);
  return file;
}

TagFile read_text_tags(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_text_tags(in);
}

}  // namespace hbt
