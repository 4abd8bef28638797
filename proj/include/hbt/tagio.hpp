#pragma once

// Timestamp file formats.
//
// Binary: 32-byte header, then 16-byte records, all little-endian.
//   header  [0,8)   magic "BLTTAG01"
//           [8,12)  version = 1
//           [12,20) resolution_ps >= 1
//           [20,22) channel_count
//           [22,28) reserved, zero
//           [28,32) CRC-32 (zlib polynomial) of bytes [0,28)
//   record  [0,8)   time in units of resolution_ps
//           [8]     channel
//           [9]     flags: bit 0 set when times were rounded to the resolution
//           [10,16) padding, zero
// Records are in global (time, channel) order, so a reader never sorts.
//
// Text: `# resolution_ps=N`, then optional `# channels=M` and
// `# quantization=exact|rounded` lines, then one `ticks_ps,channel` row per
// event in the same order.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "hbt/event_stream.hpp"

namespace hbt {

enum class Quantization : std::uint8_t { Exact, Rounded };

struct TagFileHeader {
  static constexpr std::size_t kSize = 32;
  static constexpr std::size_t kRecordSize = 16;
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t resolution_ps = 1;
  std::uint16_t channel_count = 0;
};

struct TagFile {
  TagFileHeader header;
  Quantization quantization = Quantization::Exact;
  /// One stream per channel, index == channel, times in picosecond ticks.
  /// Durations are the latest timestamp in the file.
  std::vector<EventStream> streams;
};

/// Writes the streams, merged into global order. Channel ids must be
/// distinct; channel_count is the largest id plus one. In exact mode every
/// time must be a multiple of resolution_ps (ConfigError otherwise); rounded
/// mode rounds to the nearest multiple, halves up.
void write_tags(std::span<const EventStream> streams, std::uint64_t resolution_ps, std::ostream& out,
                Quantization mode = Quantization::Exact);
void write_tags(std::span<const EventStream> streams, std::uint64_t resolution_ps,
                const std::filesystem::path& path, Quantization mode = Quantization::Exact);

/// Throws FormatError naming the byte offset of the first problem.
TagFile read_tags(std::istream& in);
TagFile read_tags(const std::filesystem::path& path);

void write_text_tags(std::span<const EventStream> streams, std::uint64_t resolution_ps, std::ostream& out,
                     Quantization mode = Quantization::Exact);
void write_text_tags(const TagFile& file, std::ostream& out);
void write_text_tags(const TagFile& file, const std::filesystem::path& path);
void write_tags(const TagFile& file, const std::filesystem::path& path);

/// Throws FormatError naming the 1-based line number of the first problem.
TagFile read_text_tags(std::istream& in);
TagFile read_text_tags(const std::filesystem::path& path);

/// CRC-32 of the first 28 header bytes, as stored in bytes [28,32).
std::uint32_t header_checksum(std::span<const unsigned char> header);

}  // namespace hbt
