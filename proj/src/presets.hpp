#pragma once

#include <span>
#include <string_view>

namespace hbt::cli {

struct EmbeddedPreset {
  std::string_view name;
  std::string_view text;
};

/// Contents of presets/*.json, compiled in.
std::span<const EmbeddedPreset> embedded_presets();

}  // namespace hbt::cli
