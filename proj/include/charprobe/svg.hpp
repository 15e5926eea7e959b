#pragma once

// Static SVG plots: sorted per-unit PDI bars and per-character activation
// heat strips.

#include <charprobe/model.hpp>
#include <charprobe/probe.hpp>

#include <span>
#include <string>

namespace charprobe {

inline constexpr int kSvgFormatVersion = 1;
inline constexpr const char* kForwardColor = "#1f77b4";
inline constexpr const char* kBackwardColor = "#ff7f0e";

/// Units in ranked order as bars, blue for forward and orange for backward,
/// with a vertical line after the median index.
std::string pdi_bar_chart(const PdiSummary& summary, const std::string& title);

/// One row per requested unit, one cell per character, colored from blue
/// (-1) through white (0) to red (+1); each row is annotated with both base
/// measures. An empty `units` plots every unit.
std::string activation_strip(const ActivationTrace& trace, std::span<const int> units,
                             const std::string& title);

std::string xml_escape(std::string_view text);

}  // namespace charprobe
