#pragma once

#include <string>
#include <vector>

#include "voxdec/formats.hpp"

namespace voxdec {

/// Self-contained SVG: per-class accuracy bars, confusion heatmap,
/// truth-vs-prediction label strips and optional decoded/ideal/stimulus
/// series overlays. Output depends only on the inputs.
std::string render_report(const Json& metrics, const std::vector<SeriesTable>& series = {});

}  // namespace voxdec
