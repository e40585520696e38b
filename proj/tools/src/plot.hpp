#pragma once

#include "regcl/harness.hpp"
#include "regcl/training.hpp"

#include <string>
#include <vector>

namespace regcl::cli {

/// Heatmap of R with one cell per (step, task) and the value printed inside.
/// Lower-is-better metrics use a reversed color ramp.
std::string result_heatmap_svg(const ResultMatrix& r, bool lower_is_better);

/// Per-step loss curves (total and its three terms) for one training run.
std::string loss_curve_svg(const std::vector<LossRecord>& history, const std::string& title);

}  // namespace regcl::cli
