#pragma once

// Minimal standalone SVG renderings of experiment results.

#include "gateaux/experiments.hpp"

#include <string>

namespace gateaux {

/// Heatmap of log10 MAE, eps on the rows and lambda on the columns. NaN cells are hatched grey.
std::string sweep_heatmap_svg(const SweepResult& result);

/// Log-log chart of mean absolute error against n, one line per estimator.
std::string compare_chart_svg(const CompareOutput& output);

}  // namespace gateaux
