#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "acconet/metrics.hpp"

namespace acconet::plot {

struct NamedCurve {
  std::string label;
  std::vector<metrics::PrPoint> points;
};

/// Draws recall (x) against precision (y) for every curve into a PNG.
void plot_pr_curves(const std::vector<NamedCurve>& curves,
                    const std::filesystem::path& png, int width = 800,
                    int height = 600);

/// "curve,threshold,precision,recall" rows for all curves.
void write_combined_csv(const std::vector<NamedCurve>& curves,
                        const std::filesystem::path& path);

}  // namespace acconet::plot
