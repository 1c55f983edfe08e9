#pragma once

#include <vector>

#include "affordkit/image.hpp"
#include "affordkit/stats.hpp"

namespace affordkit {

/// Scatter of each series with its fitted line and shaded 95% band, x over
/// [0, 1]. No text; the CSV sidecar carries the numbers.
Image render_trend_plot(const std::vector<stats::AblationSeries>& series, const std::vector<stats::AblationRow>& rows,
                        int width = 640, int height = 400);

}  // namespace affordkit
