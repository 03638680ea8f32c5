#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajkit/loss.hpp"

namespace trajkit {

// Flattened prediction in the raster frame: meters, ego at the origin,
// heading along +x.  confidences are already softmaxed.
struct PredictionRecord {
  std::int64_t num_modes = 0;
  std::int64_t num_steps = 0;
  std::vector<double> confidences;  // K
  std::vector<double> points;       // K*T*2 interleaved x,y
};

PredictionRecord to_record(const TrajectoryPrediction& pred);

// "trajkit-pred v1": per mode, one confidence line followed by num_steps
// "x y" lines.  Values carry enough digits to round-trip bit-exactly; the
// reader infers the mode and step counts from the line structure.
std::string render_prediction(const PredictionRecord& record);
PredictionRecord parse_prediction(const std::string& text);
void write_prediction(const PredictionRecord& record, const std::string& path);
PredictionRecord read_prediction(const std::string& path);

// Static SVG: the ground-truth polyline (class "gt", available steps only),
// one polyline per predicted mode (class "pred", opacity = confidence), and
// a circle marking the ego origin.  Deterministic text for fixed inputs.
std::string render_plot_svg(const PredictionRecord& record,
                            const GroundTruth& gt);
void write_plot_svg(const PredictionRecord& record, const GroundTruth& gt,
                    const std::string& path);

}  // namespace trajkit
