#include "trajkit/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trajkit/error.hpp"

namespace trajkit {

namespace {

constexpr char kPredHeader[] = "trajkit-pred v1";

void check_record(const PredictionRecord& record) {
  require(record.num_modes >= 1 && record.num_steps >= 1, ErrorKind::invalid,
          "prediction record needs at least one mode and one step");
  require(static_cast<std::int64_t>(record.confidences.size()) ==
              record.num_modes,
          ErrorKind::invalid, "confidence count does not match num_modes");
  require(static_cast<std::int64_t>(record.points.size()) ==
              record.num_modes * record.num_steps * 2,
          ErrorKind::invalid, "point count does not match modes * steps * 2");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

PredictionRecord to_record(const TrajectoryPrediction& pred) {
  require(pred.hypotheses.defined() && pred.hypotheses.rank() == 3,
          ErrorKind::invalid, "prediction hypotheses must be [K, T, 2]");
  PredictionRecord record;
  record.num_modes = pred.hypotheses.dim(0);
  record.num_steps = pred.hypotheses.dim(1);
  record.confidences = confidences(pred);
  const auto data = pred.hypotheses.data();
  record.points.assign(data.begin(), data.end());
  check_record(record);
  return record;
}

std::string render_prediction(const PredictionRecord& record) {
  check_record(record);
  std::string text = std::string(kPredHeader) + "\n";
  for (std::int64_t k = 0; k < record.num_modes; ++k) {
    text += fmt("%.17g", record.confidences[static_cast<std::size_t>(k)]);
    text += "\n";
    for (std::int64_t t = 0; t < record.num_steps; ++t) {
      const std::size_t at =
          static_cast<std::size_t>((k * record.num_steps + t) * 2);
      text += fmt("%.17g", record.points[at]) + " " +
              fmt("%.17g", record.points[at + 1]) + "\n";
    }
  }
  return text;
}

PredictionRecord parse_prediction(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == kPredHeader,
          ErrorKind::io, "not a prediction file: bad header");

  PredictionRecord record;
  std::vector<std::int64_t> steps_per_mode;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream fields(line);
    double a = 0.0;
    double b = 0.0;
    require(static_cast<bool>(fields >> a), ErrorKind::io,
            "prediction file: unparsable line '" + line + "'");
    if (fields >> b) {
      std::string extra;
      require(!(fields >> extra), ErrorKind::io,
              "prediction file: too many fields in '" + line + "'");
      require(!steps_per_mode.empty(), ErrorKind::io,
              "prediction file: coordinates before any confidence");
      record.points.push_back(a);
      record.points.push_back(b);
      ++steps_per_mode.back();
    } else {
      record.confidences.push_back(a);
      steps_per_mode.push_back(0);
    }
  }
  require(!steps_per_mode.empty(), ErrorKind::io,
          "prediction file: no modes");
  for (std::int64_t steps : steps_per_mode) {
    require(steps == steps_per_mode.front() && steps >= 1, ErrorKind::io,
            "prediction file: uneven steps per mode");
  }
  record.num_modes = static_cast<std::int64_t>(steps_per_mode.size());
  record.num_steps = steps_per_mode.front();
  check_record(record);
  return record;
}

void write_prediction(const PredictionRecord& record, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << render_prediction(record);
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

PredictionRecord read_prediction(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_prediction(text);
}

std::string render_plot_svg(const PredictionRecord& record,
                            const GroundTruth& gt) {
  check_record(record);
  const std::int64_t T = record.num_steps;
  require(static_cast<std::int64_t>(gt.positions.size()) ==
                  static_cast<std::int64_t>(gt.availability.size()) * 2,
          ErrorKind::invalid, "ground truth positions/availability mismatch");

  // SVG y grows downward; points are emitted as (x, -y).  Adding 0.0 folds
  // negative zero back to +0.
  const auto sx = [](double x) { return x + 0.0; };
  const auto sy = [](double y) { return -y + 0.0; };

  double min_x = 0.0;
  double max_x = 0.0;
  double min_y = 0.0;
  double max_y = 0.0;
  const auto include = [&](double x, double y) {
    min_x = std::min(min_x, sx(x));
    max_x = std::max(max_x, sx(x));
    min_y = std::min(min_y, sy(y));
    max_y = std::max(max_y, sy(y));
  };
  for (std::size_t t = 0; t < gt.availability.size(); ++t) {
    if (gt.availability[t]) {
      include(gt.positions[t * 2], gt.positions[t * 2 + 1]);
    }
  }
  for (std::size_t i = 0; i + 1 < record.points.size(); i += 2) {
    include(record.points[i], record.points[i + 1]);
  }

  const double pad = 2.0;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" +
                    fmt("%.3f", min_x - pad) + " " + fmt("%.3f", min_y - pad) +
                    " " + fmt("%.3f", max_x - min_x + 2.0 * pad) + " " +
                    fmt("%.3f", max_y - min_y + 2.0 * pad) +
                    "\" width=\"640\" height=\"640\">\n";

  std::string gt_points;
  for (std::size_t t = 0; t < gt.availability.size(); ++t) {
    if (!gt.availability[t]) {
      continue;
    }
    if (!gt_points.empty()) {
      gt_points += " ";
    }
    gt_points += fmt("%.6f", sx(gt.positions[t * 2])) + "," +
                 fmt("%.6f", sy(gt.positions[t * 2 + 1]));
  }
  svg += "  <polyline class=\"gt\" fill=\"none\" stroke=\"#1f77b4\" "
         "stroke-width=\"0.15\" points=\"" +
         gt_points + "\"/>\n";

  for (std::int64_t k = 0; k < record.num_modes; ++k) {
    std::string points;
    for (std::int64_t t = 0; t < T; ++t) {
      const std::size_t at = static_cast<std::size_t>((k * T + t) * 2);
      if (!points.empty()) {
        points += " ";
      }
      points += fmt("%.6f", sx(record.points[at])) + "," +
                fmt("%.6f", sy(record.points[at + 1]));
    }
    svg += "  <polyline class=\"pred\" fill=\"none\" stroke=\"#d62728\" "
           "stroke-width=\"0.15\" opacity=\"" +
           fmt("%.6f", record.confidences[static_cast<std::size_t>(k)]) +
           "\" points=\"" + points + "\"/>\n";
  }

  svg += "  <circle class=\"ego\" cx=\"0\" cy=\"0\" r=\"0.5\" "
         "fill=\"#2ca02c\"/>\n</svg>\n";
  return svg;
}

void write_plot_svg(const PredictionRecord& record, const GroundTruth& gt,
                    const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << render_plot_svg(record, gt);
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

}  // namespace trajkit
