#include "trajkit/scaling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "trajkit/error.hpp"

namespace trajkit {

namespace {

// ceil that forgives representation error in products like 1.1 * 10.
std::int64_t ceil_count(double x) {
  return static_cast<std::int64_t>(std::ceil(x - 1e-9));
}

std::int64_t round_up_to(std::int64_t value, std::int64_t multiple) {
  return ((value + multiple - 1) / multiple) * multiple;
}

std::int64_t nearest_multiple(std::int64_t value, std::int64_t multiple) {
  return ((value + multiple / 2) / multiple) * multiple;
}

std::array<double, 3> triple(const ScalingCoefficients& c) {
  return {c.alpha, c.beta, c.gamma};
}

}  // namespace

void validate(const ScalingCoefficients& c) {
  require(c.alpha >= 1.0 && c.beta >= 1.0 && c.gamma >= 1.0,
          ErrorKind::invalid,
          "scaling coefficients must each be at least 1");
  require(c.phi >= 0.0, ErrorKind::invalid, "phi must be non-negative");
}

void validate(const BaseArchitecture& base) {
  require(!base.stage_layers.empty(), ErrorKind::invalid,
          "base architecture needs at least one stage");
  require(base.stage_layers.size() == base.stage_channels.size(),
          ErrorKind::invalid,
          "stage_layers and stage_channels lengths differ");
  for (std::int64_t layers : base.stage_layers) {
    require(layers > 0, ErrorKind::invalid, "stage layer counts must be positive");
  }
  for (std::int64_t channels : base.stage_channels) {
    require(channels > 0 && channels % 8 == 0, ErrorKind::invalid,
            "stage channels must be positive multiples of 8");
  }
  require(base.input_resolution > 0 && base.input_resolution % 32 == 0,
          ErrorKind::invalid,
          "input resolution must be a positive multiple of 32");
  // Stages after the first halve the spatial size once each.
  const std::int64_t strided = static_cast<std::int64_t>(base.stage_layers.size()) - 1;
  require(base.input_resolution % (std::int64_t{1} << strided) == 0,
          ErrorKind::invalid,
          "input resolution must be divisible by 2^(striding stages)");
  require(base.num_modes >= 1 && base.num_steps >= 1, ErrorKind::invalid,
          "head arity (modes, steps) must be at least 1");
}

double constraint_product(const ScalingCoefficients& c) {
  return c.alpha * c.beta * c.beta * c.gamma * c.gamma;
}

bool check_constraint(const ScalingCoefficients& c, double tol) {
  require(tol > 0.0, ErrorKind::invalid, "constraint tolerance must be positive");
  return std::abs(constraint_product(c) - 2.0) <= tol;
}

ScalingMultipliers derive_multipliers(const ScalingCoefficients& c) {
  validate(c);
  return {std::pow(c.alpha, c.phi), std::pow(c.beta, c.phi),
          std::pow(c.gamma, c.phi)};
}

BaseArchitecture apply_scaling(const BaseArchitecture& base,
                               const ScalingMultipliers& m) {
  validate(base);
  require(m.d >= 1.0 && m.w >= 1.0 && m.r >= 1.0, ErrorKind::invalid,
          "scaling multipliers must each be at least 1");
  BaseArchitecture scaled = base;
  for (std::size_t i = 0; i < scaled.stage_layers.size(); ++i) {
    scaled.stage_layers[i] =
        ceil_count(m.d * static_cast<double>(base.stage_layers[i]));
    const std::int64_t channels =
        std::llround(m.w * static_cast<double>(base.stage_channels[i]));
    scaled.stage_channels[i] = std::max<std::int64_t>(8, round_up_to(channels, 8));
  }
  const std::int64_t resolution =
      std::llround(m.r * static_cast<double>(base.input_resolution));
  scaled.input_resolution = std::max<std::int64_t>(32, nearest_multiple(resolution, 32));
  return scaled;
}

double flops_proxy(const BaseArchitecture& arch) {
  double total = 0.0;
  double spatial = static_cast<double>(arch.input_resolution);
  for (std::size_t i = 0; i < arch.stage_layers.size(); ++i) {
    const double channels = static_cast<double>(arch.stage_channels[i]);
    total += static_cast<double>(arch.stage_layers[i]) * channels * channels *
             spatial * spatial;
    spatial /= 2.0;
  }
  return total;
}

GridSearchResult grid_search(const BaseArchitecture& base,
                             const ScoreFn& evaluate,
                             const GridSearchOptions& options) {
  validate(base);
  require(options.grid_step > 0.0, ErrorKind::invalid,
          "grid step must be positive");
  require(options.tol > 0.0, ErrorKind::invalid,
          "constraint tolerance must be positive");
  require(options.upper >= options.lower && options.lower >= 1.0,
          ErrorKind::invalid, "grid bounds must satisfy 1 <= lower <= upper");

  std::vector<double> values;
  for (std::int64_t i = 0;; ++i) {
    const double v = options.lower + static_cast<double>(i) * options.grid_step;
    if (v > options.upper + 1e-12) {
      break;
    }
    values.push_back(v);
  }

  GridSearchResult result;
  bool have_best = false;
  double best_score = 0.0;
  for (double alpha : values) {
    for (double beta : values) {
      for (double gamma : values) {
        GridPoint point;
        point.coeffs = {alpha, beta, gamma, 1.0};
        point.product = constraint_product(point.coeffs);
        point.feasible = check_constraint(point.coeffs, options.tol);
        if (point.feasible) {
          const BaseArchitecture scaled =
              apply_scaling(base, derive_multipliers(point.coeffs));
          point.score = evaluate(scaled, point.coeffs);
          // Reduction is order-independent: strictly better score wins, equal
          // scores fall back to the lexicographically smaller triple.
          const bool better =
              !have_best || point.score > best_score ||
              (point.score == best_score &&
               triple(point.coeffs) < triple(result.best));
          if (!std::isnan(point.score) && better) {
            have_best = true;
            best_score = point.score;
            result.best = point.coeffs;
          }
        } else {
          point.score = std::nan("");
        }
        result.report.push_back(point);
      }
    }
  }
  require(have_best, ErrorKind::constraint,
          "no grid point satisfies |alpha*beta^2*gamma^2 - 2| <= " +
              std::to_string(options.tol));
  return result;
}

std::string grid_report_csv(const std::vector<GridPoint>& report) {
  std::string out = "alpha,beta,gamma,product,score,feasible\n";
  char line[160];
  for (const GridPoint& p : report) {
    std::snprintf(line, sizeof(line), "%.6g,%.6g,%.6g,%.17g,%.17g,%d\n",
                  p.coeffs.alpha, p.coeffs.beta, p.coeffs.gamma, p.product,
                  p.score, p.feasible ? 1 : 0);
    out += line;
  }
  return out;
}

}  // namespace trajkit
