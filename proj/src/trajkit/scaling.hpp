#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace trajkit {

// alpha scales depth, beta width, gamma input resolution; phi grows all three
// jointly under the budget constraint alpha * beta^2 * gamma^2 ~ 2.
struct ScalingCoefficients {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double phi = 0.0;
};

struct ScalingMultipliers {
  double d = 1.0;
  double w = 1.0;
  double r = 1.0;
};

// Residual backbone skeleton plus the trajectory-head arity.  Channels must be
// positive multiples of 8 and the resolution a positive multiple of 32 so that
// apply_scaling with unit multipliers is exactly the identity.
struct BaseArchitecture {
  std::vector<std::int64_t> stage_layers{2, 2, 2, 2};
  std::vector<std::int64_t> stage_channels{16, 32, 64, 128};
  std::int64_t input_resolution = 64;
  std::int64_t num_modes = 3;
  std::int64_t num_steps = 16;
};

void validate(const ScalingCoefficients& c);
void validate(const BaseArchitecture& base);

double constraint_product(const ScalingCoefficients& c);
bool check_constraint(const ScalingCoefficients& c, double tol);

// d = alpha^phi, w = beta^phi, r = gamma^phi.
ScalingMultipliers derive_multipliers(const ScalingCoefficients& c);

// layers: ceil(d * L); channels: round(w * C) rounded up to a multiple of 8;
// resolution: round(r * R) snapped to the nearest multiple of 32 (ties up).
BaseArchitecture apply_scaling(const BaseArchitecture& base,
                               const ScalingMultipliers& m);

// Sum over stages of layers * channels^2 * (resolution / 2^stage)^2; stage 0
// runs at full resolution.
double flops_proxy(const BaseArchitecture& arch);

struct GridPoint {
  ScalingCoefficients coeffs;
  double product = 0.0;
  double score = 0.0;
  bool feasible = false;
};

struct GridSearchResult {
  ScalingCoefficients best;
  std::vector<GridPoint> report;
};

struct GridSearchOptions {
  double lower = 1.0;
  double upper = 2.0;
  double grid_step = 0.05;
  double tol = 0.1;
};

// Scores a candidate; receives the phi=1 scaled architecture and the triple.
using ScoreFn =
    std::function<double(const BaseArchitecture&, const ScalingCoefficients&)>;

// Exhaustive search over the (alpha, beta, gamma) grid at phi = 1.  Returns
// the feasible point with maximal score; ties break to the lexicographically
// smallest triple.  Throws when no grid point satisfies the constraint.
GridSearchResult grid_search(const BaseArchitecture& base,
                             const ScoreFn& evaluate,
                             const GridSearchOptions& options);

// One row per grid point: alpha,beta,gamma,product,score,feasible.
std::string grid_report_csv(const std::vector<GridPoint>& report);

}  // namespace trajkit
