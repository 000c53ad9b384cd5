#pragma once

#include <vector>

#include "echodfkd/errors.hpp"

namespace echodfkd {

// Annotator noise X modeled as a uniform[-U,U] / Laplace(b) mixture; the
// observed round-to-round differences are distributed as X1 - X2.
struct AnnotatorNoiseModel {
    double mixture_weight = 0.0;    // uniform component weight w in [0,1]
    double uniform_halfwidth = 1.0; // U, frames
    double laplace_scale = 1.0;     // b, frames
    bool degenerate = false;
    double log_likelihood = 0.0;
};

struct IntraAnnotatorStats {
    double rmse_rounds = 0.0;  // RMSE(Z1, Z2)
    double corr_rounds = 0.0;  // rho(Z1, Z2)
};

// Best achievable RMSE against a single annotation round: rmse/sqrt(2).
double rmse_floor(double rmse_rounds);

// Best achievable correlation: sqrt(rho(Z1,Z2)).
double corr_ceiling(double corr_rounds);

// E|X| = w*U/2 + (1-w)*b.
double expected_abs(const AnnotatorNoiseModel& model);

// Per-integer-bin probability mass of X under the model (unit bins).
std::vector<double> noise_pmf(const AnnotatorNoiseModel& model, int support_radius);

// Log-likelihood of observed round differences under X1 - X2 for the
// given model (same discretized convolution the fitter maximizes).
double mixture_log_likelihood(const AnnotatorNoiseModel& model,
                              const std::vector<int>& round_diffs);

// MLE of (w, U, b) from integer round differences, maximizing the
// likelihood of the self-convolved discretized mixture via grid search
// with two rounds of local refinement.
AnnotatorNoiseModel fit_noise_mixture(const std::vector<int>& round_diffs);

namespace reference {
inline constexpr double kCamusIntraRmse = 5.7;
inline constexpr double kCamusIntraCorr = 0.801;
inline constexpr double kExpectedAbsEs = 2.0;  // fitted on unavailable data
inline constexpr double kExpectedAbsEd = 2.4;
}  // namespace reference

}  // namespace echodfkd
