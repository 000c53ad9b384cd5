#include "echodfkd/annotator_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace echodfkd {

double rmse_floor(double rmse_rounds) {
    if (rmse_rounds < 0.0) throw InputError("rmse must be >= 0");
    return rmse_rounds / std::sqrt(2.0);
}

double corr_ceiling(double corr_rounds) {
    if (corr_rounds < 0.0 || corr_rounds > 1.0)
        throw InputError("correlation must be in [0,1]");
    return std::sqrt(corr_rounds);
}

double expected_abs(const AnnotatorNoiseModel& m) {
    return m.mixture_weight * (m.uniform_halfwidth / 2.0) +
           (1.0 - m.mixture_weight) * m.laplace_scale;
}

namespace {

double laplace_cdf(double x, double b) {
    return x < 0.0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b);
}

}  // namespace

std::vector<double> noise_pmf(const AnnotatorNoiseModel& m, int r) {
    std::vector<double> p(2 * r + 1, 0.0);
    double total = 0.0;
    for (int k = -r; k <= r; ++k) {
        double lo = k - 0.5, hi = k + 0.5;
        double uni = 0.0;
        if (m.uniform_halfwidth > 0.0) {
            double o = std::min(hi, m.uniform_halfwidth) -
                       std::max(lo, -m.uniform_halfwidth);
            uni = std::max(o, 0.0) / (2.0 * m.uniform_halfwidth);
        }
        double lap = laplace_cdf(hi, m.laplace_scale) - laplace_cdf(lo, m.laplace_scale);
        double mass = m.mixture_weight * uni + (1.0 - m.mixture_weight) * lap;
        p[k + r] = mass;
        total += mass;
    }
    for (double& x : p) x /= total;  // fold the truncated tail back in
    return p;
}

namespace {

// log-likelihood of the observed integer differences under X1 - X2
double diff_loglik(const AnnotatorNoiseModel& m, int r,
                   const std::map<int, int>& hist) {
    std::vector<double> p = noise_pmf(m, r);
    // q[d] = sum_k p[k] p[k-d]; X symmetric so -X2 has the same pmf
    std::vector<double> q(4 * r + 1, 0.0);
    for (int i = 0; i < 2 * r + 1; ++i)
        for (int j = 0; j < 2 * r + 1; ++j) q[i - j + 2 * r] += p[i] * p[j];
    double ll = 0.0;
    for (const auto& [d, n] : hist) {
        double qq = std::abs(d) <= 2 * r ? q[d + 2 * r] : 0.0;
        ll += n * std::log(std::max(qq, 1e-300));
    }
    return ll;
}

}  // namespace

double mixture_log_likelihood(const AnnotatorNoiseModel& model,
                              const std::vector<int>& round_diffs) {
    std::map<int, int> hist;
    int max_abs = 0;
    for (int d : round_diffs) {
        ++hist[d];
        max_abs = std::max(max_abs, std::abs(d));
    }
    return diff_loglik(model, std::max(81, max_abs + 1), hist);
}

AnnotatorNoiseModel fit_noise_mixture(const std::vector<int>& round_diffs) {
    if (round_diffs.size() < 50)
        throw InputError("need at least 50 samples, got " +
                         std::to_string(round_diffs.size()));
    std::map<int, int> hist;
    int max_abs = 0;
    for (int d : round_diffs) {
        ++hist[d];
        max_abs = std::max(max_abs, std::abs(d));
    }
    if (max_abs == 0) {
        AnnotatorNoiseModel m;
        m.mixture_weight = 0.0;
        m.laplace_scale = 0.0;
        m.uniform_halfwidth = 1.0;
        m.degenerate = true;
        return m;
    }

    int r = std::max({81, max_abs + 1});
    AnnotatorNoiseModel best;
    best.log_likelihood = -1e300;
    auto consider = [&](double w, double u, double b) {
        w = std::clamp(w, 0.0, 1.0);
        u = std::max(u, 1.0);
        b = std::max(b, 1e-3);
        AnnotatorNoiseModel m;
        m.mixture_weight = w;
        m.uniform_halfwidth = u;
        m.laplace_scale = b;
        m.log_likelihood = diff_loglik(m, r, hist);
        if (m.log_likelihood > best.log_likelihood) best = m;
    };

    // coarse grid, then two rounds of 10x local refinement
    double sw = 0.002, su = 10.0, sb = 0.1;
    for (double w = 0.0; w <= 0.05 + 1e-12; w += sw)
        for (double u = 20.0; u <= 80.0 + 1e-9; u += su)
            for (double b = 0.6; b <= 6.0 + 1e-9; b += sb) consider(w, u, b);

    for (int round = 0; round < 2; ++round) {
        double cw = best.mixture_weight, cu = best.uniform_halfwidth,
               cb = best.laplace_scale;
        for (int i = -10; i <= 10; ++i)
            for (int j = -10; j <= 10; ++j)
                for (int k = -10; k <= 10; ++k)
                    consider(cw + i * sw / 10.0, cu + j * su / 10.0,
                             cb + k * sb / 10.0);
        sw /= 10.0;
        su /= 10.0;
        sb /= 10.0;
    }
    return best;
}

}  // namespace echodfkd
