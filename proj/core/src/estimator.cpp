#include "deconv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "deconv/error.hpp"

namespace deconv {

void EnvelopeParams::validate() const {
    if (!(m_inf >= 1.0) || !std::isfinite(m_inf)) throw ValidationError("M_inf must be finite and >= 1");
    if (!(p >= 1.0) || !std::isfinite(p)) throw ValidationError("loss index p must be finite and >= 1");
    if (n < 2) throw ValidationError("envelope needs n >= 2");
    for (double m : mu_alpha)
        if (!(m >= 0.0) || !std::isfinite(m)) throw ValidationError("mu(alpha) must be finite and nonnegative");
}

double m_infinity(const KernelSpec& spec, const NoiseSpec& noise) {
    const double d = static_cast<double>(noise.d);
    const double inner = noise.alpha == 1.0 ? spec.k1 / noise.upsilon0 : spec.kcheck_l1 / noise.epsilon;
    return std::max(std::pow(2.0 * std::numbers::pi, -d) * inner, 1.0);
}

EnvelopeParams make_envelope_params(const KernelSpec& spec, const NoiseSpec& noise, double p, std::size_t n) {
    EnvelopeParams env;
    env.m_inf = m_infinity(spec, noise);
    env.p = p;
    env.mu_alpha = noise.mu_alpha();
    env.n = n;
    env.validate();
    return env;
}

double lambda_n(const EnvelopeParams& env, const BandwidthVec& h) {
    if (env.mu_alpha.size() != h.dim()) throw ValidationError("bandwidth and mu(alpha) dimensions differ");
    double s = 0.0;
    for (std::size_t j = 0; j < h.dim(); ++j) s += (1.0 + env.mu_alpha[j]) * h.abs_log(j);
    return 4.0 * std::log(env.m_inf) + 6.0 * std::log(static_cast<double>(env.n)) + (8.0 * env.p + 26.0) * s;
}

SampleIndex::SampleIndex(const Sample& sample) : d_(sample.dim()), n_(sample.size()) {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sample.at(a, 0) < sample.at(b, 0); });
    sorted_.resize(n_ * d_);
    first_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        const auto z = sample.point(order[i]);
        std::copy(z.begin(), z.end(), sorted_.begin() + static_cast<std::ptrdiff_t>(i * d_));
        first_[i] = z[0];
    }
}

std::pair<std::size_t, std::size_t> SampleIndex::range(double lo, double hi) const {
    const auto a = std::lower_bound(first_.begin(), first_.end(), lo);
    const auto b = std::upper_bound(a, first_.end(), hi);
    return {static_cast<std::size_t>(a - first_.begin()), static_cast<std::size_t>(b - first_.begin())};
}

PointEstimate estimate_at(const DeconvKernelTable& table, const SampleIndex& sample, std::span<const double> x) {
    const std::size_t d = table.dim();
    if (sample.dim() != d || x.size() != d) throw ValidationError("sample, point and table dimensions differ");
    if (sample.size() == 0) throw ValidationError("empty sample");
    const Lattice1D& l0 = table.lattice[0];
    const auto [lo, hi] = sample.range(x[0] + l0.origin - l0.step, x[0] + l0.last() + l0.step);
    std::vector<double> y(d);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        const auto z = sample.point(i);
        for (std::size_t j = 0; j < d; ++j) y[j] = z[j] - x[j];
        const double m = eval_M(table, y);
        s1 += m;
        s2 += m * m;
    }
    const double n = static_cast<double>(sample.size());
    return {s1 / n, s2 / n};
}

PointEstimate estimate_at(const DeconvKernelTable& table, const Sample& sample, std::span<const double> x) {
    return estimate_at(table, SampleIndex(sample), x);
}

double m_sup_bound(const EnvelopeParams& env, const BandwidthVec& h) {
    double denom = 1.0;
    for (std::size_t j = 0; j < h.dim(); ++j) {
        const double hj = h.value(j);
        denom *= hj * std::pow(std::min(hj, 1.0), env.mu_alpha[j]);
    }
    return env.m_inf / denom;
}

double envelope_U(const EnvelopeParams& env, const BandwidthVec& h, double sigma2_hat) {
    const double lam = lambda_n(env, h);
    const double n = static_cast<double>(env.n);
    return std::sqrt(2.0 * lam * sigma2_hat / n) + 4.0 * lam * m_sup_bound(env, h) / (3.0 * n);
}

double envelope_U(const EnvelopeParams& env, const DeconvKernelTable& table, const SampleIndex& sample,
                  std::span<const double> x) {
    return envelope_U(env, table.h, estimate_at(table, sample, x).sigma2_hat);
}

double variance_scale_F(const NoiseSpec& noise, const BandwidthVec& h, std::size_t n) {
    if (n < 2) throw ValidationError("F_n needs n >= 2");
    if (noise.d != h.dim()) throw ValidationError("bandwidth and noise dimensions differ");
    const auto mu = noise.mu_alpha();
    const double nn = static_cast<double>(n);
    double v = std::sqrt(std::log(nn) + h.sum_abs_log());
    for (std::size_t j = 0; j < h.dim(); ++j) {
        const double hj = h.value(j);
        v *= std::pow(nn * hj, -0.5) * std::pow(std::min(hj, 1.0), -mu[j]);
    }
    return v;
}

}  // namespace deconv
