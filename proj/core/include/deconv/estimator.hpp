#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deconv/kernel.hpp"
#include "deconv/model.hpp"
#include "deconv/operator.hpp"

namespace deconv {

struct EnvelopeParams {
    double m_inf = 1.0;
    double p = 2.0;
    std::vector<double> mu_alpha;
    std::size_t n = 0;

    void validate() const;
};

// [(2 pi)^{-d} (eps^{-1} |K^|_1 if alpha != 1, Upsilon0^{-1} k1 if alpha == 1)] v 1
double m_infinity(const KernelSpec& spec, const NoiseSpec& noise);

EnvelopeParams make_envelope_params(const KernelSpec& spec, const NoiseSpec& noise, double p, std::size_t n);

// 4 ln M_inf + 6 ln n + (8p + 26) sum_j (1 + mu_j) |ln h_j|
double lambda_n(const EnvelopeParams& env, const BandwidthVec& h);

// Sample sorted along the first coordinate so that a table's box can be
// located by binary search.
class SampleIndex {
public:
    SampleIndex() = default;
    explicit SampleIndex(const Sample& sample);

    std::size_t dim() const { return d_; }
    std::size_t size() const { return n_; }
    std::span<const double> point(std::size_t i) const { return {sorted_.data() + i * d_, d_}; }
    // Index range of points whose first coordinate lies in [lo, hi].
    std::pair<std::size_t, std::size_t> range(double lo, double hi) const;

private:
    std::size_t d_ = 0;
    std::size_t n_ = 0;
    std::vector<double> sorted_;
    std::vector<double> first_;
};

struct PointEstimate {
    double f_hat = 0.0;
    double sigma2_hat = 0.0;
};

// f_hat = n^{-1} sum M(Z_i - x, h), sigma2_hat = n^{-1} sum M(Z_i - x, h)^2
PointEstimate estimate_at(const DeconvKernelTable& table, const SampleIndex& sample, std::span<const double> x);
PointEstimate estimate_at(const DeconvKernelTable& table, const Sample& sample, std::span<const double> x);

// sqrt(2 lambda sigma2 / n) + 4 M_inf lambda / (3 n prod h_j (h_j ^ 1)^{mu_j})
double envelope_U(const EnvelopeParams& env, const BandwidthVec& h, double sigma2_hat);
double envelope_U(const EnvelopeParams& env, const DeconvKernelTable& table, const SampleIndex& sample,
                  std::span<const double> x);

// M_inf prod h_j^{-1} (h_j ^ 1)^{-mu_j}, the sup-norm bound on M(., h).
double m_sup_bound(const EnvelopeParams& env, const BandwidthVec& h);

// (ln n + sum |ln h_j|)^{1/2} prod (n h_j)^{-1/2} (h_j ^ 1)^{-mu_j}
double variance_scale_F(const NoiseSpec& noise, const BandwidthVec& h, std::size_t n);

}  // namespace deconv
