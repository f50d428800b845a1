#pragma once

#include <cmath>
#include <compare>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace deconv {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class NoiseLaw { none, laplace, gaussian, custom };

std::string to_string(NoiseLaw law);
NoiseLaw noise_law_from_string(const std::string& name);

// Contamination model p = (1 - alpha) f + alpha (f * g) with known g.
struct NoiseSpec {
    std::size_t d = 1;
    double alpha = 0.0;
    // Characteristic function of g, t -> E exp(i t.Y).
    std::function<std::complex<double>(std::span<const double>)> g_fourier;
    std::vector<double> mu;   // ill-posedness exponents, meaningful when alpha == 1
    double epsilon = 1.0;     // lower bound of |1 - alpha + alpha g(t)|, used when alpha != 1
    double upsilon0 = 1.0;    // constant of the polynomial lower bound on |g(t)|, used when alpha == 1
    double g_l1_norm = 1.0;

    NoiseLaw law = NoiseLaw::custom;
    double scale = 1.0;               // length scale of g, also sizes the deconvolution box
    bool moderately_ill_posed = true; // polynomial decay of |g(t)|
    bool real_nonnegative = false;    // g(t) is real and >= 0 everywhere
    std::string tag;                  // stable identity for caching; empty disables disk caching

    void validate() const;
    // mu when alpha == 1, zero vector otherwise.
    std::vector<double> mu_alpha() const;
    std::complex<double> g_at(std::span<const double> t) const { return g_fourier(t); }
};

// Nikol'skii class and loss parameters. r_j may be kInf.
struct ClassParams {
    std::vector<double> beta;
    std::vector<double> r;
    std::vector<double> L;
    double R = 2.0;
    double Q = 1.0;
    double p = 2.0;

    std::size_t dim() const { return beta.size(); }
    void validate() const;
};

// Bandwidth vector h_j = e^{k_j}, stored by integer exponents.
class BandwidthVec {
public:
    BandwidthVec() = default;
    explicit BandwidthVec(std::vector<int> exponents) : k_(std::move(exponents)) {}

    std::size_t dim() const { return k_.size(); }
    const std::vector<int>& exponents() const { return k_; }
    int exponent(std::size_t j) const { return k_.at(j); }
    double value(std::size_t j) const;
    std::vector<double> values() const;
    double volume() const;                          // prod h_j
    double abs_log(std::size_t j) const { return std::abs(static_cast<double>(k_.at(j))); }
    double sum_abs_log() const;

    // Coordinatewise h >= eta.
    bool dominates(const BandwidthVec& eta) const;

    friend bool operator==(const BandwidthVec&, const BandwidthVec&) = default;
    friend auto operator<=>(const BandwidthVec& a, const BandwidthVec& b) { return a.k_ <=> b.k_; }

    std::string to_string() const;

private:
    std::vector<int> k_;
};

BandwidthVec bandwidth_join(const BandwidthVec& h, const BandwidthVec& eta);

enum class GridMode { anisotropic, isotropic };
std::string to_string(GridMode mode);
GridMode grid_mode_from_string(const std::string& name);

struct GridSpec {
    GridMode mode = GridMode::anisotropic;
    int k_min = -1;
    int k_max = 0;
};

// Lexicographically sorted grid elements.
std::vector<BandwidthVec> enumerate_grid(const GridSpec& spec, std::size_t d);

// Truncation used when the caller does not fix the exponent range:
// k_max = 0, k_min = ceil(-ln n / (1 + 2 max_j mu_j(alpha))).
GridSpec default_grid(std::size_t n, const std::vector<double>& mu_alpha,
                      GridMode mode = GridMode::anisotropic);

// n observations in R^d, row-major.
class Sample {
public:
    Sample() = default;
    Sample(std::size_t d, std::vector<double> points);

    std::size_t dim() const { return d_; }
    std::size_t size() const { return n_; }
    double at(std::size_t i, std::size_t j) const { return points_[i * d_ + j]; }
    std::span<const double> point(std::size_t i) const { return {points_.data() + i * d_, d_}; }
    const std::vector<double>& data() const { return points_; }

private:
    std::size_t d_ = 0;
    std::size_t n_ = 0;
    std::vector<double> points_;
};

}  // namespace deconv
