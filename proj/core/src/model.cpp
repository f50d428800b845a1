#include "deconv/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deconv/error.hpp"

namespace deconv {

std::string to_string(NoiseLaw law) {
    switch (law) {
        case NoiseLaw::none: return "none";
        case NoiseLaw::laplace: return "laplace";
        case NoiseLaw::gaussian: return "gaussian";
        case NoiseLaw::custom: return "custom";
    }
    return "custom";
}

NoiseLaw noise_law_from_string(const std::string& name) {
    if (name == "none") return NoiseLaw::none;
    if (name == "laplace") return NoiseLaw::laplace;
    if (name == "gaussian") return NoiseLaw::gaussian;
    throw ValidationError("unknown noise law '" + name + "' (expected none, laplace or gaussian)");
}

void NoiseSpec::validate() const {
    if (d == 0) throw ValidationError("noise dimension must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
    if (!g_fourier) throw ValidationError("noise characteristic function missing");
    if (mu.size() != d) throw ValidationError("mu must have one entry per coordinate");
    for (double m : mu)
        if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("mu_j must be positive and finite");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (!(upsilon0 > 0.0)) throw ValidationError("upsilon0 must be positive");
    if (!(g_l1_norm > 0.0)) throw ValidationError("||g||_1 must be positive");
    if (!(scale > 0.0)) throw ValidationError("noise scale must be positive");
}

std::vector<double> NoiseSpec::mu_alpha() const {
    if (alpha == 1.0) return mu;
    return std::vector<double>(d, 0.0);
}

void ClassParams::validate() const {
    const std::size_t d = beta.size();
    if (d == 0) throw ValidationError("class parameters need at least one coordinate");
    if (r.size() != d || L.size() != d) throw ValidationError("beta, r and L must have equal length");
    for (std::size_t j = 0; j < d; ++j) {
        if (!(beta[j] > 0.0) || !std::isfinite(beta[j])) throw ValidationError("beta_j must be positive");
        if (!(r[j] >= 1.0)) throw ValidationError("r_j must be >= 1");
        if (!(L[j] > 0.0) || !std::isfinite(L[j])) throw ValidationError("L_j must be positive");
    }
    if (!(R > 1.0)) throw ValidationError("R must exceed 1");
    if (!(Q > 0.0)) throw ValidationError("Q must be positive");
    if (!(p > 1.0) || !std::isfinite(p)) throw ValidationError("p must lie in (1, inf)");
}

double BandwidthVec::value(std::size_t j) const { return std::exp(static_cast<double>(k_.at(j))); }

std::vector<double> BandwidthVec::values() const {
    std::vector<double> v(k_.size());
    for (std::size_t j = 0; j < k_.size(); ++j) v[j] = value(j);
    return v;
}

double BandwidthVec::volume() const {
    long s = 0;
    for (int k : k_) s += k;
    return std::exp(static_cast<double>(s));
}

double BandwidthVec::sum_abs_log() const {
    long s = 0;
    for (int k : k_) s += std::abs(k);
    return static_cast<double>(s);
}

bool BandwidthVec::dominates(const BandwidthVec& eta) const {
    if (eta.dim() != dim()) throw ValidationError("bandwidth dimension mismatch");
    for (std::size_t j = 0; j < k_.size(); ++j)
        if (k_[j] < eta.k_[j]) return false;
    return true;
}

std::string BandwidthVec::to_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t j = 0; j < k_.size(); ++j) os << (j ? "," : "") << k_[j];
    os << ')';
    return os.str();
}

BandwidthVec bandwidth_join(const BandwidthVec& h, const BandwidthVec& eta) {
    if (h.dim() != eta.dim()) throw ValidationError("bandwidth dimension mismatch in join");
    std::vector<int> k(h.dim());
    for (std::size_t j = 0; j < k.size(); ++j) k[j] = std::max(h.exponent(j), eta.exponent(j));
    return BandwidthVec(std::move(k));
}

std::string to_string(GridMode mode) {
    return mode == GridMode::isotropic ? "isotropic" : "anisotropic";
}

GridMode grid_mode_from_string(const std::string& name) {
    if (name == "anisotropic") return GridMode::anisotropic;
    if (name == "isotropic") return GridMode::isotropic;
    throw ValidationError("unknown grid mode '" + name + "'");
}

std::vector<BandwidthVec> enumerate_grid(const GridSpec& spec, std::size_t d) {
    if (d == 0) throw ValidationError("grid dimension must be positive");
    if (spec.k_min > spec.k_max) throw ValidationError("empty grid");
    const int m = spec.k_max - spec.k_min + 1;
    std::vector<BandwidthVec> out;
    if (spec.mode == GridMode::isotropic) {
        for (int k = spec.k_min; k <= spec.k_max; ++k) out.emplace_back(std::vector<int>(d, k));
        return out;
    }
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) {
        total *= static_cast<std::size_t>(m);
        if (total > (1u << 24)) throw ValidationError("grid too large");
    }
    out.reserve(total);
    std::vector<int> k(d, spec.k_min);
    for (std::size_t c = 0; c < total; ++c) {
        out.emplace_back(k);
        for (std::size_t j = d; j-- > 0;) {  // odometer, last coordinate fastest
            if (++k[j] <= spec.k_max) break;
            k[j] = spec.k_min;
        }
    }
    return out;
}

GridSpec default_grid(std::size_t n, const std::vector<double>& mu_alpha, GridMode mode) {
    if (n < 2) throw ValidationError("sample size must be at least 2");
    double mu_max = 0.0;
    for (double m : mu_alpha) mu_max = std::max(mu_max, m);
    GridSpec g;
    g.mode = mode;
    g.k_max = 0;
    g.k_min = static_cast<int>(std::ceil(-std::log(static_cast<double>(n)) / (1.0 + 2.0 * mu_max)));
    return g;
}

Sample::Sample(std::size_t d, std::vector<double> points) : d_(d), points_(std::move(points)) {
    if (d_ == 0) throw ValidationError("sample dimension must be positive");
    if (points_.size() % d_ != 0) throw ValidationError("sample array shape does not match dimension");
    n_ = points_.size() / d_;
    if (n_ == 0) throw ValidationError("sample is empty");
    for (double v : points_)
        if (!std::isfinite(v)) throw ValidationError("sample contains a non-finite value");
}

}  // namespace deconv
