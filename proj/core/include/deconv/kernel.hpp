#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deconv/model.hpp"

namespace deconv {

// Fourier transform of the unit-radius normalized bump c_m (1 - u^2)^m,
// equal to (2m+1)!! j_m(u) / u^m.
double bump_fourier(int m, double u);

// c_m (1 - (u/R)^2)^m / R on [-R, R], zero outside; integrates to one.
class BaseKernel {
public:
    BaseKernel(int m, double radius);

    double operator()(double u) const;
    double fourier(double t) const { return bump_fourier(m_, radius_ * t); }

    int smoothness() const { return m_; }
    double radius() const { return radius_; }
    double normalizer() const { return c_m_; }  // c_m for unit radius

private:
    int m_;
    double radius_;
    double c_m_;
};

// sum_{i=1}^{ell} C(ell,i) (-1)^{i+1} (1/i) K(y/i)
class OrderKernel {
public:
    OrderKernel(int ell, BaseKernel base);

    double operator()(double y) const;
    double fourier(double t) const;
    // Majorant of |fourier(t)| with the exact decay order |t|^{-(m+1)}.
    double fourier_envelope(double t) const;

    int order() const { return ell_; }
    const BaseKernel& base() const { return base_; }
    const std::vector<double>& coefficients() const { return coef_; }
    double support() const { return ell_ * base_.radius(); }

private:
    int ell_;
    BaseKernel base_;
    std::vector<double> coef_;  // C(ell,i)(-1)^{i+1}, i = 1..ell
};

BaseKernel base_kernel(int m, double radius);

// Product kernel K(x) = prod_j K_ell(x_j) with its Fourier constants.
struct KernelSpec {
    int ell = 2;
    int m = 1;
    double radius = 1.0;
    std::size_t d = 1;
    std::vector<double> mu_alpha;  // weights used for k1, k2
    double k1 = 0.0;               // int |K^(t)| prod (1+t_j^2)^{mu_j/2} dt
    double k2 = 0.0;               // sqrt of int |K^(t)|^2 prod (1+t_j^2)^{mu_j} dt
    double kcheck_l1 = 0.0;        // int |K^(t)| dt

    OrderKernel univariate() const { return OrderKernel(ell, BaseKernel(m, radius)); }
    double value(std::span<const double> y) const;
    // K_h(y) = V_h^{-1} K(y/h)
    double scaled_value(std::span<const double> y, std::span<const double> h) const;
    std::string cache_key() const;
};

OrderKernel order_ell_kernel(const KernelSpec& spec);

std::complex<double> product_kernel_fourier(const KernelSpec& spec, std::span<const double> t);

// Default base smoothness: ceil(max mu) + 2 when alpha = 1, else 1.
int default_base_smoothness(const NoiseSpec& noise);

// Builds the spec for `noise` and fills k1, k2, kcheck_l1.
// Throws AssumptionError if the Fourier integrals diverge.
KernelSpec make_kernel(int ell, int m, double radius, const NoiseSpec& noise);

// Returns (k1, k2) for the weights mu(alpha) of `noise`.
std::pair<double, double> verify_kernel_integrability(const KernelSpec& spec, const NoiseSpec& noise);

// int_R |K_ell^(t)|^power (1 + t^2)^{weight_exponent/2} dt, or throws if the
// integrand decays too slowly to be integrable.
double weighted_fourier_integral(const OrderKernel& kernel, int power, double weight_exponent);

// int_R |K_ell(z)| |z|^s dz
double kernel_moment(const OrderKernel& kernel, double s);

}  // namespace deconv
