#include "deconv/kernel.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

#include "deconv/error.hpp"

namespace deconv {
namespace {

double double_factorial_odd(int m) {  // (2m+1)!!
    double v = 1.0;
    for (int k = 3; k <= 2 * m + 1; k += 2) v *= k;
    return v;
}

double bump_fourier_series(int m, double u) {
    // sum_k (-1)^k u^{2k} (2m+1)!! / (2^k k! (2m+2k+1)!!)
    const double u2 = u * u;
    double term = 1.0, sum = 1.0;
    for (int k = 0; k < 200; ++k) {
        term *= -u2 / (2.0 * (k + 1) * (2.0 * m + 2.0 * k + 3.0));
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

double bump_fourier_bessel(int m, double x) {
    // upward recurrence for j_m, stable for x > m
    const double s = std::sin(x), c = std::cos(x);
    double j0 = s / x;
    if (m == 0) return j0;
    double j1 = s / (x * x) - c / x;
    for (int k = 1; k < m; ++k) {
        double j2 = (2.0 * k + 1.0) / x * j1 - j0;
        j0 = j1;
        j1 = j2;
    }
    return double_factorial_odd(m) * j1 / std::pow(x, m);
}

template <class F>
double bisect_root(F&& f, double a, double b, double fa) {
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (a + b);
        double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0) == (fa < 0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    return 0.5 * (a + b);
}

// int_lo^hi |f|^power w over [lo, hi] split at the sign changes of f found on
// a uniform scan with `pieces` cells.
template <class F, class W>
double abs_power_integral(F&& f, W&& w, int power, double lo, double hi, long pieces) {
    using rule = boost::math::quadrature::gauss<double, 10>;
    auto integrand = [&](double t) { return std::pow(std::abs(f(t)), power) * w(t); };
    const double step = (hi - lo) / static_cast<double>(pieces);
    double sum = 0.0;
    double a = lo, fa = f(lo);
    for (long s = 1; s <= pieces; ++s) {
        const double b = s == pieces ? hi : lo + s * step;
        const double fb = f(b);
        if (power % 2 == 1 && ((fa < 0 && fb > 0) || (fa > 0 && fb < 0))) {
            const double root = bisect_root(f, a, b, fa);
            sum += rule::integrate(integrand, a, root) + rule::integrate(integrand, root, b);
        } else {
            sum += rule::integrate(integrand, a, b);
        }
        a = b;
        fa = fb;
    }
    return sum;
}

std::mutex g_memo_mutex;
std::map<std::tuple<int, int, double, int, double>, double> g_memo;

}  // namespace

double bump_fourier(int m, double u) {
    const double x = std::abs(u);
    if (x <= std::max(2.0, static_cast<double>(m))) return bump_fourier_series(m, x);
    return bump_fourier_bessel(m, x);
}

BaseKernel::BaseKernel(int m, double radius) : m_(m), radius_(radius) {
    if (m < 0) throw ValidationError("base kernel smoothness m must be >= 0");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("kernel support radius must be positive");
    c_m_ = std::tgamma(m + 1.5) / (std::sqrt(std::numbers::pi) * std::tgamma(m + 1.0));
}

double BaseKernel::operator()(double u) const {
    const double z = u / radius_;
    if (std::abs(z) > 1.0) return 0.0;
    return c_m_ * std::pow(1.0 - z * z, m_) / radius_;
}

OrderKernel::OrderKernel(int ell, BaseKernel base) : ell_(ell), base_(base) {
    if (ell < 1) throw ValidationError("kernel order ell must be >= 1");
    double binom = 1.0;
    for (int i = 1; i <= ell; ++i) {
        binom = binom * (ell - i + 1) / i;
        coef_.push_back((i % 2 == 1 ? 1.0 : -1.0) * binom);
    }
}

double OrderKernel::operator()(double y) const {
    double s = 0.0;
    for (int i = 1; i <= ell_; ++i) s += coef_[i - 1] / i * base_(y / i);
    return s;
}

double OrderKernel::fourier(double t) const {
    double s = 0.0;
    for (int i = 1; i <= ell_; ++i) s += coef_[i - 1] * base_.fourier(i * t);
    return s;
}

double OrderKernel::fourier_envelope(double t) const {
    const int m = base_.smoothness();
    const double a = 2.0 * double_factorial_odd(m);
    double s = 0.0;
    for (int i = 1; i <= ell_; ++i) {
        const double u = std::abs(i * base_.radius() * t);
        s += std::abs(coef_[i - 1]) * std::min(1.0, a / std::pow(u, m + 1));
    }
    return s;
}

BaseKernel base_kernel(int m, double radius) { return BaseKernel(m, radius); }

OrderKernel order_ell_kernel(const KernelSpec& spec) { return spec.univariate(); }

double KernelSpec::value(std::span<const double> y) const {
    const OrderKernel k = univariate();
    double v = 1.0;
    for (double yj : y) {
        v *= k(yj);
        if (v == 0.0) break;
    }
    return v;
}

double KernelSpec::scaled_value(std::span<const double> y, std::span<const double> h) const {
    const OrderKernel k = univariate();
    double v = 1.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        v *= k(y[j] / h[j]) / h[j];
        if (v == 0.0) break;
    }
    return v;
}

std::string KernelSpec::cache_key() const {
    std::ostringstream os;
    os.precision(17);
    os << "ell=" << ell << ";m=" << m << ";R=" << radius << ";d=" << d;
    return os.str();
}

std::complex<double> product_kernel_fourier(const KernelSpec& spec, std::span<const double> t) {
    const OrderKernel k = spec.univariate();
    double v = 1.0;
    for (double tj : t) v *= k.fourier(tj);
    return {v, 0.0};
}

int default_base_smoothness(const NoiseSpec& noise) {
    if (noise.alpha != 1.0) return 1;
    double mu_max = 0.0;
    for (double m : noise.mu) mu_max = std::max(mu_max, m);
    return static_cast<int>(std::ceil(mu_max)) + 2;
}

double weighted_fourier_integral(const OrderKernel& kernel, int power, double weight_exponent) {
    const int m = kernel.base().smoothness();
    const double R = kernel.base().radius();
    const double decay = weight_exponent - power * (m + 1.0);
    if (!(decay < -1.0))
        throw std::domain_error("integrand decays like |t|^" + std::to_string(decay) + ", not integrable");

    const auto key = std::make_tuple(kernel.order(), m, R, power, weight_exponent);
    {
        std::lock_guard lock(g_memo_mutex);
        if (auto it = g_memo.find(key); it != g_memo.end()) return it->second;
    }

    const double period = 2.0 * std::numbers::pi / R;
    constexpr long kPeriods = 4096;
    const long cells_per_period = 16L * kernel.order();
    const double t0 = kPeriods * period;
    auto f = [&](double t) { return kernel.fourier(t); };
    auto w = [&](double t) { return std::pow(1.0 + t * t, 0.5 * weight_exponent); };
    const double body = abs_power_integral(f, w, power, 0.0, t0, kPeriods * cells_per_period);

    // Beyond t0 the transform is S(t)/t^{m+1} up to O(t^{-m-2}), with S periodic of period 2pi/R.
    const double dfo = double_factorial_odd(m);
    auto profile = [&](double t) {
        double s = 0.0;
        const auto& c = kernel.coefficients();
        for (int i = 1; i <= kernel.order(); ++i)
            s += c[i - 1] * dfo * std::sin(i * R * t - 0.5 * m * std::numbers::pi) / std::pow(i * R, m + 1);
        return s;
    };
    const double mean = abs_power_integral(profile, [](double) { return 1.0; }, power, 0.0, period,
                                           cells_per_period) / period;
    const double tail = mean * std::pow(t0, decay + 1.0) / (-decay - 1.0);
    const double result = 2.0 * (body + tail);

    std::lock_guard lock(g_memo_mutex);
    g_memo.emplace(key, result);
    return result;
}

std::pair<double, double> verify_kernel_integrability(const KernelSpec& spec, const NoiseSpec& noise) {
    const std::vector<double> mu = noise.mu_alpha();
    if (mu.size() != spec.d) throw ValidationError("kernel and noise dimensions differ");
    const OrderKernel k = spec.univariate();
    double k1 = 1.0, k2sq = 1.0;
    for (std::size_t j = 0; j < spec.d; ++j) {
        std::ostringstream ctx;
        ctx << "coordinate " << j << ": |K^(t)| decays like |t|^-" << (spec.m + 1) << " while the weight grows like |t|^"
            << mu[j];
        if (!(spec.m > mu[j]))
            throw AssumptionError("kernel Fourier integrability (k1)",
                                  ctx.str() + "; need base smoothness m > " + std::to_string(mu[j]) +
                                      " (decay order m+1 > mu_j+1), got m=" + std::to_string(spec.m));
        if (!(spec.m > mu[j] - 0.5))
            throw AssumptionError("kernel Fourier integrability (k2)",
                                  ctx.str() + "; need decay order m+1 > mu_j+1/2");
        k1 *= weighted_fourier_integral(k, 1, mu[j]);
        k2sq *= weighted_fourier_integral(k, 2, 2.0 * mu[j]);
    }
    if (!std::isfinite(k1) || !std::isfinite(k2sq) || !(k1 > 0) || !(k2sq > 0))
        throw AssumptionError("kernel Fourier integrability", "quadrature produced a non-finite constant");
    return {k1, std::sqrt(k2sq)};
}

KernelSpec make_kernel(int ell, int m, double radius, const NoiseSpec& noise) {
    KernelSpec spec;
    spec.ell = ell;
    spec.m = m;
    spec.radius = radius;
    spec.d = noise.d;
    spec.mu_alpha = noise.mu_alpha();
    const OrderKernel k = spec.univariate();  // validates ell, m, radius
    auto [k1, k2] = verify_kernel_integrability(spec, noise);
    spec.k1 = k1;
    spec.k2 = k2;
    spec.kcheck_l1 = std::pow(weighted_fourier_integral(k, 1, 0.0), static_cast<double>(spec.d));
    return spec;
}

double kernel_moment(const OrderKernel& kernel, double s) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double R = kernel.base().radius();
    auto f = [&](double z) { return kernel(z); };
    auto g = [&](double z) { return std::abs(kernel(z)) * std::pow(z, s); };
    double total = 0.0;
    for (int i = 0; i < kernel.order(); ++i) {  // K_ell is smooth on each [iR, (i+1)R]
        const double lo = i * R, hi = (i + 1) * R;
        constexpr int kScan = 256;
        double a = lo, prev = lo, fa = f(lo + 1e-15 * R);
        for (int c = 1; c <= kScan; ++c) {
            const double b = lo + (hi - lo) * c / kScan;
            const double fb = f(c == kScan ? hi - 1e-15 * R : b);
            if ((fa < 0 && fb > 0) || (fa > 0 && fb < 0)) {
                const double root = bisect_root(f, prev, b, fa);
                total += gk::integrate(g, a, root, 15, 1e-14);
                a = root;
            }
            if (fb != 0.0) fa = fb;
            prev = b;
        }
        total += gk::integrate(g, a, hi, 15, 1e-14);
    }
    return 2.0 * total;
}

}  // namespace deconv
