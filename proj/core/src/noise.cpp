#include "deconv/noise.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "deconv/error.hpp"

namespace deconv {

double certified_epsilon(double alpha, bool real_nonnegative, std::string* rule) {
    auto set = [&](const char* r) {
        if (rule) *rule = r;
    };
    if (alpha == 0.0) {
        set("direct observations");
        return 1.0;
    }
    if (alpha < 0.5) {
        set("1-2alpha");
        return 1.0 - 2.0 * alpha;
    }
    if (alpha < 1.0 && real_nonnegative) {
        set("1-alpha (g^ real and nonnegative)");
        return 1.0 - alpha;
    }
    set("none");
    return 0.0;
}

NoiseSpec builtin_noise(NoiseLaw law, double scale, std::size_t d, double alpha) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("noise scale must be positive");
    if (d == 0) throw ValidationError("noise dimension must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");

    NoiseSpec n;
    n.d = d;
    n.alpha = alpha;
    n.law = law;
    n.scale = scale;
    n.g_l1_norm = 1.0;
    std::ostringstream tag;
    tag.precision(17);
    tag << to_string(law) << ":s=" << scale << ":d=" << d;
    n.tag = tag.str();

    switch (law) {
        case NoiseLaw::none:
            if (alpha != 0.0) throw ValidationError("noise law 'none' requires alpha = 0");
            n.g_fourier = [](std::span<const double>) { return std::complex<double>(1.0, 0.0); };
            n.mu.assign(d, 1.0);  // unused at alpha = 0
            n.real_nonnegative = true;
            n.epsilon = 1.0;
            n.upsilon0 = 1.0;
            break;
        case NoiseLaw::laplace: {
            const double s2 = scale * scale;
            n.g_fourier = [s2](std::span<const double> t) {
                double v = 1.0;
                for (double tj : t) v /= 1.0 + s2 * tj * tj;
                return std::complex<double>(v, 0.0);
            };
            n.mu.assign(d, 2.0);
            n.real_nonnegative = true;
            // (1+t^2)/(1+s^2 t^2) >= min(1, 1/s^2), attained at t = 0 or t -> inf.
            n.upsilon0 = std::pow(std::min(1.0, 1.0 / s2), static_cast<double>(d));
            n.epsilon = alpha == 1.0 ? 1.0 : certified_epsilon(alpha, true);
            break;
        }
        case NoiseLaw::gaussian: {
            if (alpha == 1.0)
                throw AssumptionError("moderate ill-posedness of the noise",
                                      "gaussian g^ decays exponentially (severely ill-posed); "
                                      "only alpha < 1 is admitted");
            const double s2 = scale * scale;
            n.g_fourier = [s2](std::span<const double> t) {
                double q = 0.0;
                for (double tj : t) q += tj * tj;
                return std::complex<double>(std::exp(-0.5 * s2 * q), 0.0);
            };
            n.mu.assign(d, 1.0);  // unused below alpha = 1
            n.moderately_ill_posed = false;
            n.real_nonnegative = true;
            n.upsilon0 = 1.0;
            n.epsilon = certified_epsilon(alpha, true);
            break;
        }
        case NoiseLaw::custom:
            throw ValidationError("custom noise laws are built directly as NoiseSpec values");
    }
    n.validate();
    return n;
}

NoiseCertificate certify_noise(const NoiseSpec& noise, double t_max, std::size_t points_per_axis) {
    noise.validate();
    NoiseCertificate c;
    const std::size_t d = noise.d;
    std::size_t ppa = points_per_axis;
    while (d > 1 && std::pow(static_cast<double>(ppa), static_cast<double>(d)) > 4e5 && ppa > 9) ppa = ppa / 2 + 1;
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) total *= ppa;

    const bool deconv = noise.alpha == 1.0;
    if (deconv) {
        c.assumption = "noise Fourier lower bound |g^(t)| >= upsilon0 prod (1+t_j^2)^(-mu_j/2)";
        c.rule = noise.law == NoiseLaw::laplace ? "closed form min(1, s^-2)^d" : "declared";
        c.declared = noise.upsilon0;
        for (double m : noise.mu) c.mu_above_half = c.mu_above_half && m > 0.5;
        if (!noise.moderately_ill_posed) c.mu_above_half = false;
    } else {
        c.assumption = "noise denominator bound |1-alpha+alpha g^(t)| >= epsilon";
        std::string rule;
        const double eps = certified_epsilon(noise.alpha, noise.real_nonnegative, &rule);
        c.rule = eps > 0.0 && std::abs(eps - noise.epsilon) <= 1e-15 * eps ? rule : "declared";
        c.declared = noise.epsilon;
    }

    double mn = std::numeric_limits<double>::infinity();
    std::vector<double> t(d);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        double weight = 1.0;
        for (std::size_t j = d; j-- > 0;) {
            const std::size_t q = rem % ppa;
            rem /= ppa;
            t[j] = -t_max + 2.0 * t_max * static_cast<double>(q) / static_cast<double>(ppa - 1);
            if (deconv) weight *= std::pow(1.0 + t[j] * t[j], 0.5 * noise.mu[j]);
        }
        const std::complex<double> g = noise.g_fourier(t);
        const double v = deconv ? std::abs(g) * weight : std::abs(1.0 - noise.alpha + noise.alpha * g);
        mn = std::min(mn, v);
    }
    c.lattice_min = mn;
    c.ok = mn >= c.declared * (1.0 - 1e-12) && (!deconv || noise.moderately_ill_posed);
    return c;
}

}  // namespace deconv
