#pragma once

#include <cstddef>
#include <string>

#include "deconv/model.hpp"

namespace deconv {

// Built-in contamination laws. Laplace has g^(t) = prod 1/(1 + s^2 t_j^2)
// (mu_j = 2); Gaussian has g^(t) = exp(-s^2 |t|^2 / 2) and is only admitted
// for alpha < 1; `none` forces alpha = 0 with g^ = 1.
NoiseSpec builtin_noise(NoiseLaw law, double scale, std::size_t d, double alpha);

// Lower bound on |1 - alpha + alpha g^(t)| that holds without probing, or 0
// if none of the closed-form rules apply.
double certified_epsilon(double alpha, bool real_nonnegative, std::string* rule = nullptr);

struct NoiseCertificate {
    std::string assumption;      // name of the checked bound
    std::string rule;            // how the declared constant was obtained
    double declared = 0.0;       // epsilon (alpha != 1) or upsilon0 (alpha = 1)
    double lattice_min = 0.0;    // minimum of the bounded quantity over the probe lattice
    bool ok = false;
    bool mu_above_half = true;   // every mu_j > 1/2, forced by square integrability of g
};

// Probes the declared lower bound on a uniform lattice in [-t_max, t_max]^d.
NoiseCertificate certify_noise(const NoiseSpec& noise, double t_max = 64.0, std::size_t points_per_axis = 257);

}  // namespace deconv
