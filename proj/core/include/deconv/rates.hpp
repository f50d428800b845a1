#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "deconv/extended_real.hpp"
#include "deconv/model.hpp"

namespace deconv {

using Rational = boost::multiprecision::cpp_rational;

struct RateInputs {
    ClassParams cls;
    double alpha = 0.0;
    std::vector<double> mu;  // ill-posedness exponents; used only when alpha == 1
    std::size_t n = 1000;
    GridMode grid_mode = GridMode::anisotropic;

    std::size_t dim() const { return cls.dim(); }
    std::vector<double> mu_alpha() const;
    void validate() const;
};

enum class Zone { tail, dense, sparse1, sparse2 };
// Points where kappa_alpha(p) = p omega(alpha) or kappa_alpha(p) = 0; the zone
// keeps the label of the closed side (dense, sparse).
enum class ZoneBoundary { none, kappa_eq_p_omega, kappa_eq_zero };

std::string to_string(Zone z);
std::string to_string(ZoneBoundary b);

template <class T>
struct Aggregates {
    std::vector<T> mu_alpha;
    T inv_beta_a{};               // 1/beta(alpha) = sum (2 mu_j + 1)/beta_j
    T inv_omega_a{};              // 1/omega(alpha) = sum (2 mu_j + 1)/(beta_j r_j), 0 when all r_j = inf
    T inv_beta0{};
    T inv_omega0{};
    Extended<T> beta_a, omega_a, beta0, omega0;
};

template <class T>
Aggregates<T> aggregates(const RateInputs& in);

// kappa_alpha(s) = omega(alpha)(2 + 1/beta(alpha)) - s and tau(s) = 1 - 1/omega(0) + 1/(s beta(0)).
template <class T>
struct KappaTau {
    Extended<T> kappa;
    Extended<T> tau;
};
template <class T>
KappaTau<T> kappa_tau(const RateInputs& in, const Extended<T>& s);

template <class T>
struct RateExponents {
    Aggregates<T> agg;
    Extended<T> p_star;
    Extended<T> kappa_p, kappa_pstar;
    Extended<T> kappa_p_over_omega;  // kappa_alpha(p)/omega(alpha), finite even when omega = inf
    Extended<T> tau_p, tau_pstar, tau_inf;
    Extended<T> z_a;                 // omega(alpha)(2 + 1/beta(alpha)) beta(0) tau(inf) + 1
    Extended<T> r_a;                 // min of the tail and dense exponents
    Zone zone = Zone::dense;
    ZoneBoundary boundary = ZoneBoundary::none;
    Extended<T> varrho;              // general case
    Extended<T> rho;                 // bounded case
    bool consistent = true;
};

template <class T>
RateExponents<T> rate_exponents(const RateInputs& in);

struct RateReport {
    RateExponents<double> e;
    double L_a = 1.0;
    double L_0 = 1.0;
    double delta_n = 0.0;   // L(alpha) n^{-1} ln n
    double bld_n = 0.0;     // lower-bound scale
    double b_n = 1.0;       // logarithmic factor of the upper bound
    int t_grid = 0;         // d - 1 (anisotropic) or 0 (isotropic)
    double upper_scale = 0.0;  // b_n delta_n^rho
};

RateReport classify_and_rate(const RateInputs& in);

template <class T>
struct GammaQ {
    Extended<T> p_pm;
    std::vector<Extended<T>> gamma;
    std::vector<Extended<T>> q;
    Extended<T> inv_gamma_a;    // 1/gamma(alpha)
    Extended<T> inv_upsilon_a;  // 1/upsilon(alpha)
};

// Throws ValidationError("embedding regime violated") when tau(p_pm) <= 0.
template <class T>
GammaQ<T> gamma_q(const RateInputs& in);

// Branch identities: recomputes varrho and rho through the min-forms valid on
// either side of kappa_alpha(p*) = 0. Residuals are |branch - min-form|.
struct BranchCheck {
    bool kappa_pstar_nonneg = false;
    double varrho_residual = 0.0;
    double rho_residual = 0.0;
};
BranchCheck branch_identities(const RateInputs& in);

struct Implication {
    bool premise = false;
    bool conclusion = false;
    bool holds() const { return !premise || conclusion; }
};

struct IdentityReport {
    std::optional<double> embedding_residual;  // empty when tau(p*) <= 0
    double embedding_lhs = 0.0, embedding_rhs = 0.0;
    Implication z_positive;           // kappa(p*, u) <= 0, tau(p*) > 0  =>  z + omega/u > 0
    Implication z_over_omega;         // Y >= (X+1)/y - 1/u, tau(p*) > 0  =>  z/omega - 1 + 2/u >= 0
    Implication exists_s;             // Y - (X+1)/y > 0, kappa_1(p*) >= 0  =>  some s > p* with tau(s) > 0, s >= (1+X)/Y
    std::optional<double> witness_s;
};

IdentityReport exponent_identities(const RateInputs& in, double u);

// kappa_alpha(r, s) = s omega(alpha)(2 + 1/beta(alpha))/(s + omega(alpha)) - r
double kappa_rs(const RateInputs& in, double r, double s);

struct ThresholdScales {
    double X = 0.0, Y = 0.0;
    double Bv = 0.0;       // (a^-2 delta_n)^{1/(2 + 1/beta(alpha))}
    double v_lower = 0.0;
    double v_main = 0.0;
    double v1 = 0.0, v2 = 0.0, v3 = 0.0;
    double v_bar = 0.0;
    double pi_u = 0.0;
    double u_star = 0.0;
    double y = 0.0;
    double interval_lo = 0.0, interval_hi = 0.0;
    int interval_case = 0;  // 1..5 in the order of the case table
};

// u in [1, inf]; a is the tuning constant of the bandwidth construction.
ThresholdScales threshold_scales(const RateInputs& in, double u, double a = 1.0);

// 2 (a^-2 delta_n)^{-omega/(omega+u)} v^{omega(2+1/beta)/(u+omega)}; identically 2 at u = inf.
double frak_z(const RateInputs& in, double v, double u, double a = 1.0);

struct SpecialBandwidths {
    std::vector<double> eta_tilde;
    std::vector<double> eta_hat;  // empty when gamma_q is undefined
    BandwidthVec h_tilde;         // largest grid points below eta
    BandwidthVec h_hat;
};

SpecialBandwidths special_bandwidths(const RateInputs& in, double v, double s, double a = 1.0, double frak_L = 0.0);

// max {e^k : e^k <= eta}
BandwidthVec snap_to_grid(const std::vector<double>& eta);

// (C1 L_j h_j^{beta_j})_j, or with gamma_j when use_gamma.
std::vector<double> bias_envelope(const RateInputs& in, const BandwidthVec& h, double C1, bool use_gamma = false);

// Bounded noise density forces mu_j > 1/2.
bool mu_restriction_holds(const std::vector<double>& mu);

}  // namespace deconv
