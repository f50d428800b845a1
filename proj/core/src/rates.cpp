#include "deconv/rates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deconv/error.hpp"

namespace deconv {

namespace {

constexpr double kDInf = std::numeric_limits<double>::infinity();

template <class T>
Extended<T> ext(double x) {
    if (std::isinf(x)) return x > 0 ? Extended<T>::infinity() : Extended<T>::neg_infinity();
    return Extended<T>(T(x));
}

template <class T>
Extended<T> emin(const Extended<T>& a, const Extended<T>& b) { return deconv::min(a, b); }

template <class T>
bool positive(const Extended<T>& x) { return x.sign() > 0; }

double dbl(const Extended<double>& x) { return x.to_double(); }

double abs_diff(double a, double b) {
    if (a == b) return 0.0;  // covers equal infinities
    return std::abs(a - b);
}

// kappa_alpha(s)/omega(alpha) = (2 + 1/beta(alpha)) - s/omega(alpha); finite
// whenever s is, and carries the sign of kappa.
template <class T>
Extended<T> kappa_over_omega(const Aggregates<T>& a, const Extended<T>& s) {
    return Extended<T>(T(2) + a.inv_beta_a) - s * Extended<T>(a.inv_omega_a);
}

template <class T>
Extended<T> tau_of(const Aggregates<T>& a, const Extended<T>& s) {
    return Extended<T>(T(1) - a.inv_omega0) + Extended<T>(a.inv_beta0) * s.reciprocal();
}

template <class T>
Extended<T> kappa_of(const Aggregates<T>& a, const Extended<T>& s) {
    const T c = T(2) + a.inv_beta_a;
    if (a.omega_a.is_finite() && s.is_finite()) return Extended<T>(a.omega_a.value() * c - s.value());
    return a.omega_a * kappa_over_omega(a, s);
}

template <class T>
Extended<T> p_star_of(const RateInputs& in) {
    Extended<T> ps = ext<T>(in.cls.p);
    for (double r : in.cls.r) ps = deconv::max(ps, ext<T>(r));
    return ps;
}

}  // namespace

std::vector<double> RateInputs::mu_alpha() const {
    if (alpha == 1.0) return mu;
    return std::vector<double>(dim(), 0.0);
}

void RateInputs::validate() const {
    cls.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    if (alpha == 1.0) {
        if (mu.size() != dim()) throw ValidationError("mu must have one entry per coordinate when alpha = 1");
        for (double m : mu)
            if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("mu_j must be positive and finite");
    }
    if (n < 2) throw ValidationError("n must be at least 2");
}

std::string to_string(Zone z) {
    switch (z) {
        case Zone::tail: return "tail";
        case Zone::dense: return "dense";
        case Zone::sparse1: return "sparse1";
        case Zone::sparse2: return "sparse2";
    }
    return "?";
}

std::string to_string(ZoneBoundary b) {
    switch (b) {
        case ZoneBoundary::none: return "none";
        case ZoneBoundary::kappa_eq_p_omega: return "kappa=p*omega";
        case ZoneBoundary::kappa_eq_zero: return "kappa=0";
    }
    return "?";
}

template <class T>
Aggregates<T> aggregates(const RateInputs& in) {
    in.validate();
    Aggregates<T> a;
    const auto mu = in.mu_alpha();
    for (std::size_t j = 0; j < in.dim(); ++j) {
        const T beta(in.cls.beta[j]);
        const T w = T(2) * T(mu[j]) + T(1);
        a.mu_alpha.push_back(T(mu[j]));
        a.inv_beta_a += w / beta;
        a.inv_beta0 += T(1) / beta;
        if (std::isfinite(in.cls.r[j])) {
            const T br = beta * T(in.cls.r[j]);
            a.inv_omega_a += w / br;
            a.inv_omega0 += T(1) / br;
        }
    }
    a.beta_a = Extended<T>(a.inv_beta_a).reciprocal();
    a.omega_a = Extended<T>(a.inv_omega_a).reciprocal();
    a.beta0 = Extended<T>(a.inv_beta0).reciprocal();
    a.omega0 = Extended<T>(a.inv_omega0).reciprocal();
    return a;
}

template <class T>
KappaTau<T> kappa_tau(const RateInputs& in, const Extended<T>& s) {
    const auto a = aggregates<T>(in);
    return {kappa_of(a, s), tau_of(a, s)};
}

template <class T>
RateExponents<T> rate_exponents(const RateInputs& in) {
    RateExponents<T> e;
    e.agg = aggregates<T>(in);
    const auto& a = e.agg;
    const Extended<T> p = ext<T>(in.cls.p);
    const Extended<T> one(T(1));
    const Extended<T> c(T(2) + a.inv_beta_a);
    const Extended<T> inf = Extended<T>::infinity();

    e.p_star = p_star_of<T>(in);
    e.kappa_p = kappa_of(a, p);
    e.kappa_pstar = kappa_of(a, e.p_star);
    e.kappa_p_over_omega = kappa_over_omega(a, p);
    e.tau_p = tau_of(a, p);
    e.tau_pstar = tau_of(a, e.p_star);
    e.tau_inf = tau_of(a, inf);
    e.z_a = a.omega_a * c * a.beta0 * e.tau_inf + one;

    const Extended<T>& kp = e.kappa_p_over_omega;
    const Extended<T> tail_exp = (one - one / p) / (one - Extended<T>(a.inv_omega_a) + Extended<T>(a.inv_beta_a));
    const Extended<T> dense_exp = one / c;
    // z/omega keeps the sparse exponent finite
    const Extended<T> z_over_omega = c * a.beta0 * e.tau_inf + Extended<T>(a.inv_omega_a);
    const Extended<T> sparse1_exp = e.tau_p * a.beta0 / z_over_omega;
    // omega(1 - p*/p)/kappa(p*) with kappa(p*)/p* = -1 at p* = inf
    const Extended<T> ps_inv = e.p_star.reciprocal();
    const Extended<T> sparse2_exp = (ps_inv - one / p) / (c * ps_inv - Extended<T>(a.inv_omega_a));
    const Extended<T> omega_over_p = a.omega_a / p;
    e.r_a = emin(tail_exp, dense_exp);

    if (kp > p) {
        e.zone = Zone::tail;
    } else if (positive(kp)) {
        e.zone = Zone::dense;
        if (kp == p) e.boundary = ZoneBoundary::kappa_eq_p_omega;
    } else {
        e.zone = positive(e.tau_pstar) ? Zone::sparse1 : Zone::sparse2;
        if (kp.sign() == 0) e.boundary = ZoneBoundary::kappa_eq_zero;
    }
    switch (e.zone) {
        case Zone::tail:
            e.varrho = e.rho = tail_exp;
            break;
        case Zone::dense:
            e.varrho = e.rho = dense_exp;
            break;
        case Zone::sparse1:
        case Zone::sparse2:
            e.varrho = e.zone == Zone::sparse1 ? sparse1_exp : sparse2_exp;
            e.rho = positive(e.tau_inf) ? sparse1_exp : omega_over_p;
            break;
    }
    const bool all_r_le_p =
        std::all_of(in.cls.r.begin(), in.cls.r.end(), [&](double r) { return r <= in.cls.p; });
    e.consistent = !(kp.sign() <= 0 && e.tau_p.sign() <= 0 && all_r_le_p);
    return e;
}

RateReport classify_and_rate(const RateInputs& in) {
    RateReport rep;
    rep.e = rate_exponents<double>(in);
    const auto mu = in.mu_alpha();
    for (std::size_t j = 0; j < in.dim(); ++j) {
        rep.L_a *= std::pow(in.cls.L[j], (2.0 * mu[j] + 1.0) / in.cls.beta[j]);
        rep.L_0 *= std::pow(in.cls.L[j], 1.0 / in.cls.beta[j]);
    }
    const double n = static_cast<double>(in.n);
    const double ln_n = std::log(n);
    const double p = in.cls.p;
    rep.delta_n = rep.L_a * ln_n / n;
    const double kp = dbl(rep.e.kappa_p_over_omega);
    if (kp > 0.0) {
        rep.bld_n = rep.L_a / n;
    } else if (rep.e.tau_pstar.sign() <= 0) {
        rep.bld_n = rep.L_a * ln_n / n;
    } else {
        // -kappa/(omega p tau(p))
        rep.bld_n = std::pow(rep.L_0, -kp / (p * dbl(rep.e.tau_p))) * rep.L_a * ln_n / n;
    }
    rep.t_grid = in.grid_mode == GridMode::anisotropic ? static_cast<int>(in.dim()) - 1 : 0;
    const double log_t = std::pow(ln_n, rep.t_grid);
    if (rep.e.zone == Zone::tail) rep.b_n = log_t;
    else if (rep.e.boundary == ZoneBoundary::kappa_eq_p_omega) rep.b_n = std::max(std::pow(ln_n, 1.0 / p), log_t);
    else if (rep.e.boundary == ZoneBoundary::kappa_eq_zero) rep.b_n = std::pow(ln_n, 1.0 / p);
    else rep.b_n = 1.0;
    rep.upper_scale = rep.b_n * std::pow(rep.delta_n, dbl(rep.e.rho));
    return rep;
}

template <class T>
GammaQ<T> gamma_q(const RateInputs& in) {
    const auto a = aggregates<T>(in);
    GammaQ<T> g;
    g.p_pm = ext<T>(in.cls.p);
    for (double r : in.cls.r)
        if (std::isfinite(r)) g.p_pm = deconv::max(g.p_pm, ext<T>(r));
    const Extended<T> tau_pm = tau_of(a, g.p_pm);
    if (tau_pm.sign() <= 0) throw ValidationError("embedding regime violated");
    const auto mu = in.mu_alpha();
    for (std::size_t j = 0; j < in.dim(); ++j) {
        const Extended<T> beta = ext<T>(in.cls.beta[j]);
        const Extended<T> w(T(2) * T(mu[j]) + T(1));
        if (std::isfinite(in.cls.r[j])) {
            g.gamma.push_back(beta * tau_pm / tau_of(a, ext<T>(in.cls.r[j])));
            g.q.push_back(g.p_pm);
        } else {
            g.gamma.push_back(beta);
            g.q.push_back(Extended<T>::infinity());
        }
        g.inv_gamma_a = g.inv_gamma_a + w / g.gamma.back();
        g.inv_upsilon_a = g.inv_upsilon_a + w / (g.gamma.back() * g.q.back());
    }
    return g;
}

BranchCheck branch_identities(const RateInputs& in) {
    const auto e = rate_exponents<double>(in);
    const auto& a = e.agg;
    using E = Extended<double>;
    const E p(in.cls.p);
    const E one(1.0);
    const E c(2.0 + a.inv_beta_a);
    const E z_over_omega = c * a.beta0 * e.tau_inf + E(a.inv_omega_a);
    const E sparse1 = e.tau_p * a.beta0 / z_over_omega;
    const E ps_inv = e.p_star.reciprocal();
    const E sparse2 = (ps_inv - one / p) / (c * ps_inv - E(a.inv_omega_a));
    const E omega_over_p = a.omega_a / p;

    BranchCheck out;
    out.kappa_pstar_nonneg = kappa_over_omega(a, e.p_star).sign() >= 0;
    E varrho, rho;
    if (out.kappa_pstar_nonneg) {
        varrho = e.r_a;
        rho = emin(e.r_a, omega_over_p);
    } else {
        varrho = emin(e.r_a, positive(e.tau_pstar) ? sparse1 : sparse2);
        rho = emin(e.r_a, positive(e.tau_inf) ? sparse1 : omega_over_p);
    }
    out.varrho_residual = abs_diff(dbl(varrho), dbl(e.varrho));
    out.rho_residual = abs_diff(dbl(rho), dbl(e.rho));
    return out;
}

double kappa_rs(const RateInputs& in, double r, double s) {
    const auto a = aggregates<double>(in);
    const double c = 2.0 + a.inv_beta_a;
    const double denom = a.inv_omega_a + (std::isinf(s) ? 0.0 : 1.0 / s);  // 1/omega + 1/s
    if (denom == 0.0) return kDInf;  // omega = s = inf: the normalised form is positive
    return c / denom - r;
}

namespace {

// sign-carrying normalisation of kappa_alpha(r, s): (2 + 1/beta) - r (1/omega + 1/s)
double kappa_rs_sign(const Aggregates<double>& a, double r, double s) {
    const double denom = a.inv_omega_a + (std::isinf(s) ? 0.0 : 1.0 / s);
    const double rd = denom == 0.0 ? 0.0 : r * denom;
    return 2.0 + a.inv_beta_a - rd;
}

RateInputs with_alpha_one(const RateInputs& in) {
    RateInputs o = in;
    o.alpha = 1.0;
    return o;
}

struct XY {
    double X = 0.0, Y = 0.0;
};

XY compute_xy(const RateInputs& in) {
    XY xy;
    const auto mu = in.mu_alpha();
    for (std::size_t j = 0; j < in.dim(); ++j) {
        xy.X += mu[j] / in.cls.beta[j];
        if (std::isfinite(in.cls.r[j])) xy.Y += mu[j] / (in.cls.beta[j] * in.cls.r[j]);
    }
    return xy;
}

double inv(double u) { return std::isinf(u) ? 0.0 : 1.0 / u; }

}  // namespace

IdentityReport exponent_identities(const RateInputs& in, double u) {
    if (!(u >= 1.0)) throw ValidationError("u must lie in [1, inf]");
    const auto e = rate_exponents<double>(in);
    const auto& a = e.agg;
    IdentityReport rep;
    const double tau_pstar = dbl(e.tau_pstar);
    const double tau_inf = dbl(e.tau_inf);
    const double beta0 = dbl(a.beta0);
    const double p_star = dbl(e.p_star);

    if (tau_pstar > 0.0) {
        const auto g = gamma_q<double>(in);
        const double inv_gamma = dbl(g.inv_gamma_a);
        const double inv_upsilon = dbl(g.inv_upsilon_a);
        // 1/gamma - 1/beta = [tau(inf) beta(0)]^{-1} [1/omega - 1/upsilon], compared multiplied out
        const double lhs = tau_inf * beta0 * (inv_gamma - a.inv_beta_a);
        const double rhs = a.inv_omega_a - inv_upsilon;
        rep.embedding_lhs = inv_gamma - a.inv_beta_a;
        rep.embedding_rhs = tau_inf != 0.0 ? rhs / (tau_inf * beta0) : 0.0;
        rep.embedding_residual = std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
    }

    const double c = 2.0 + a.inv_beta_a;
    const double z_over_omega = c * beta0 * tau_inf + a.inv_omega_a;
    const XY xy = compute_xy(in);
    const double u_star = tau_inf < 0.0 ? 1.0 / (-tau_inf * beta0) : kDInf;
    const double y = std::max(u_star, p_star);

    rep.z_positive.premise = kappa_rs_sign(a, p_star, u) <= 0.0 && tau_pstar > 0.0;
    rep.z_positive.conclusion = z_over_omega + inv(u) > 0.0;

    rep.z_over_omega.premise = xy.Y >= (xy.X + 1.0) * inv(y) - inv(u) && tau_pstar > 0.0;
    rep.z_over_omega.conclusion = z_over_omega - 1.0 + 2.0 * inv(u) >= 0.0;

    const auto a1 = aggregates<double>(with_alpha_one(in));
    rep.exists_s.premise = xy.Y - (xy.X + 1.0) * inv(y) > 0.0 && kappa_rs_sign(a1, p_star, kDInf) >= 0.0;
    if (rep.exists_s.premise && std::isfinite(p_star)) {
        // tau decreases, so the smallest admissible s is the only candidate worth testing
        double s = std::max(std::nextafter(p_star, kDInf), (1.0 + xy.X) / xy.Y);
        for (int k = 0; k < 64 && !(s > p_star); ++k) s = std::nextafter(s, kDInf);
        if (dbl(tau_of(a, Extended<double>(s))) > 0.0) {
            rep.exists_s.conclusion = true;
            rep.witness_s = s;
        }
    }
    return rep;
}

ThresholdScales threshold_scales(const RateInputs& in, double u, double a_const) {
    if (!(u >= 1.0)) throw ValidationError("u must lie in [1, inf]");
    if (!(a_const > 0.0)) throw ValidationError("tuning constant a must be positive");
    const auto rep = classify_and_rate(in);
    const auto& e = rep.e;
    const auto& a = e.agg;
    const double lnD = std::log(rep.delta_n) - 2.0 * std::log(a_const);
    const double c = 2.0 + a.inv_beta_a;
    const double beta0 = dbl(a.beta0);
    const double tau_inf = dbl(e.tau_inf);
    const double tau_pstar = dbl(e.tau_pstar);
    const double p_star = dbl(e.p_star);
    const double z_over_omega = c * beta0 * tau_inf + a.inv_omega_a;
    const double iu = inv(u);

    ThresholdScales t;
    const XY xy = compute_xy(in);
    t.X = xy.X;
    t.Y = xy.Y;
    t.Bv = std::exp(lnD / c);
    t.v_lower = std::exp(lnD / (1.0 - a.inv_omega_a + a.inv_beta_a));
    t.v_main = std::exp(lnD * tau_inf * beta0 / (z_over_omega + iu));
    t.v1 = std::isinf(u) ? 1.0 : std::exp(lnD / (1.0 - u * a.inv_omega0 + a.inv_beta0));
    {
        const auto a1 = aggregates<double>(with_alpha_one(in));
        const double c1 = 2.0 + a1.inv_beta_a;
        // u omega(1)/(kappa_1(p*, u)(omega(1) + u)) = 1/(c1 - p*/omega(1) - p*/u)
        const double denom = std::isinf(p_star) ? -kDInf : c1 - p_star * a1.inv_omega_a - p_star * iu;
        t.v2 = std::exp(lnD / denom);
    }
    t.pi_u = (a.inv_omega0 - iu) * (1.0 + xy.X) - a.inv_beta0 * (xy.Y + iu);
    t.v3 = t.pi_u <= 0.0 ? kDInf : std::exp(-lnD * (xy.Y + iu) / t.pi_u);
    t.v_bar = tau_pstar > 0.0 ? t.v_main : t.v2;
    t.u_star = tau_inf < 0.0 ? 1.0 / (-tau_inf * beta0) : kDInf;
    t.y = std::max(t.u_star, p_star);

    t.interval_lo = t.Bv;
    const bool y_condition = xy.Y >= (xy.X + 1.0) * inv(t.y) - iu;
    if (std::isinf(p_star)) {
        t.interval_case = 1;
        t.interval_hi = 1.0;
    } else if (in.alpha != 1.0) {
        t.interval_case = 2;
        t.interval_hi = t.v1;
    } else if (kappa_rs_sign(a, p_star, u) >= 0.0) {
        t.interval_case = 3;
        t.interval_hi = t.v3;
    } else if (y_condition) {
        t.interval_case = 4;
        t.interval_hi = t.v_bar;
    } else {
        t.interval_case = 5;
        t.interval_hi = std::min(t.v_bar, t.v3);
    }
    return t;
}

double frak_z(const RateInputs& in, double v, double u, double a_const) {
    if (std::isinf(u)) return 2.0;
    const auto rep = classify_and_rate(in);
    const auto& a = rep.e.agg;
    const double lnD = std::log(rep.delta_n) - 2.0 * std::log(a_const);
    const double c = 2.0 + a.inv_beta_a;
    const double q = 1.0 + u * a.inv_omega_a;  // (omega + u)/omega
    return 2.0 * std::exp(-lnD / q) * std::pow(v, c / q);
}

BandwidthVec snap_to_grid(const std::vector<double>& eta) {
    std::vector<int> k(eta.size());
    for (std::size_t j = 0; j < eta.size(); ++j) {
        if (!(eta[j] > 0.0) || !std::isfinite(eta[j])) throw ValidationError("bandwidth must be positive and finite");
        int kk = static_cast<int>(std::floor(std::log(eta[j])));
        // guard the floor against rounding of log near integers
        while (std::exp(static_cast<double>(kk + 1)) <= eta[j]) ++kk;
        while (std::exp(static_cast<double>(kk)) > eta[j]) --kk;
        k[j] = kk;
    }
    return BandwidthVec(k);
}

SpecialBandwidths special_bandwidths(const RateInputs& in, double v, double s, double a_const, double frak_L) {
    if (!(v > 0.0)) throw ValidationError("v must be positive");
    if (!(s >= 1.0)) throw ValidationError("s must lie in [1, inf]");
    const auto rep = classify_and_rate(in);
    const auto& a = rep.e.agg;
    if (frak_L <= 0.0) frak_L = std::min(1.0, *std::min_element(in.cls.L.begin(), in.cls.L.end()));
    const double lnD = std::log(rep.delta_n) - 2.0 * std::log(a_const);
    const double lnv = std::log(v);
    const double lnL = std::log(frak_L);

    auto build = [&](const std::vector<double>& smooth, const std::vector<double>& integ, double inv_sm,
                     double inv_int) {
        const double c = 2.0 + inv_sm;
        const double ws_den = inv(s) + inv_int;  // s w/(s + w) = 1/(1/s + 1/w)
        std::vector<double> eta(in.dim());
        for (std::size_t j = 0; j < in.dim(); ++j) {
            double t = 0.0;
            if (std::isfinite(integ[j])) t = 1.0 / (ws_den * smooth[j] * integ[j]);
            eta[j] = std::exp((lnL - std::log(in.cls.L[j])) / smooth[j] + t * lnD + (1.0 / smooth[j] - t * c) * lnv);
        }
        return eta;
    };

    SpecialBandwidths out;
    out.eta_tilde = build(in.cls.beta, in.cls.r, a.inv_beta_a, a.inv_omega_a);
    out.h_tilde = snap_to_grid(out.eta_tilde);
    if (rep.e.tau_pstar.sign() > 0) {
        const auto g = gamma_q<double>(in);
        std::vector<double> gam, q;
        for (std::size_t j = 0; j < in.dim(); ++j) {
            gam.push_back(dbl(g.gamma[j]));
            q.push_back(dbl(g.q[j]));
        }
        out.eta_hat = build(gam, q, dbl(g.inv_gamma_a), dbl(g.inv_upsilon_a));
        out.h_hat = snap_to_grid(out.eta_hat);
    }
    return out;
}

std::vector<double> bias_envelope(const RateInputs& in, const BandwidthVec& h, double C1, bool use_gamma) {
    if (h.dim() != in.dim()) throw ValidationError("bandwidth and class dimensions differ");
    std::vector<double> expo = in.cls.beta;
    if (use_gamma) {
        const auto g = gamma_q<double>(in);
        for (std::size_t j = 0; j < in.dim(); ++j) expo[j] = dbl(g.gamma[j]);
    }
    std::vector<double> out(in.dim());
    for (std::size_t j = 0; j < in.dim(); ++j) out[j] = C1 * in.cls.L[j] * std::pow(h.value(j), expo[j]);
    return out;
}

bool mu_restriction_holds(const std::vector<double>& mu) {
    return std::all_of(mu.begin(), mu.end(), [](double m) { return m > 0.5; });
}

template Aggregates<double> aggregates<double>(const RateInputs&);
template Aggregates<Rational> aggregates<Rational>(const RateInputs&);
template KappaTau<double> kappa_tau<double>(const RateInputs&, const Extended<double>&);
template KappaTau<Rational> kappa_tau<Rational>(const RateInputs&, const Extended<Rational>&);
template RateExponents<double> rate_exponents<double>(const RateInputs&);
template RateExponents<Rational> rate_exponents<Rational>(const RateInputs&);
template GammaQ<double> gamma_q<double>(const RateInputs&);
template GammaQ<Rational> gamma_q<Rational>(const RateInputs&);

}  // namespace deconv
