#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "../support/poly_kernel.hpp"
#include "deconv/error.hpp"
#include "deconv/estimator.hpp"
#include "deconv/noise.hpp"

using namespace deconv;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

EnvelopeParams env1(double m_inf, double p, double mu, std::size_t n) {
    EnvelopeParams e;
    e.m_inf = m_inf;
    e.p = p;
    e.mu_alpha = {mu};
    e.n = n;
    return e;
}

Sample random_sample(std::size_t n, std::uint64_t seed, double spread = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, spread);
    std::vector<double> pts(n);
    for (auto& v : pts) v = nd(rng);
    return Sample(1, pts);
}

}  // namespace

TEST_CASE("M_inf display") {
    NoiseSpec direct = builtin_noise(NoiseLaw::none, 1.0, 1, 0.0);
    KernelSpec s;
    s.d = 1;
    s.kcheck_l1 = kTwoPi;
    CHECK(m_infinity(s, direct) == 1.0);

    NoiseSpec half = builtin_noise(NoiseLaw::laplace, 1.0, 1, 0.5);
    half.epsilon = 0.5;
    s.kcheck_l1 = 4.0 * std::numbers::pi;
    CHECK(m_infinity(s, half) == doctest::Approx(4.0 * std::numbers::pi / kTwoPi / 0.5).epsilon(1e-15));

    NoiseSpec half2 = builtin_noise(NoiseLaw::laplace, 1.0, 2, 0.5);
    half2.epsilon = 0.5;
    KernelSpec s2;
    s2.d = 2;
    s2.kcheck_l1 = 4.0 * std::numbers::pi * kTwoPi;
    CHECK(m_infinity(s2, half2) == doctest::Approx(4.0).epsilon(1e-14));

    NoiseSpec full = builtin_noise(NoiseLaw::laplace, 1.0, 1, 1.0);
    s.k1 = kTwoPi / 2.0 * full.upsilon0;
    CHECK(m_infinity(s, full) == 1.0);
    s.k1 = 3.0 * kTwoPi * full.upsilon0;
    CHECK(m_infinity(s, full) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("lambda_n display") {
    const std::size_t n = 403;  // ~ e^6
    const double ln_n = std::log(403.0);
    CHECK(lambda_n(env1(1.0, 2.0, 0.0, n), BandwidthVec({-1})) == doctest::Approx(6.0 * ln_n + 42.0).epsilon(1e-15));
    CHECK(6.0 * ln_n + 42.0 == doctest::Approx(78.0).epsilon(1e-4));
    // log terms vanish at h = 1
    auto e = env1(2.5, 3.0, 1.5, 1000);
    CHECK(lambda_n(e, BandwidthVec({0})) == doctest::Approx(4.0 * std::log(2.5) + 6.0 * std::log(1000.0)));
    // additivity in |ln h|
    const double l0 = lambda_n(e, BandwidthVec({0}));
    const double l1 = lambda_n(e, BandwidthVec({-2}));
    const double l2 = lambda_n(e, BandwidthVec({-4}));
    CHECK(l2 - l1 == doctest::Approx(l1 - l0).epsilon(1e-13));
    CHECK(l1 - l0 == doctest::Approx((8 * 3.0 + 26) * 2.5 * 2.0).epsilon(1e-13));
    // h > 1 also contributes |ln h|
    CHECK(lambda_n(e, BandwidthVec({2})) == doctest::Approx(l1).epsilon(1e-15));
    EnvelopeParams bad = e;
    bad.m_inf = 0.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("envelope U display") {
    const std::size_t n = 403;
    auto e = env1(1.0, 2.0, 0.0, n);
    const BandwidthVec h({-1});
    const double lam = lambda_n(e, h);
    const double second = 4.0 * lam / (3.0 * 403.0 * std::exp(-1.0));
    CHECK(envelope_U(e, h, 0.0) == doctest::Approx(second).epsilon(1e-15));
    CHECK(envelope_U(e, h, 0.0) == doctest::Approx(0.7006).epsilon(2e-3));
    const double first = envelope_U(e, h, 0.3) - second;
    CHECK(first == doctest::Approx(std::sqrt(2.0 * lam * 0.3 / 403.0)).epsilon(1e-12));
    CHECK(envelope_U(e, h, 1.2) - second == doctest::Approx(2.0 * first).epsilon(1e-12));
    // (h ^ 1)^{mu} only bites below 1
    auto em = env1(1.0, 2.0, 2.0, n);
    CHECK(m_sup_bound(em, BandwidthVec({-1})) == doctest::Approx(std::exp(3.0)).epsilon(1e-14));
    CHECK(m_sup_bound(em, BandwidthVec({1})) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("variance scale F_n") {
    NoiseSpec direct = builtin_noise(NoiseLaw::none, 1.0, 1, 0.0);
    CHECK(variance_scale_F(direct, BandwidthVec({0}), 500) == doctest::Approx(std::sqrt(std::log(500.0) / 500.0)));
    NoiseSpec lap = builtin_noise(NoiseLaw::laplace, 1.0, 1, 1.0);
    lap.mu = {1.0};
    const double n = 1000.0;
    const double expect = std::sqrt(std::log(n) + 1.0) / std::sqrt(n * std::exp(-1.0)) * std::exp(1.0);
    CHECK(variance_scale_F(lap, BandwidthVec({-1}), 1000) == doctest::Approx(expect).epsilon(1e-14));
    double prev = kInf;
    for (std::size_t m : {10u, 100u, 1000u, 10000u}) {
        const double v = variance_scale_F(lap, BandwidthVec({-2}), m);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("estimate_at: single point, far sample, brute-force kernel sum") {
    NoiseSpec direct = builtin_noise(NoiseLaw::none, 1.0, 1, 0.0);
    KernelSpec spec = make_kernel(2, 1, 1.0, direct);
    auto t = solve_deconv_kernel(spec, direct, BandwidthVec({-1}));
    const double x[] = {0.1};

    Sample one(1, {0.35});
    const PointEstimate e1 = estimate_at(t, one, x);
    const double y[] = {0.35 - 0.1};
    CHECK(e1.f_hat == eval_M(t, y));
    CHECK(e1.sigma2_hat == e1.f_hat * e1.f_hat);

    Sample far(1, {40.0, -55.0, 100.0});
    const PointEstimate e2 = estimate_at(t, far, x);
    CHECK(e2.f_hat == 0.0);
    CHECK(e2.sigma2_hat == 0.0);

    Sample s = random_sample(3000, 11, 0.6);
    const double h = std::exp(-1.0);
    for (double xv : {-0.8, 0.0, 0.33, 1.1}) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double k = oracle::kernel_derivative(2, 1, 1.0, (s.at(i, 0) - xv) / h, 0) / h;
            s1 += k;
            s2 += k * k;
        }
        const double xx[] = {xv};
        const PointEstimate e = estimate_at(t, s, xx);
        CHECK(e.f_hat == doctest::Approx(s1 / 3000.0).epsilon(1e-6));
        CHECK(e.sigma2_hat == doctest::Approx(s2 / 3000.0).epsilon(1e-6));
        CHECK(e.sigma2_hat >= e.f_hat * e.f_hat * (1.0 - 1e-12));
    }
}

TEST_CASE("sorted index agrees with a full scan") {
    NoiseSpec lap = builtin_noise(NoiseLaw::laplace, 1.0, 1, 0.5);
    KernelSpec spec = make_kernel(2, 1, 1.0, lap);
    auto t = solve_deconv_kernel(spec, lap, BandwidthVec({-1}));
    Sample s = random_sample(2000, 5, 3.0);
    SampleIndex idx(s);
    for (double xv : {-4.0, -0.5, 0.0, 2.2}) {
        double s1 = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double y[] = {s.at(i, 0) - xv};
            s1 += eval_M(t, y);
        }
        const double xx[] = {xv};
        CHECK(estimate_at(t, idx, xx).f_hat == doctest::Approx(s1 / 2000.0).epsilon(1e-13));
    }
}

TEST_CASE("tabulated M stays under the sup-norm envelope") {
    for (double alpha : {0.0, 0.5, 1.0}) {
        NoiseSpec noise = alpha == 0.0 ? builtin_noise(NoiseLaw::none, 1.0, 1, 0.0)
                                       : builtin_noise(NoiseLaw::laplace, 1.0, 1, alpha);
        KernelSpec spec = make_kernel(2, alpha == 1.0 ? 4 : 1, 1.0, noise);
        auto env = make_envelope_params(spec, noise, 2.0, 100);
        for (int k : {-2, -1, 0, 1}) {
            auto t = solve_deconv_kernel(spec, noise, BandwidthVec({k}));
            CHECK(t.m_sup <= m_sup_bound(env, BandwidthVec({k})));
        }
    }
}
