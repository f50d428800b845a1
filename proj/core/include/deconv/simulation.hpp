#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deconv/kernel.hpp"
#include "deconv/model.hpp"
#include "deconv/operator.hpp"
#include "deconv/rates.hpp"

namespace deconv {

// Engine for (seed, replication, stream). Keys are mixed with SplitMix64 so
// results never depend on the order in which replications are scheduled.
std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t replication, std::uint64_t stream);
std::uint64_t splitmix64(std::uint64_t x);

// Transforms kept by hand so draws are identical across standard libraries.
double uniform01(std::mt19937_64& eng);  // [0, 1), 53 bits
double standard_normal(std::mt19937_64& eng);
double standard_laplace(std::mt19937_64& eng);

// One coordinate of a tensor-product test density.
class Marginal {
public:
    virtual ~Marginal() = default;
    virtual double pdf(double x) const = 0;
    virtual double draw(std::mt19937_64& eng) const = 0;
    virtual std::vector<double> kinks() const = 0;                // points where pdf is not smooth
    virtual std::pair<double, double> support(double tail) const = 0;  // holds >= 1 - tail of the mass
    virtual double sup() const = 0;
};

struct DensitySpec {
    std::string name;             // gauss_mixture | tensor_spline | laplace_like
    std::vector<double> params;   // see make_density
    bool operator==(const DensitySpec&) const = default;
};

class TestDensity {
public:
    TestDensity(std::string name, std::size_t d, std::shared_ptr<const Marginal> marginal, ClassParams declared);

    const std::string& name() const { return name_; }
    std::size_t dim() const { return d_; }
    const Marginal& marginal() const { return *marginal_; }
    // Declared Nikol'skii membership (beta, r, L) with p left at its default.
    const ClassParams& declared() const { return declared_; }

    double pdf(std::span<const double> x) const;
    void sample(std::mt19937_64& eng, std::span<double> out) const;
    // Mass of the box [lo, hi]^d, by piecewise Gauss quadrature.
    double mass(const std::vector<double>& lo, const std::vector<double>& hi) const;

private:
    std::string name_;
    std::size_t d_;
    std::shared_ptr<const Marginal> marginal_;
    ClassParams declared_;
};

// gauss_mixture: params are (weight, mean, sd) triples, default 0.5 N(-1, 0.5^2) + 0.5 N(1, 0.5^2);
//   declared beta = 2, r = inf.
// tensor_spline: params {k}, the degree-k B-spline rescaled to [-1, 1]; declared beta = k + 1, r = 1.
// laplace_like: params {b}, density exp(-|x|/b)/(2b); declared beta = 1, r = inf.
TestDensity make_density(const DensitySpec& spec, std::size_t d);

// Z = X + eps Y with eps ~ Bernoulli(alpha), X ~ f, Y ~ g. eps is drawn first,
// Y only when eps = 1; each of the three draws has its own stream.
Sample sample_model(const TestDensity& density, const NoiseSpec& noise, std::size_t n, std::uint64_t seed,
                    std::uint64_t replication = 0);

// Fraction of contaminated draws in sample_model with the same keys.
double contamination_fraction(const NoiseSpec& noise, std::size_t n, std::uint64_t seed,
                              std::uint64_t replication = 0);

// (K_h conv f_j)(x) for one coordinate of the order-ell kernel.
double smoothed_marginal(const OrderKernel& kernel, const Marginal& f, double h, double x);

// ||K_h conv f - f||_p over R^d (tails below 1e-12 of mass dropped).
double bias_norm(const KernelSpec& kernel, const TestDensity& density, const BandwidthVec& h, double p);

// int |K(u)| |u|^s du for the base kernel; the bias bound is c1 L_j h_j^{beta_j} with c1 = base_moment(beta_j).
double base_moment(const BaseKernel& base, double s);

// Composite Gauss-Legendre lattice on a box: `cells` cells per axis, 4 nodes per cell.
struct EvalWindow {
    std::vector<double> lo, hi;
    std::size_t cells = 32;
    bool operator==(const EvalWindow&) const = default;
};

struct QuadratureLattice {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
};
QuadratureLattice make_lattice(const EvalWindow& window);

enum class EstimatorKind { adaptive, fixed, zero, oracle, constant };
std::string to_string(EstimatorKind k);
EstimatorKind estimator_kind_from_string(const std::string& s);

enum class FitForm { power, delta };  // regress ln risk on ln n, or on ln(n / ln n)
std::string to_string(FitForm f);
FitForm fit_form_from_string(const std::string& s);

struct ExperimentPlan {
    DensitySpec density{"tensor_spline", {1}};
    std::size_t d = 1;
    NoiseLaw noise_law = NoiseLaw::none;
    double noise_scale = 1.0;
    double alpha = 0.0;
    std::vector<std::size_t> sample_sizes{1024, 2048, 4096, 8192, 16384};
    std::vector<std::size_t> replications;  // one per size; empty uses 100 up to 2^12 and 30 above
    EvalWindow window;                       // empty box uses the density support holding 1 - 1e-4
    double p = 2.0;
    std::optional<GridSpec> grid;            // absent: default grid for each n
    GridMode grid_mode = GridMode::isotropic;
    int kernel_ell = 2;
    int kernel_m = 0;                        // 0: smoothest base needed by the noise
    double kernel_radius = 1.0;
    std::uint64_t seed = 1;
    EstimatorKind estimator = EstimatorKind::adaptive;
    std::vector<int> fixed_exponents;        // for EstimatorKind::fixed
    double constant_value = 0.0;             // for EstimatorKind::constant
    FitForm fit_form = FitForm::delta;

    void validate() const;
    NoiseSpec noise() const;
    KernelSpec kernel() const;
    std::size_t replications_at(std::size_t i) const;
    EvalWindow resolved_window(const TestDensity& density) const;
    GridSpec grid_at(std::size_t n) const;
    RateInputs rate_inputs(const TestDensity& density) const;
};

struct SlopeFit {
    double slope = 0.0;
    double se = 0.0;
    double intercept = 0.0;
};

// Least squares of ln risk on ln n (or on ln(n / ln n)); se propagates the
// per-size standard errors of ln risk.
SlopeFit fit_slope(const std::vector<std::size_t>& n, const std::vector<double>& risk,
                   const std::vector<double>& se, FitForm form);

struct RiskResult {
    std::vector<std::size_t> n;
    std::vector<double> mean_risk;                // (mean_m ||f_hat - f||_p^p)^{1/p}
    std::vector<double> se;
    std::vector<std::vector<double>> per_replication;  // ||f_hat - f||_p per replication
    SlopeFit fit;
    FitForm fit_form = FitForm::delta;
    double theory_exponent = 0.0;                 // rho(alpha) from the rate calculus
    double window_mass = 1.0;
    std::size_t boundary_selections = 0;          // adaptive choices at a grid end
};

RiskResult empirical_risk(const ExperimentPlan& plan, unsigned threads = 1,
                          std::shared_ptr<TableCache> cache = nullptr);

struct SlopeVerdict {
    bool pass = false;
    double slope = 0.0;
    double target = 0.0;     // -rho
    double tolerance = 0.0;  // max(0.25 rho, 2 se)
};

// Throws ValidationError("insufficient n-range") unless >= 4 sizes spanning >= 16x.
SlopeVerdict slope_vs_theory(const RiskResult& result, double rho);

std::string risk_to_json(const RiskResult& r);
std::string risk_to_csv(const RiskResult& r);

}  // namespace deconv
