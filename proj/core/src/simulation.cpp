#include "deconv/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdio>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "deconv/error.hpp"
#include "deconv/estimator.hpp"
#include "deconv/noise.hpp"
#include "deconv/selector.hpp"

namespace deconv {

namespace {

using Gauss20 = boost::math::quadrature::gauss<double, 20>;

constexpr std::uint64_t kStreamEps = 0, kStreamSignal = 1, kStreamNoise = 2;

// Integral of fn over [lo, hi] with the given breakpoints and pieces no longer than max_len.
template <class F>
double integrate_pieces(F&& fn, double lo, double hi, std::vector<double> breaks, double max_len) {
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::sort(breaks.begin(), breaks.end());
    double total = 0.0;
    double prev = lo;
    for (double b : breaks) {
        if (b <= prev) continue;
        if (b > hi) b = hi;
        const auto pieces = static_cast<std::size_t>(std::ceil((b - prev) / max_len));
        const double w = (b - prev) / static_cast<double>(pieces);
        for (std::size_t k = 0; k < pieces; ++k) {
            const double a = prev + w * static_cast<double>(k);
            total += Gauss20::integrate(fn, a, k + 1 == pieces ? b : a + w);
        }
        prev = b;
        if (prev >= hi) break;
    }
    return total;
}

// Nodes and weights of the same piecewise rule.
void piece_nodes(double lo, double hi, std::vector<double> breaks, double max_len, std::vector<double>& x,
                 std::vector<double>& w) {
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::sort(breaks.begin(), breaks.end());
    const auto& ab = Gauss20::abscissa();
    const auto& wt = Gauss20::weights();
    double prev = lo;
    for (double b : breaks) {
        if (b <= prev) continue;
        if (b > hi) b = hi;
        const auto pieces = static_cast<std::size_t>(std::ceil((b - prev) / max_len));
        const double len = (b - prev) / static_cast<double>(pieces);
        for (std::size_t k = 0; k < pieces; ++k) {
            const double c = prev + len * (static_cast<double>(k) + 0.5), half = 0.5 * len;
            for (std::size_t i = 0; i < ab.size(); ++i) {
                x.push_back(c + half * ab[i]);
                w.push_back(half * wt[i]);
                if (ab[i] != 0.0) {
                    x.push_back(c - half * ab[i]);
                    w.push_back(half * wt[i]);
                }
            }
        }
        prev = b;
        if (prev >= hi) break;
    }
}

class GaussMixture final : public Marginal {
public:
    GaussMixture(std::vector<double> w, std::vector<double> m, std::vector<double> s)
        : w_(std::move(w)), m_(std::move(m)), s_(std::move(s)) {
        double total = 0.0;
        for (std::size_t k = 0; k < w_.size(); ++k) {
            if (!(w_[k] > 0.0) || !(s_[k] > 0.0) || !std::isfinite(m_[k]))
                throw ValidationError("gauss_mixture needs positive weights and scales");
            total += w_[k];
        }
        for (double& v : w_) v /= total;
    }
    double pdf(double x) const override {
        double v = 0.0;
        for (std::size_t k = 0; k < w_.size(); ++k) {
            const double z = (x - m_[k]) / s_[k];
            v += w_[k] * std::exp(-0.5 * z * z) / (s_[k] * kSqrt2Pi);
        }
        return v;
    }
    double draw(std::mt19937_64& eng) const override {
        const double u = uniform01(eng);
        std::size_t k = 0;
        for (double acc = w_[0]; k + 1 < w_.size() && u >= acc; acc += w_[++k]) {
        }
        return m_[k] + s_[k] * standard_normal(eng);
    }
    std::vector<double> kinks() const override { return {}; }
    std::pair<double, double> support(double tail) const override {
        const double z = std::sqrt(2.0 * std::log(2.0 / tail));
        double lo = kInf, hi = -kInf;
        for (std::size_t k = 0; k < w_.size(); ++k) {
            lo = std::min(lo, m_[k] - z * s_[k]);
            hi = std::max(hi, m_[k] + z * s_[k]);
        }
        return {lo, hi};
    }
    double sup() const override {
        double v = 0.0;
        for (std::size_t k = 0; k < w_.size(); ++k) v += w_[k] / (s_[k] * kSqrt2Pi);
        return v;
    }
    // sup |f''| bound from the components
    double second_derivative_bound() const {
        double v = 0.0;
        for (std::size_t k = 0; k < w_.size(); ++k) v += w_[k] / (s_[k] * s_[k] * s_[k] * kSqrt2Pi);
        return v;
    }

private:
    static constexpr double kSqrt2Pi = 2.5066282746310002;
    std::vector<double> w_, m_, s_;
};

// Cardinal B-spline of order m (degree m - 1) on [0, m].
double cardinal_bspline(int m, double y) {
    if (y <= 0.0 || y >= m) return 0.0;
    double v = 0.0, binom = 1.0;
    for (int i = 0; i <= static_cast<int>(std::floor(y)); ++i) {
        if (i > 0) binom = binom * (m - i + 1) / i;
        v += (i % 2 == 0 ? 1.0 : -1.0) * binom * std::pow(y - i, m - 1);
    }
    return v / std::tgamma(static_cast<double>(m));
}

class Spline final : public Marginal {
public:
    explicit Spline(int k) : m_(k + 1), s_(2.0 / (k + 1)) {
        if (k < 0 || k > 12) throw ValidationError("tensor_spline degree must lie in 0..12");
    }
    double pdf(double x) const override {
        if (m_ == 1) return std::abs(x) < 1.0 ? 0.5 : 0.0;
        return cardinal_bspline(m_, (x + 1.0) / s_) / s_;
    }
    double draw(std::mt19937_64& eng) const override {
        double sum = 0.0;
        for (int i = 0; i < m_; ++i) sum += uniform01(eng);
        return s_ * sum - 1.0;
    }
    std::vector<double> kinks() const override {
        std::vector<double> k;
        for (int i = 0; i <= m_; ++i) k.push_back(-1.0 + s_ * i);
        return k;
    }
    std::pair<double, double> support(double) const override { return {-1.0, 1.0}; }
    double sup() const override { return pdf(0.0); }
    int order() const { return m_; }
    // ||Delta^{m+1}_u f||_1 <= L u^m for all u, L = |f^{(m)}| (R) ||B_m(. + 1) - B_m||_1 = m^m c_m
    double nikolskii_L() const {
        const int m = m_;
        auto diff = [m](double y) { return std::abs(cardinal_bspline(m, y + 1.0) - cardinal_bspline(m, y)); };
        std::vector<double> br;
        for (int i = -1; i <= m; ++i) br.push_back(i);
        const double c = integrate_pieces(diff, -1.0, m, br, 1.0 / 1024.0);
        return std::pow(static_cast<double>(m), m) * c * (1.0 + 1e-9);
    }

private:
    int m_;
    double s_;
};

class LaplaceLike final : public Marginal {
public:
    explicit LaplaceLike(double b) : b_(b) {
        if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("laplace_like scale must be positive");
    }
    double pdf(double x) const override { return std::exp(-std::abs(x) / b_) / (2.0 * b_); }
    double draw(std::mt19937_64& eng) const override { return b_ * standard_laplace(eng); }
    std::vector<double> kinks() const override { return {0.0}; }
    std::pair<double, double> support(double tail) const override {
        const double t = b_ * std::log(1.0 / tail);
        return {-t, t};
    }
    double sup() const override { return 1.0 / (2.0 * b_); }
    double scale() const { return b_; }

private:
    double b_;
};

double noise_draw(const NoiseSpec& noise, std::mt19937_64& eng) {
    switch (noise.law) {
        case NoiseLaw::laplace: return noise.scale * standard_laplace(eng);
        case NoiseLaw::gaussian: return noise.scale * standard_normal(eng);
        case NoiseLaw::none: return 0.0;
        case NoiseLaw::custom: break;
    }
    throw ValidationError("noise law '" + to_string(noise.law) + "' has no sampler");
}

std::uint64_t replication_key(std::size_t n, std::size_t rep) {
    return (static_cast<std::uint64_t>(n) << 24) ^ static_cast<std::uint64_t>(rep);
}

template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                    try {
                        body(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                        next = count;
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t replication, std::uint64_t stream) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ replication);
    s = splitmix64(s ^ (stream * 0xD1B54A32D192ED03ULL));
    return std::mt19937_64(s);
}

double uniform01(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& eng) {
    const double u1 = 1.0 - uniform01(eng);  // (0, 1]
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double standard_laplace(std::mt19937_64& eng) {
    const double e = -std::log(1.0 - uniform01(eng));
    return uniform01(eng) < 0.5 ? -e : e;
}

TestDensity::TestDensity(std::string name, std::size_t d, std::shared_ptr<const Marginal> marginal,
                         ClassParams declared)
    : name_(std::move(name)), d_(d), marginal_(std::move(marginal)), declared_(std::move(declared)) {
    if (d_ == 0) throw ValidationError("density dimension must be positive");
}

double TestDensity::pdf(std::span<const double> x) const {
    double v = 1.0;
    for (std::size_t j = 0; j < d_; ++j) v *= marginal_->pdf(x[j]);
    return v;
}

void TestDensity::sample(std::mt19937_64& eng, std::span<double> out) const {
    for (std::size_t j = 0; j < d_; ++j) out[j] = marginal_->draw(eng);
}

double TestDensity::mass(const std::vector<double>& lo, const std::vector<double>& hi) const {
    if (lo.size() != d_ || hi.size() != d_) throw ValidationError("box dimension does not match density");
    double v = 1.0;
    auto f = [this](double x) { return marginal_->pdf(x); };
    for (std::size_t j = 0; j < d_; ++j) v *= integrate_pieces(f, lo[j], hi[j], marginal_->kinks(), 0.05);
    return v;
}

TestDensity make_density(const DensitySpec& spec, std::size_t d) {
    ClassParams cls;
    std::shared_ptr<const Marginal> marg;
    double beta = 0.0, r = 0.0, L = 0.0;
    if (spec.name == "gauss_mixture") {
        std::vector<double> w, m, s;
        if (spec.params.empty()) {
            w = {0.5, 0.5}, m = {-1.0, 1.0}, s = {0.5, 0.5};
        } else {
            if (spec.params.size() % 3 != 0) throw ValidationError("gauss_mixture params are (weight, mean, sd) triples");
            for (std::size_t k = 0; k < spec.params.size(); k += 3) {
                w.push_back(spec.params[k]);
                m.push_back(spec.params[k + 1]);
                s.push_back(spec.params[k + 2]);
            }
        }
        auto g = std::make_shared<GaussMixture>(w, m, s);
        // ||Delta^3_u f||_inf <= 2 u^2 sup|f''|
        beta = 2.0, r = kInf, L = std::max(g->sup(), 2.0 * g->second_derivative_bound());
        marg = g;
    } else if (spec.name == "tensor_spline") {
        const double kd = spec.params.empty() ? 1.0 : spec.params[0];
        if (spec.params.size() > 1 || kd != std::floor(kd)) throw ValidationError("tensor_spline takes one integer degree");
        auto sp = std::make_shared<Spline>(static_cast<int>(kd));
        beta = kd + 1.0, r = 1.0, L = std::max(1.0, sp->nikolskii_L());
        marg = sp;
    } else if (spec.name == "laplace_like") {
        if (spec.params.size() > 1) throw ValidationError("laplace_like takes one scale");
        const double b = spec.params.empty() ? 1.0 : spec.params[0];
        auto lp = std::make_shared<LaplaceLike>(b);
        // ||Delta^2_u f||_inf <= 2 |u| sup|f'| = |u| / b^2
        beta = 1.0, r = kInf, L = std::max(1.0 / (b * b), lp->sup());
        marg = lp;
    } else {
        throw ValidationError("unknown test density '" + spec.name + "'");
    }
    cls.beta.assign(d, beta);
    cls.r.assign(d, r);
    cls.L.assign(d, L);
    return TestDensity(spec.name, d, marg, cls);
}

Sample sample_model(const TestDensity& density, const NoiseSpec& noise, std::size_t n, std::uint64_t seed,
                    std::uint64_t replication) {
    if (noise.d != density.dim()) throw ValidationError("noise and density dimensions differ");
    const std::size_t d = density.dim();
    auto e_eps = stream_engine(seed, replication, kStreamEps);
    auto e_x = stream_engine(seed, replication, kStreamSignal);
    auto e_y = stream_engine(seed, replication, kStreamNoise);
    std::vector<double> pts(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<double> z(pts.data() + i * d, d);
        const bool eps = uniform01(e_eps) < noise.alpha;
        density.sample(e_x, z);
        if (eps)
            for (std::size_t j = 0; j < d; ++j) z[j] += noise_draw(noise, e_y);
    }
    return Sample(d, std::move(pts));
}

double contamination_fraction(const NoiseSpec& noise, std::size_t n, std::uint64_t seed, std::uint64_t replication) {
    auto e_eps = stream_engine(seed, replication, kStreamEps);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += uniform01(e_eps) < noise.alpha;
    return static_cast<double>(hits) / static_cast<double>(n);
}

double smoothed_marginal(const OrderKernel& kernel, const Marginal& f, double h, double x) {
    const double R = kernel.base().radius();
    const double reach = kernel.support();
    std::vector<double> breaks;
    for (int i = -kernel.order(); i <= kernel.order(); ++i) breaks.push_back(i * R);
    for (double k : f.kinks()) {
        const double y = (x - k) / h;
        if (std::abs(y) < reach) breaks.push_back(y);
    }
    auto integrand = [&](double y) { return kernel(y) * f.pdf(x - h * y); };
    return integrate_pieces(integrand, -reach, reach, breaks, R / 4.0);
}

double bias_norm(const KernelSpec& kspec, const TestDensity& density, const BandwidthVec& h, double p) {
    if (h.dim() != density.dim()) throw ValidationError("bandwidth and density dimensions differ");
    if (!(p >= 1.0)) throw ValidationError("p must be >= 1");
    const OrderKernel kernel = kspec.univariate();
    const double R = kernel.base().radius();
    const Marginal& f = density.marginal();
    const auto [slo, shi] = f.support(1e-12);
    std::vector<std::vector<double>> a(density.dim()), b(density.dim()), w(density.dim());
    for (std::size_t j = 0; j < density.dim(); ++j) {
        const double hj = h.value(j);
        const double reach = kernel.support() * hj;
        std::vector<double> breaks;
        std::vector<double> anchors = f.kinks();
        anchors.push_back(slo);
        anchors.push_back(shi);
        for (double k : anchors)
            for (int i = -kernel.order(); i <= kernel.order(); ++i) breaks.push_back(k + i * R * hj);
        std::vector<double> x;
        piece_nodes(slo - reach, shi + reach, breaks, std::min(0.1, std::max(R * hj, 1e-3)), x, w[j]);
        for (double xv : x) {
            a[j].push_back(smoothed_marginal(kernel, f, hj, xv));
            b[j].push_back(f.pdf(xv));
        }
    }
    double total = 0.0;
    std::vector<std::size_t> idx(density.dim(), 0);
    const std::size_t d = density.dim();
    double count = 1.0;
    for (std::size_t j = 0; j < d; ++j) count *= static_cast<double>(w[j].size());
    if (count > 2e8) throw ValidationError("bias quadrature too large for this dimension");
    while (true) {
        double pa = 1.0, pb = 1.0, pw = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            pa *= a[j][idx[j]];
            pb *= b[j][idx[j]];
            pw *= w[j][idx[j]];
        }
        total += pw * std::pow(std::abs(pa - pb), p);
        std::size_t j = d;
        while (j-- > 0) {
            if (++idx[j] < w[j].size()) break;
            idx[j] = 0;
        }
        if (j == static_cast<std::size_t>(-1)) break;
    }
    return std::pow(total, 1.0 / p);
}

double base_moment(const BaseKernel& base, double s) {
    auto g = [&](double u) { return base(u) * std::pow(u, s); };
    return 2.0 * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.0, base.radius(), 15, 1e-14);
}

QuadratureLattice make_lattice(const EvalWindow& win) {
    const std::size_t d = win.lo.size();
    if (d == 0 || win.hi.size() != d) throw ValidationError("evaluation window needs lo and hi of equal dimension");
    if (win.cells == 0) throw ValidationError("evaluation window needs at least one cell");
    using G4 = boost::math::quadrature::gauss<double, 4>;
    std::vector<std::vector<double>> nodes(d), weights(d);
    for (std::size_t j = 0; j < d; ++j) {
        if (!(win.lo[j] < win.hi[j])) throw ValidationError("evaluation window is empty");
        const double len = (win.hi[j] - win.lo[j]) / static_cast<double>(win.cells);
        for (std::size_t c = 0; c < win.cells; ++c) {
            const double mid = win.lo[j] + len * (static_cast<double>(c) + 0.5), half = 0.5 * len;
            for (std::size_t i = G4::abscissa().size(); i-- > 0;) {
                nodes[j].push_back(mid - half * G4::abscissa()[i]);
                weights[j].push_back(half * G4::weights()[i]);
            }
            for (std::size_t i = 0; i < G4::abscissa().size(); ++i) {
                nodes[j].push_back(mid + half * G4::abscissa()[i]);
                weights[j].push_back(half * G4::weights()[i]);
            }
        }
    }
    QuadratureLattice lat;
    std::vector<std::size_t> idx(d, 0);
    while (true) {
        std::vector<double> x(d);
        double w = 1.0;
        for (std::size_t j = 0; j < d; ++j) {
            x[j] = nodes[j][idx[j]];
            w *= weights[j][idx[j]];
        }
        lat.points.push_back(std::move(x));
        lat.weights.push_back(w);
        std::size_t j = d;
        while (j-- > 0) {
            if (++idx[j] < nodes[j].size()) break;
            idx[j] = 0;
        }
        if (j == static_cast<std::size_t>(-1)) break;
    }
    return lat;
}

std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::adaptive: return "adaptive";
        case EstimatorKind::fixed: return "fixed";
        case EstimatorKind::zero: return "zero";
        case EstimatorKind::oracle: return "oracle";
        case EstimatorKind::constant: return "constant";
    }
    return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& s) {
    for (auto k : {EstimatorKind::adaptive, EstimatorKind::fixed, EstimatorKind::zero, EstimatorKind::oracle,
                   EstimatorKind::constant})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown estimator '" + s + "'");
}

std::string to_string(FitForm f) { return f == FitForm::power ? "power" : "delta"; }

FitForm fit_form_from_string(const std::string& s) {
    if (s == "power") return FitForm::power;
    if (s == "delta") return FitForm::delta;
    throw ValidationError("unknown fit form '" + s + "'");
}

void ExperimentPlan::validate() const {
    if (d == 0) throw ValidationError("dimension must be positive");
    make_density(density, d);
    if (sample_sizes.empty()) throw ValidationError("plan needs at least one sample size");
    for (auto n : sample_sizes)
        if (n < 2) throw ValidationError("sample sizes must be >= 2");
    if (!replications.empty() && replications.size() != sample_sizes.size())
        throw ValidationError("replications must list one count per sample size");
    for (auto m : replications)
        if (m < 1) throw ValidationError("replications must be >= 1");
    if (!window.lo.empty() || !window.hi.empty()) {
        if (window.lo.size() != d || window.hi.size() != d)
            throw ValidationError("evaluation window dimension does not match d");
        for (std::size_t j = 0; j < d; ++j)
            if (!(window.lo[j] < window.hi[j])) throw ValidationError("evaluation window is empty");
    }
    if (window.cells == 0) throw ValidationError("evaluation window needs at least one cell");
    if (!(p >= 1.0) || !std::isfinite(p)) throw ValidationError("p must be a finite number >= 1");
    if (grid && grid->k_min > grid->k_max) throw ValidationError("grid k_min exceeds k_max");
    if (estimator == EstimatorKind::fixed && fixed_exponents.size() != d)
        throw ValidationError("fixed estimator needs one exponent per coordinate");
    if (kernel_ell < 1 || kernel_m < 0 || !(kernel_radius > 0.0)) throw ValidationError("invalid kernel parameters");
    noise().validate();
}

NoiseSpec ExperimentPlan::noise() const { return builtin_noise(noise_law, noise_scale, d, alpha); }

KernelSpec ExperimentPlan::kernel() const {
    const NoiseSpec g = noise();
    return make_kernel(kernel_ell, kernel_m == 0 ? default_base_smoothness(g) : kernel_m, kernel_radius, g);
}

std::size_t ExperimentPlan::replications_at(std::size_t i) const {
    if (!replications.empty()) return replications.at(i);
    return sample_sizes.at(i) <= 4096 ? 100 : 30;
}

EvalWindow ExperimentPlan::resolved_window(const TestDensity& dens) const {
    if (!window.lo.empty()) return window;
    EvalWindow w = window;
    const auto [lo, hi] = dens.marginal().support(1e-4 / static_cast<double>(d));
    w.lo.assign(d, lo);
    w.hi.assign(d, hi);
    return w;
}

GridSpec ExperimentPlan::grid_at(std::size_t n) const {
    if (grid) return *grid;
    return default_grid(n, noise().mu_alpha(), grid_mode);
}

RateInputs ExperimentPlan::rate_inputs(const TestDensity& dens) const {
    RateInputs in;
    in.cls = dens.declared();
    in.cls.p = p;
    in.alpha = alpha;
    in.mu = noise().mu;
    in.n = *std::max_element(sample_sizes.begin(), sample_sizes.end());
    in.grid_mode = grid_mode;
    return in;
}

SlopeFit fit_slope(const std::vector<std::size_t>& n, const std::vector<double>& risk, const std::vector<double>& se,
                   FitForm form) {
    if (n.size() != risk.size() || n.size() != se.size()) throw ValidationError("fit inputs differ in length");
    if (n.size() < 2) throw ValidationError("a slope needs at least two sample sizes");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (!(risk[i] > 0.0)) throw ValidationError("risk must be positive for a log-log fit");
        const double ln = std::log(static_cast<double>(n[i]));
        x.push_back(form == FitForm::power ? ln : ln - std::log(ln));
        y.push_back(std::log(risk[i]));
    }
    const double k = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= k, my /= k;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw ValidationError("sample sizes must differ");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double c = (x[i] - mx) / sxx, s = se[i] / risk[i];
        var += c * c * s * s;
    }
    f.se = std::sqrt(var);
    return f;
}

RiskResult empirical_risk(const ExperimentPlan& plan, unsigned threads, std::shared_ptr<TableCache> cache) {
    plan.validate();
    const TestDensity dens = make_density(plan.density, plan.d);
    const NoiseSpec noise = plan.noise();
    const KernelSpec kspec = plan.kernel();
    const EvalWindow win = plan.resolved_window(dens);
    const QuadratureLattice lat = make_lattice(win);
    if (!cache) cache = std::make_shared<TableCache>();

    std::vector<double> f_true(lat.points.size());
    for (std::size_t i = 0; i < f_true.size(); ++i) f_true[i] = dens.pdf(lat.points[i]);

    RiskResult res;
    res.fit_form = plan.fit_form;
    res.window_mass = dens.mass(win.lo, win.hi);
    res.theory_exponent = classify_and_rate(plan.rate_inputs(dens)).e.rho.to_double();

    for (std::size_t si = 0; si < plan.sample_sizes.size(); ++si) {
        const std::size_t n = plan.sample_sizes[si];
        const std::size_t M = plan.replications_at(si);
        const GridSpec grid = plan.grid_at(n);
        std::vector<double> lp(M);
        std::vector<std::size_t> boundary(M, 0);
        parallel_for(M, threads, [&](std::size_t rep) {
            std::vector<double> fhat(lat.points.size(), 0.0);
            switch (plan.estimator) {
                case EstimatorKind::adaptive: {
                    const Sample s = sample_model(dens, noise, n, plan.seed, replication_key(n, rep));
                    const Estimator est(s, grid, kspec, noise, plan.p, cache);
                    for (std::size_t i = 0; i < fhat.size(); ++i) {
                        const SelectionTrace t = est.select_at(lat.points[i]);
                        fhat[i] = t.value;
                        boundary[rep] += t.boundary;
                    }
                    break;
                }
                case EstimatorKind::fixed: {
                    const Sample s = sample_model(dens, noise, n, plan.seed, replication_key(n, rep));
                    const SampleIndex idx(s);
                    const auto table = cache->get(kspec, noise, BandwidthVec(plan.fixed_exponents));
                    for (std::size_t i = 0; i < fhat.size(); ++i) fhat[i] = estimate_at(*table, idx, lat.points[i]).f_hat;
                    break;
                }
                case EstimatorKind::zero: break;
                case EstimatorKind::oracle: fhat = f_true; break;
                case EstimatorKind::constant: fhat.assign(fhat.size(), plan.constant_value); break;
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < fhat.size(); ++i) acc += lat.weights[i] * std::pow(std::abs(fhat[i] - f_true[i]), plan.p);
            lp[rep] = acc;
        });
        double mean = 0.0;
        for (double v : lp) mean += v;
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (double v : lp) var += (v - mean) * (v - mean);
        const double se_mean = M > 1 ? std::sqrt(var / static_cast<double>(M - 1) / static_cast<double>(M)) : 0.0;
        const double risk = std::pow(mean, 1.0 / plan.p);
        res.n.push_back(n);
        res.mean_risk.push_back(risk);
        res.se.push_back(mean > 0.0 ? risk * se_mean / (plan.p * mean) : 0.0);
        std::vector<double> norms(M);
        for (std::size_t m = 0; m < M; ++m) norms[m] = std::pow(lp[m], 1.0 / plan.p);
        res.per_replication.push_back(std::move(norms));
        for (auto b : boundary) res.boundary_selections += b;
    }
    const bool positive = std::all_of(res.mean_risk.begin(), res.mean_risk.end(), [](double r) { return r > 0.0; });
    if (res.n.size() >= 2 && positive) res.fit = fit_slope(res.n, res.mean_risk, res.se, plan.fit_form);
    return res;
}

SlopeVerdict slope_vs_theory(const RiskResult& result, double rho) {
    if (result.n.size() < 4) throw ValidationError("insufficient n-range: need at least 4 sample sizes");
    const auto [lo, hi] = std::minmax_element(result.n.begin(), result.n.end());
    if (static_cast<double>(*hi) < 16.0 * static_cast<double>(*lo))
        throw ValidationError("insufficient n-range: sizes must span at least 16x");
    SlopeVerdict v;
    v.slope = result.fit.slope;
    v.target = -rho;
    v.tolerance = std::max(0.25 * rho, 2.0 * result.fit.se);
    const bool positive =
        std::all_of(result.mean_risk.begin(), result.mean_risk.end(), [](double r) { return r > 0.0; });
    v.pass = positive && std::abs(v.slope - v.target) <= v.tolerance;
    return v;
}

std::string risk_to_json(const RiskResult& r) {
    nlohmann::ordered_json j;
    j["n"] = r.n;
    j["mean_risk"] = r.mean_risk;
    j["se"] = r.se;
    j["per_replication"] = r.per_replication;
    j["fit"] = {{"form", to_string(r.fit_form)}, {"slope", r.fit.slope}, {"se", r.fit.se}, {"intercept", r.fit.intercept}};
    j["theory_exponent"] = r.theory_exponent;
    j["window_mass"] = r.window_mass;
    j["boundary_selections"] = r.boundary_selections;
    return j.dump(2) + "\n";
}

std::string risk_to_csv(const RiskResult& r) {
    std::ostringstream os;
    os << "n,mean_risk,se,theory_exponent\n";
    for (std::size_t i = 0; i < r.n.size(); ++i)
        os << r.n[i] << ',' << fmt17(r.mean_risk[i]) << ',' << fmt17(r.se[i]) << ',' << fmt17(r.theory_exponent) << '\n';
    return os.str();
}

}  // namespace deconv
