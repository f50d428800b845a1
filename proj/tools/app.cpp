#include "app.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "deconv/error.hpp"
#include "deconv/estimator.hpp"
#include "deconv/noise.hpp"
#include "deconv/rates.hpp"
#include "deconv/sample_io.hpp"
#include "deconv/selector.hpp"

namespace deconv::app {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError("config section '" + where + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ValidationError("unknown config key '" + k + "' in " + where);
}

template <class T>
void get_to(const json& j, const char* key, T& dst, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(dst);
    } catch (const json::exception&) {
        throw ValidationError("config key '" + std::string(key) + "' in " + where + " has the wrong type");
    }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed for " + path.string());
}

std::filesystem::path output_dir(const RunConfig& cfg) {
    std::filesystem::path dir(cfg.output);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::string ext(const Extended<double>& v) {
    if (v.is_pos_inf()) return "inf";
    if (v.is_neg_inf()) return "-inf";
    return fmt17(v.value());
}

ordered_json ext_json(const Extended<double>& v) {
    if (v.is_finite()) return v.value();
    return v.is_pos_inf() ? "inf" : "-inf";
}

std::string exact(const Extended<Rational>& v) {
    if (v.is_pos_inf()) return "inf";
    if (v.is_neg_inf()) return "-inf";
    return v.value().str();
}

ordered_json rate_json(const RateInputs& in) {
    const RateReport rep = classify_and_rate(in);
    const auto q = rate_exponents<Rational>(in);
    const auto& e = rep.e;
    ordered_json j;
    j["zone"] = to_string(e.zone);
    j["boundary"] = to_string(e.boundary);
    j["consistent"] = e.consistent;
    j["rho"] = ext_json(e.rho);
    j["varrho"] = ext_json(e.varrho);
    j["rho_exact"] = exact(q.rho);
    j["varrho_exact"] = exact(q.varrho);
    j["beta_alpha"] = ext_json(e.agg.beta_a);
    j["omega_alpha"] = ext_json(e.agg.omega_a);
    j["p_star"] = ext_json(e.p_star);
    j["kappa_p"] = ext_json(e.kappa_p);
    j["tau_p"] = ext_json(e.tau_p);
    j["tau_p_star"] = ext_json(e.tau_pstar);
    j["tau_inf"] = ext_json(e.tau_inf);
    j["L_alpha"] = rep.L_a;
    j["delta_n"] = rep.delta_n;
    j["lower_scale"] = rep.bld_n;
    j["log_factor"] = rep.b_n;
    j["upper_scale"] = rep.upper_scale;
    return j;
}

std::vector<std::vector<double>> eval_points(const RunConfig& cfg, const Sample& s) {
    const std::size_t d = s.dim();
    std::vector<double> lo = cfg.eval_lo, hi = cfg.eval_hi;
    if (lo.empty()) {
        lo.assign(d, kInf);
        hi.assign(d, -kInf);
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) {
                lo[j] = std::min(lo[j], s.at(i, j));
                hi[j] = std::max(hi[j], s.at(i, j));
            }
    }
    if (lo.size() != d || hi.size() != d) throw ValidationError("evaluation box dimension does not match the data");
    if (cfg.eval_count == 0) throw ValidationError("evaluation count must be positive");
    std::vector<std::vector<double>> pts;
    std::vector<std::size_t> idx(d, 0);
    const std::size_t c = cfg.eval_count;
    while (true) {
        std::vector<double> x(d);
        for (std::size_t j = 0; j < d; ++j)
            x[j] = c == 1 ? 0.5 * (lo[j] + hi[j]) : lo[j] + (hi[j] - lo[j]) * static_cast<double>(idx[j]) / static_cast<double>(c - 1);
        pts.push_back(std::move(x));
        std::size_t j = d;
        while (j-- > 0) {
            if (++idx[j] < c) break;
            idx[j] = 0;
        }
        if (j == static_cast<std::size_t>(-1)) break;
    }
    return pts;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    require_keys(j, "config",
                 {"d", "p", "seed", "threads", "output", "verbosity", "noise", "kernel", "grid", "estimate", "rates",
                  "sweep", "simulate"});
    get_to(j, "d", c.d, "config");
    get_to(j, "p", c.p, "config");
    get_to(j, "seed", c.seed, "config");
    get_to(j, "threads", c.threads, "config");
    get_to(j, "output", c.output, "config");
    get_to(j, "verbosity", c.verbosity, "config");
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        require_keys(n, "noise", {"law", "scale", "alpha"});
        std::string law = to_string(c.noise_law);
        get_to(n, "law", law, "noise");
        c.noise_law = noise_law_from_string(law);
        get_to(n, "scale", c.noise_scale, "noise");
        get_to(n, "alpha", c.alpha, "noise");
    }
    if (j.contains("kernel")) {
        const auto& k = j["kernel"];
        require_keys(k, "kernel", {"ell", "m", "radius"});
        get_to(k, "ell", c.kernel_ell, "kernel");
        get_to(k, "m", c.kernel_m, "kernel");
        get_to(k, "radius", c.kernel_radius, "kernel");
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        require_keys(g, "grid", {"mode", "k_min", "k_max"});
        std::string mode = to_string(c.grid_mode);
        get_to(g, "mode", mode, "grid");
        c.grid_mode = grid_mode_from_string(mode);
        if (g.contains("k_min") != g.contains("k_max")) throw ValidationError("grid needs both k_min and k_max");
        if (g.contains("k_min")) {
            int a = 0, b = 0;
            get_to(g, "k_min", a, "grid");
            get_to(g, "k_max", b, "grid");
            c.grid_k_min = a;
            c.grid_k_max = b;
        }
    }
    if (j.contains("estimate")) {
        const auto& e = j["estimate"];
        require_keys(e, "estimate", {"data", "lo", "hi", "count", "traces"});
        get_to(e, "data", c.data, "estimate");
        get_to(e, "lo", c.eval_lo, "estimate");
        get_to(e, "hi", c.eval_hi, "estimate");
        get_to(e, "count", c.eval_count, "estimate");
        get_to(e, "traces", c.traces, "estimate");
    }
    if (j.contains("rates")) {
        const auto& r = j["rates"];
        require_keys(r, "rates", {"beta", "r", "L", "alpha", "mu", "n"});
        get_to(r, "beta", c.beta, "rates");
        if (r.contains("r")) {
            c.r.clear();
            for (const auto& v : r["r"]) {
                if (v.is_string() && v.get<std::string>() == "inf") c.r.push_back(kInf);
                else if (v.is_number()) c.r.push_back(v.get<double>());
                else throw ValidationError("rates.r entries are numbers or \"inf\"");
            }
        }
        get_to(r, "L", c.L, "rates");
        if (r.contains("alpha")) {
            double a = 0;
            get_to(r, "alpha", a, "rates");
            c.rates_alpha = a;
        }
        if (r.contains("mu")) {
            std::vector<double> mu;
            get_to(r, "mu", mu, "rates");
            c.rates_mu = mu;
        }
        get_to(r, "n", c.rates_n, "rates");
    }
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        require_keys(s, "sweep", {"param", "index", "from", "to", "steps"});
        SweepSpec sw;
        get_to(s, "param", sw.param, "sweep");
        get_to(s, "index", sw.index, "sweep");
        get_to(s, "from", sw.from, "sweep");
        get_to(s, "to", sw.to, "sweep");
        get_to(s, "steps", sw.steps, "sweep");
        c.sweep = sw;
    }
    if (j.contains("simulate")) {
        const auto& s = j["simulate"];
        require_keys(s, "simulate",
                     {"density", "sample_sizes", "replications", "window", "estimator", "fixed_exponents",
                      "constant_value", "fit_form"});
        if (s.contains("density")) {
            const auto& d = s["density"];
            require_keys(d, "simulate.density", {"name", "params"});
            get_to(d, "name", c.density.name, "simulate.density");
            get_to(d, "params", c.density.params, "simulate.density");
        }
        get_to(s, "sample_sizes", c.sample_sizes, "simulate");
        get_to(s, "replications", c.replications, "simulate");
        if (s.contains("window")) {
            const auto& w = s["window"];
            require_keys(w, "simulate.window", {"lo", "hi", "cells"});
            get_to(w, "lo", c.window.lo, "simulate.window");
            get_to(w, "hi", c.window.hi, "simulate.window");
            get_to(w, "cells", c.window.cells, "simulate.window");
        }
        std::string est = to_string(c.estimator);
        get_to(s, "estimator", est, "simulate");
        c.estimator = estimator_kind_from_string(est);
        get_to(s, "fixed_exponents", c.fixed_exponents, "simulate");
        get_to(s, "constant_value", c.constant_value, "simulate");
        std::string form = to_string(c.fit_form);
        get_to(s, "fit_form", form, "simulate");
        c.fit_form = fit_form_from_string(form);
    }
    if (c.d == 0) throw ValidationError("d must be positive");
    if (c.threads == 0) throw ValidationError("threads must be positive");
    return c;
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["d"] = d;
    j["p"] = p;
    j["seed"] = seed;
    j["threads"] = threads;
    j["output"] = output;
    j["verbosity"] = verbosity;
    j["noise"] = {{"law", to_string(noise_law)}, {"scale", noise_scale}, {"alpha", alpha}};
    j["kernel"] = {{"ell", kernel_ell}, {"m", kernel_m}, {"radius", kernel_radius}};
    ordered_json g = {{"mode", to_string(grid_mode)}};
    if (grid_k_min) {
        g["k_min"] = *grid_k_min;
        g["k_max"] = *grid_k_max;
    }
    j["grid"] = g;
    j["estimate"] = {{"data", data}, {"lo", eval_lo}, {"hi", eval_hi}, {"count", eval_count}, {"traces", traces}};
    ordered_json r;
    r["beta"] = beta;
    ordered_json rr = ordered_json::array();
    for (double v : this->r) rr.push_back(std::isinf(v) ? ordered_json("inf") : ordered_json(v));
    r["r"] = rr;
    r["L"] = L;
    if (rates_alpha) r["alpha"] = *rates_alpha;
    if (rates_mu) r["mu"] = *rates_mu;
    r["n"] = rates_n;
    j["rates"] = r;
    if (sweep)
        j["sweep"] = {{"param", sweep->param}, {"index", sweep->index}, {"from", sweep->from}, {"to", sweep->to},
                      {"steps", sweep->steps}};
    j["simulate"] = {{"density", {{"name", density.name}, {"params", density.params}}},
                     {"sample_sizes", sample_sizes},
                     {"replications", replications},
                     {"window", {{"lo", window.lo}, {"hi", window.hi}, {"cells", window.cells}}},
                     {"estimator", to_string(estimator)},
                     {"fixed_exponents", fixed_exponents},
                     {"constant_value", constant_value},
                     {"fit_form", to_string(fit_form)}};
    return j;
}

NoiseSpec RunConfig::noise() const { return builtin_noise(noise_law, noise_scale, d, alpha); }

KernelSpec RunConfig::kernel() const {
    const NoiseSpec g = noise();
    return make_kernel(kernel_ell, kernel_m == 0 ? default_base_smoothness(g) : kernel_m, kernel_radius, g);
}

std::optional<GridSpec> RunConfig::grid() const {
    if (!grid_k_min) return std::nullopt;
    GridSpec g{grid_mode, *grid_k_min, *grid_k_max};
    if (g.k_min > g.k_max) throw ValidationError("grid k_min exceeds k_max");
    return g;
}

RateInputs RunConfig::rate_inputs() const {
    RateInputs in;
    in.cls.beta = beta;
    in.cls.r = r;
    in.cls.L = L.empty() ? std::vector<double>(beta.size(), 1.0) : L;
    in.cls.p = p;
    in.alpha = rates_alpha.value_or(alpha);
    if (rates_mu) {
        in.mu = *rates_mu;
    } else if (in.alpha == 1.0) {
        in.mu = builtin_noise(noise_law, noise_scale, beta.size(), 1.0).mu;
    } else {
        in.mu.assign(beta.size(), 0.0);
    }
    in.n = rates_n;
    in.grid_mode = grid_mode;
    in.validate();
    return in;
}

ExperimentPlan RunConfig::plan() const {
    ExperimentPlan pl;
    pl.density = density;
    pl.d = d;
    pl.noise_law = noise_law;
    pl.noise_scale = noise_scale;
    pl.alpha = alpha;
    pl.sample_sizes = sample_sizes;
    pl.replications = replications;
    pl.window = window;
    pl.p = p;
    pl.grid = grid();
    pl.grid_mode = grid_mode;
    pl.kernel_ell = kernel_ell;
    pl.kernel_m = kernel_m;
    pl.kernel_radius = kernel_radius;
    pl.seed = seed;
    pl.estimator = estimator;
    pl.fixed_exponents = fixed_exponents;
    pl.constant_value = constant_value;
    pl.fit_form = fit_form;
    return pl;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path + " is not valid JSON: " + e.what());
    }
    return RunConfig::from_json(j);
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
    if (cfg.data.empty()) throw ValidationError("estimate needs estimate.data");
    if (!std::filesystem::exists(cfg.data)) throw IoError("data file not found: " + cfg.data);
    const Sample s = read_sample(cfg.data);
    if (s.dim() != cfg.d) throw ValidationError("data has " + std::to_string(s.dim()) + " columns, config d = " + std::to_string(cfg.d));
    const NoiseSpec noise = cfg.noise();
    const KernelSpec spec = cfg.kernel();
    const GridSpec grid = cfg.grid().value_or(default_grid(s.size(), noise.mu_alpha(), cfg.grid_mode));
    const auto pts = eval_points(cfg, s);
    const Estimator est(s, grid, spec, noise, cfg.p);
    const CurveResult res = estimate_curve(est, pts, cfg.threads, true);

    const auto dir = output_dir(cfg);
    std::ostringstream csv;
    for (std::size_t j = 0; j < cfg.d; ++j) csv << 'x' << j + 1 << ',';
    csv << "f_hat";
    for (std::size_t j = 0; j < cfg.d; ++j) csv << ",k" << j + 1;
    csv << '\n';
    std::size_t boundary = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (double v : pts[i]) csv << fmt17(v) << ',';
        csv << fmt17(res.values[i]);
        for (int k : res.traces[i].chosen.exponents()) csv << ',' << k;
        csv << '\n';
        boundary += res.traces[i].boundary;
    }
    write_file(dir / "estimates.csv", csv.str());
    if (cfg.traces) {
        std::string lines;
        for (const auto& t : res.traces) lines += trace_to_jsonl(t) + "\n";
        write_file(dir / "traces.jsonl", lines);
    }
    out << "estimated " << pts.size() << " points from n = " << s.size() << " observations";
    if (boundary) out << "; " << boundary << " selections at a grid end";
    out << '\n';
    return kOk;
}

int cmd_rates(const RunConfig& cfg, bool sweep, std::ostream& out) {
    const RateInputs base = cfg.rate_inputs();
    const auto dir = output_dir(cfg);
    if (!sweep) {
        const auto j = rate_json(base);
        write_file(dir / "rates.json", j.dump(2) + "\n");
        out << "zone " << j["zone"].get<std::string>() << ", rho " << j["rho_exact"].get<std::string>()
            << (base.cls.p > 0 && !j["consistent"].get<bool>() ? ", inconsistent" : "") << '\n';
        return kOk;
    }
    if (!cfg.sweep) throw ValidationError("--sweep needs a sweep section in the config");
    const SweepSpec& sw = *cfg.sweep;
    if (sw.steps < 2) throw ValidationError("sweep needs at least 2 steps");
    std::ostringstream csv;
    csv << sw.param << ",zone,boundary,rho,varrho,consistent\n";
    for (std::size_t k = 0; k < sw.steps; ++k) {
        const double v = sw.from + (sw.to - sw.from) * static_cast<double>(k) / static_cast<double>(sw.steps - 1);
        RateInputs in = base;
        auto at = [&](std::vector<double>& vec) -> double& {
            if (sw.index >= vec.size()) throw ValidationError("sweep index out of range");
            return vec[sw.index];
        };
        if (sw.param == "beta") at(in.cls.beta) = v;
        else if (sw.param == "r") at(in.cls.r) = v;
        else if (sw.param == "L") at(in.cls.L) = v;
        else if (sw.param == "mu") at(in.mu) = v;
        else if (sw.param == "p") in.cls.p = v;
        else if (sw.param == "alpha") in.alpha = v;
        else if (sw.param == "n") in.n = static_cast<std::size_t>(v);
        else throw ValidationError("unknown sweep parameter '" + sw.param + "'");
        in.validate();
        const auto e = rate_exponents<double>(in);
        csv << fmt17(v) << ',' << to_string(e.zone) << ',' << to_string(e.boundary) << ',' << ext(e.rho) << ','
            << ext(e.varrho) << ',' << (e.consistent ? "true" : "false") << '\n';
    }
    write_file(dir / "rates_sweep.csv", csv.str());
    out << "wrote " << sw.steps << " sweep rows\n";
    return kOk;
}

int cmd_simulate(const RunConfig& cfg, const SimulateOptions& opt, std::ostream& out) {
    ExperimentPlan plan = cfg.plan();
    if (opt.inject_constant) {
        plan.estimator = EstimatorKind::constant;
        plan.constant_value = 0.0;
    }
    const RiskResult res = empirical_risk(plan, cfg.threads);
    const auto dir = output_dir(cfg);
    write_file(dir / "risk.json", risk_to_json(res));
    write_file(dir / "risk.csv", risk_to_csv(res));
    for (std::size_t i = 0; i < res.n.size(); ++i)
        out << "n = " << res.n[i] << ": risk " << fmt17(res.mean_risk[i]) << " (se " << fmt17(res.se[i]) << ")\n";
    if (!opt.assert_rate) return kOk;
    const SlopeVerdict v = slope_vs_theory(res, res.theory_exponent);
    ordered_json j = {{"pass", v.pass}, {"slope", v.slope}, {"target", v.target}, {"tolerance", v.tolerance}};
    write_file(dir / "verdict.json", j.dump(2) + "\n");
    out << "slope " << fmt17(v.slope) << " vs " << fmt17(v.target) << " +- " << fmt17(v.tolerance) << ": "
        << (v.pass ? "PASS" : "FAIL") << '\n';
    if (!v.pass) throw AssertionFailure("fitted slope is outside the tolerance of the theoretical exponent");
    return kOk;
}

int cmd_check(const RunConfig& cfg, std::ostream& out) {
    const NoiseSpec noise = cfg.noise();
    const NoiseCertificate cert = certify_noise(noise);
    ordered_json j;
    j["assumption"] = cert.assumption;
    j["rule"] = cert.rule;
    j["declared"] = cert.declared;
    j["lattice_min"] = cert.lattice_min;
    j["certified"] = cert.ok;
    j["mu"] = noise.mu_alpha();
    j["mu_above_half"] = cert.mu_above_half;
    out << cert.assumption << ": declared " << fmt17(cert.declared) << " (" << cert.rule << "), lattice minimum "
        << fmt17(cert.lattice_min) << (cert.ok ? ", certified" : ", NOT certified") << '\n';
    if (noise.alpha == 1.0) {
        out << "mu =";
        for (double m : noise.mu) out << ' ' << fmt17(m);
        out << (cert.mu_above_half ? "; mu > 1/2 holds" : "; mu > 1/2 fails (g cannot be square integrable)") << '\n';
    }
    const auto dir = output_dir(cfg);
    if (!cert.ok) {
        write_file(dir / "check.json", j.dump(2) + "\n");
        throw AssumptionError(cert.assumption, "lattice minimum " + fmt17(cert.lattice_min) + " below declared " +
                                                   fmt17(cert.declared));
    }
    const KernelSpec spec = cfg.kernel();  // throws when the kernel Fourier integrals diverge
    j["k1"] = spec.k1;
    j["k2"] = spec.k2;
    j["kcheck_l1"] = spec.kcheck_l1;
    j["m_inf"] = m_infinity(spec, noise);
    write_file(dir / "check.json", j.dump(2) + "\n");
    out << "k1 " << fmt17(spec.k1) << ", k2 " << fmt17(spec.k2) << ", M_inf " << fmt17(m_infinity(spec, noise)) << '\n';
    return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App cli{"Adaptive density estimation in the convolution structure density model"};
    cli.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> output;
    cli.add_option("--config", config_path, "JSON run configuration");
    cli.add_option("--seed", seed, "random seed");
    cli.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    cli.add_option("--output", output, "output directory");
    cli.fallthrough();
    auto* est = cli.add_subcommand("estimate", "estimate the density on an evaluation lattice");
    auto* sim = cli.add_subcommand("simulate", "run a risk experiment");
    auto* rat = cli.add_subcommand("rates", "compute rate exponents");
    auto* chk = cli.add_subcommand("check", "check noise and kernel assumptions");
    bool sweep = false;
    rat->add_flag("--sweep", sweep, "sweep one parameter and write CSV");
    SimulateOptions so;
    sim->add_flag("--assert-rate", so.assert_rate, "exit 4 when the fitted slope misses the theoretical exponent");
    sim->add_flag("--inject-constant", so.inject_constant, "replace the estimator by the zero constant");
    for (auto* sc : {est, sim, rat, chk}) sc->fallthrough();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = cli.exit(e, out, err);
        return rc == 0 ? kOk : kValidation;
    }
    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (threads) cfg.threads = *threads;
        if (output) cfg.output = *output;
        if (est->parsed()) return cmd_estimate(cfg, out);
        if (sim->parsed()) return cmd_simulate(cfg, so, out);
        if (rat->parsed()) return cmd_rates(cfg, sweep, out);
        return cmd_check(cfg, out);
    } catch (const AssumptionError& e) {
        err << "assumption failed: " << e.what() << '\n';
        return kValidation;
    } catch (const ValidationError& e) {
        err << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const AssertionFailure& e) {
        err << "assertion failed: " << e.what() << '\n';
        return kAssertion;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternal;
    }
}

}  // namespace deconv::app
