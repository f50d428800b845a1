#include "deconv/selector.hpp"

#include <algorithm>
#include <exception>
#include <json.hpp>
#include <thread>

#include "deconv/error.hpp"

namespace deconv {

JoinTable::JoinTable(std::vector<BandwidthVec> grid) : grid_(std::move(grid)) {
    if (grid_.empty()) throw ValidationError("empty bandwidth grid");
    const std::size_t d = grid_.front().dim();
    lo_ = grid_.front().exponents();
    hi_ = lo_;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
        if (grid_[i].dim() != d) throw ValidationError("grid elements differ in dimension");
        if (!index_.emplace(grid_[i], i).second) throw ValidationError("duplicate grid element " + grid_[i].to_string());
        for (std::size_t j = 0; j < d; ++j) {
            lo_[j] = std::min(lo_[j], grid_[i].exponent(j));
            hi_[j] = std::max(hi_[j], grid_[i].exponent(j));
        }
    }
    const std::size_t n = grid_.size();
    join_.resize(n * n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const auto it = index_.find(bandwidth_join(grid_[a], grid_[b]));
            if (it == index_.end()) throw ValidationError("grid not join-closed");
            join_[a * n + b] = it->second;
        }
}

std::size_t JoinTable::index_of(const BandwidthVec& h) const {
    const auto it = index_.find(h);
    if (it == index_.end()) throw ValidationError("bandwidth " + h.to_string() + " is not in the grid");
    return it->second;
}

bool JoinTable::on_boundary(std::size_t i) const {
    for (std::size_t j = 0; j < lo_.size(); ++j) {
        const int k = grid_[i].exponent(j);
        if (k == lo_[j] || k == hi_[j]) return true;
    }
    return false;
}

double r_hat(const JoinTable& grid, std::size_t h, std::span<const double> f_hat, std::span<const double> U) {
    double best = 0.0;
    for (std::size_t eta = 0; eta < grid.size(); ++eta) {
        const std::size_t he = grid.join(h, eta);
        const double term = std::abs(f_hat[he] - f_hat[eta]) - 4.0 * U[he] - 4.0 * U[eta];
        best = std::max(best, std::max(term, 0.0));
    }
    return best;
}

double u_star(const JoinTable& grid, std::size_t h, std::span<const double> U) {
    double best = U[h];
    for (std::size_t eta = 0; eta < grid.size(); ++eta)
        if (grid[eta].dominates(grid[h])) best = std::max(best, U[eta]);
    return best;
}

SelectionTrace select(const JoinTable& grid, std::span<const double> x, std::span<const double> f_hat,
                      std::span<const double> U) {
    if (f_hat.size() != grid.size() || U.size() != grid.size())
        throw ValidationError("estimates and envelopes must cover the grid");
    SelectionTrace trace;
    trace.x.assign(x.begin(), x.end());
    trace.grid = grid.grid();
    trace.records.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto& r = trace.records[i];
        r.f_hat = f_hat[i];
        r.U = U[i];
        r.r_hat = r_hat(grid, i, f_hat, U);
        r.u_star = u_star(grid, i, U);
        r.objective = r.r_hat + 8.0 * r.u_star;
        const bool better = i == 0 || r.objective < trace.records[trace.chosen_index].objective ||
                            (r.objective == trace.records[trace.chosen_index].objective &&
                             grid[i] < grid[trace.chosen_index]);
        if (better) trace.chosen_index = i;
    }
    trace.chosen = grid[trace.chosen_index];
    trace.value = f_hat[trace.chosen_index];
    trace.boundary = grid.on_boundary(trace.chosen_index);
    return trace;
}

std::string trace_to_jsonl(const SelectionTrace& trace) {
    nlohmann::ordered_json j;
    j["x"] = trace.x;
    j["chosen"] = trace.chosen.exponents();
    j["boundary"] = trace.boundary;
    j["value"] = trace.value;
    auto& recs = j["records"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const auto& r = trace.records[i];
        recs.push_back({{"h", trace.grid[i].exponents()},
                        {"f_hat", r.f_hat},
                        {"U", r.U},
                        {"R_hat", r.r_hat},
                        {"U_star", r.u_star},
                        {"objective", r.objective}});
    }
    return j.dump();
}

Estimator::Estimator(const Sample& sample, const GridSpec& grid, const KernelSpec& spec, const NoiseSpec& noise,
                     double p, std::shared_ptr<TableCache> cache)
    : index_(sample), grid_(enumerate_grid(grid, sample.dim())), env_(make_envelope_params(spec, noise, p, sample.size())) {
    if (sample.dim() != noise.d || spec.d != noise.d) throw ValidationError("sample, kernel and noise dimensions differ");
    if (!cache) cache = std::make_shared<TableCache>(std::string{});
    tables_.reserve(grid_.size());
    for (const auto& h : grid_.grid()) tables_.push_back(cache->get(spec, noise, h));
}

void Estimator::evaluate(std::span<const double> x, std::vector<double>& f_hat, std::vector<double>& U) const {
    f_hat.resize(grid_.size());
    U.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
        const PointEstimate e = estimate_at(*tables_[i], index_, x);
        f_hat[i] = e.f_hat;
        U[i] = envelope_U(env_, grid_[i], e.sigma2_hat);
    }
}

SelectionTrace Estimator::select_at(std::span<const double> x) const {
    std::vector<double> f, u;
    evaluate(x, f, u);
    return select(grid_, x, f, u);
}

CurveResult estimate_curve(const Estimator& est, const std::vector<std::vector<double>>& x_points, unsigned threads,
                           bool keep_traces) {
    CurveResult out;
    const std::size_t m = x_points.size();
    out.values.resize(m);
    if (keep_traces) out.traces.resize(m);
    std::vector<std::exception_ptr> errors(std::max(threads, 1u));
    auto work = [&](unsigned w, std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) {
                SelectionTrace t = est.select_at(x_points[i]);
                out.values[i] = t.value;
                if (keep_traces) out.traces[i] = std::move(t);
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(m, 1))));
    if (threads == 1) {
        work(0, 0, m);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (m + threads - 1) / threads;
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t b = std::min(m, w * chunk), e = std::min(m, b + chunk);
            if (b < e) pool.emplace_back(work, w, b, e);
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

CurveResult estimate_curve(const Sample& sample, const GridSpec& grid, const std::vector<std::vector<double>>& x_points,
                           const KernelSpec& spec, const NoiseSpec& noise, double p, unsigned threads,
                           bool keep_traces) {
    if (sample.size() == 0) throw ValidationError("empty sample");
    Estimator est(sample, grid, spec, noise, p);
    return estimate_curve(est, x_points, threads, keep_traces);
}

}  // namespace deconv
