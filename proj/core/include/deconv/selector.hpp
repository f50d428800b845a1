#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deconv/estimator.hpp"
#include "deconv/kernel.hpp"
#include "deconv/model.hpp"
#include "deconv/operator.hpp"

namespace deconv {

// Grid with precomputed joins h v eta and the coordinatewise order.
class JoinTable {
public:
    JoinTable() = default;
    // Throws ValidationError("grid not join-closed") when some join is missing.
    explicit JoinTable(std::vector<BandwidthVec> grid);

    std::size_t size() const { return grid_.size(); }
    const std::vector<BandwidthVec>& grid() const { return grid_; }
    const BandwidthVec& operator[](std::size_t i) const { return grid_[i]; }
    std::size_t join(std::size_t h, std::size_t eta) const { return join_[h * grid_.size() + eta]; }
    std::size_t index_of(const BandwidthVec& h) const;
    // true when some exponent of grid[i] sits at the grid's smallest or largest value
    bool on_boundary(std::size_t i) const;

private:
    std::vector<BandwidthVec> grid_;
    std::vector<std::size_t> join_;
    std::map<BandwidthVec, std::size_t> index_;
    std::vector<int> lo_, hi_;
};

// sup_eta [|f_{h v eta} - f_eta| - 4 U(h v eta) - 4 U(eta)]_+
double r_hat(const JoinTable& grid, std::size_t h, std::span<const double> f_hat, std::span<const double> U);

// sup_{eta >= h} U(eta)
double u_star(const JoinTable& grid, std::size_t h, std::span<const double> U);

struct BandwidthRecord {
    double f_hat = 0.0;
    double U = 0.0;
    double r_hat = 0.0;
    double u_star = 0.0;
    double objective = 0.0;
};

struct SelectionTrace {
    std::vector<double> x;
    std::vector<BandwidthVec> grid;
    std::vector<BandwidthRecord> records;
    BandwidthVec chosen;
    std::size_t chosen_index = 0;
    double value = 0.0;
    bool boundary = false;
};

// argmin of R_hat + 8 U_star; ties go to the lexicographically smallest
// exponent vector.
SelectionTrace select(const JoinTable& grid, std::span<const double> x, std::span<const double> f_hat,
                      std::span<const double> U);

// One JSON object per line: x, chosen exponents, boundary flag, value and the per-h records.
std::string trace_to_jsonl(const SelectionTrace& trace);

// Tables, envelope constants and sample index for one (sample, grid, kernel, noise).
class Estimator {
public:
    Estimator(const Sample& sample, const GridSpec& grid, const KernelSpec& spec, const NoiseSpec& noise,
              double p, std::shared_ptr<TableCache> cache = nullptr);

    const JoinTable& grid() const { return grid_; }
    const EnvelopeParams& envelope() const { return env_; }
    const DeconvKernelTable& table(std::size_t i) const { return *tables_[i]; }
    const SampleIndex& sample() const { return index_; }

    // f_hat and U on every grid element at x.
    void evaluate(std::span<const double> x, std::vector<double>& f_hat, std::vector<double>& U) const;
    SelectionTrace select_at(std::span<const double> x) const;

private:
    SampleIndex index_;
    JoinTable grid_;
    EnvelopeParams env_;
    std::vector<std::shared_ptr<const DeconvKernelTable>> tables_;
};

struct CurveResult {
    std::vector<double> values;
    std::vector<SelectionTrace> traces;  // filled when requested
};

// Selected estimate at every point; points are split across `threads`
// workers and results are written by index, so output does not depend on
// the thread count.
CurveResult estimate_curve(const Estimator& est, const std::vector<std::vector<double>>& x_points,
                           unsigned threads = 1, bool keep_traces = false);

CurveResult estimate_curve(const Sample& sample, const GridSpec& grid, const std::vector<std::vector<double>>& x_points,
                           const KernelSpec& spec, const NoiseSpec& noise, double p, unsigned threads = 1,
                           bool keep_traces = false);

}  // namespace deconv
