#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "deconv/kernel.hpp"
#include "deconv/model.hpp"

namespace deconv {

struct Lattice1D {
    double origin = 0.0;
    double step = 1.0;
    std::size_t count = 0;

    double node(std::size_t k) const { return origin + step * static_cast<double>(k); }
    double last() const { return node(count - 1); }
};

// Samples of the deconvolution kernel M(., h) solving
// (1 - alpha) M(y) + alpha int g(t - y) M(t) dt = K_h(y).
// M is split as c K_h + regular with c = 1/(1 - alpha) (0 when alpha = 1);
// eval_M adds the closed-form c K_h part to the interpolated regular part.
struct DeconvKernelTable {
    BandwidthVec h;
    std::vector<Lattice1D> lattice;
    std::vector<double> values;   // M on the lattice, row-major, last coordinate fastest
    std::vector<double> regular;  // values - c K_h on the lattice
    double singular_coeff = 0.0;
    double m_sup = 0.0;
    double l2_norm = 0.0;
    double residual = 0.0;        // operator-equation residual at construction
    double max_imag = 0.0;        // largest imaginary part discarded after inversion
    KernelSpec kernel;
    // evaluation helpers derived from kernel and h
    std::vector<double> h_values;
    std::shared_ptr<const OrderKernel> shape;
    bool regular_is_zero = false;

    std::size_t dim() const { return lattice.size(); }
    std::size_t size() const { return values.size(); }
    std::vector<std::size_t> dims() const;
    std::vector<double> node(std::size_t flat) const;
    double cell_volume() const;
};

struct SolveOptions {
    double cutoff_tol = 1e-8;      // |K^(h t)| times the spectral weight beyond the cutoff
    double tail_tol = 1e-9;        // relative size of M on the outer band of the box
    double residual_tol = 1e-6;
    double step_fraction = 1.0 / 16.0;  // lattice step as a fraction of h_j
    std::size_t max_points = std::size_t{1} << 24;
};

// Frequency cutoff along coordinate j (already doubled).
double frequency_cutoff(const KernelSpec& spec, const NoiseSpec& noise, const BandwidthVec& h, std::size_t j,
                        double tol);

DeconvKernelTable solve_deconv_kernel(const KernelSpec& spec, const NoiseSpec& noise, const BandwidthVec& h,
                                      const SolveOptions& options = {});

// sup |(1 - alpha) M + alpha (g conv M) - K_h| / sup |K_h| on the lattice,
// with the convolution done spectrally and M taken from table.values.
double verify_operator_equation(const DeconvKernelTable& table, const KernelSpec& spec, const NoiseSpec& noise);

// Interpolated M(y, h). Outside the box padded by one cell returns 0 and
// increments *truncated when given.
double eval_M(const DeconvKernelTable& table, std::span<const double> y, std::size_t* truncated = nullptr);

// "DKTB" dump: dims, exponents, lattice parameters, constants and float64 payload.
void write_table(const std::string& path, const DeconvKernelTable& table);
DeconvKernelTable read_table(const std::string& path, const KernelSpec& spec);

// Tables keyed by (kernel, noise, alpha, h). Tables are immutable once built.
// When a directory is given (DECONV_CACHE_DIR by default) tables are also
// persisted as DKTB files.
class TableCache {
public:
    TableCache();
    explicit TableCache(std::string disk_dir, SolveOptions options = {});

    std::shared_ptr<const DeconvKernelTable> get(const KernelSpec& spec, const NoiseSpec& noise,
                                                 const BandwidthVec& h);
    std::size_t size() const;
    std::vector<std::shared_ptr<const DeconvKernelTable>> tables() const;
    const std::string& disk_dir() const { return dir_; }

private:
    std::string dir_;
    SolveOptions options_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const DeconvKernelTable>> tables_;
};

}  // namespace deconv
