#include "deconv/operator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "deconv/error.hpp"
#include "fft.hpp"

namespace deconv {
namespace {

std::size_t next_pow2(double x) {
    std::size_t n = 1;
    while (static_cast<double>(n) < x) n <<= 1;
    return n;
}

int signed_freq(std::size_t q, std::size_t n) {
    return q < n / 2 ? static_cast<int>(q) : static_cast<int>(q) - static_cast<int>(n);
}

// Unravels a row-major flat index into per-coordinate indices.
void unravel(std::size_t flat, const std::vector<std::size_t>& dims, std::vector<std::size_t>& idx) {
    for (std::size_t j = dims.size(); j-- > 0;) {
        idx[j] = flat % dims[j];
        flat /= dims[j];
    }
}

double singular_coefficient(double alpha) { return alpha < 1.0 ? 1.0 / (1.0 - alpha) : 0.0; }

// Per-coordinate samples of K_ell(h_j t) on the dual lattice.
std::vector<std::vector<double>> kernel_spectrum(const KernelSpec& spec, const BandwidthVec& h,
                                                 const std::vector<Lattice1D>& lat) {
    const OrderKernel k = spec.univariate();
    std::vector<std::vector<double>> out(lat.size());
    for (std::size_t j = 0; j < lat.size(); ++j) {
        const std::size_t n = lat[j].count;
        const double dt = 2.0 * std::numbers::pi / (static_cast<double>(n) * lat[j].step);
        out[j].resize(n);
        for (std::size_t q = 0; q < n; ++q) out[j][q] = k.fourier(h.value(j) * signed_freq(q, n) * dt);
    }
    return out;
}

std::vector<double> kernel_on_lattice(const KernelSpec& spec, const BandwidthVec& h,
                                      const std::vector<Lattice1D>& lat) {
    const OrderKernel k = spec.univariate();
    std::vector<std::vector<double>> axis(lat.size());
    std::vector<std::size_t> dims(lat.size());
    for (std::size_t j = 0; j < lat.size(); ++j) {
        dims[j] = lat[j].count;
        const double hj = h.value(j);
        axis[j].resize(lat[j].count);
        for (std::size_t q = 0; q < lat[j].count; ++q) axis[j][q] = k(lat[j].node(q) / hj) / hj;
    }
    std::size_t total = 1;
    for (auto n : dims) total *= n;
    std::vector<double> out(total);
    std::vector<std::size_t> idx(dims.size());
    for (std::size_t f = 0; f < total; ++f) {
        unravel(f, dims, idx);
        double v = 1.0;
        for (std::size_t j = 0; j < dims.size(); ++j) v *= axis[j][idx[j]];
        out[f] = v;
    }
    return out;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated DKTB file");
    return v;
}

}  // namespace

static void finalize_table(DeconvKernelTable& t) {
    t.h_values = t.h.values();
    t.shape = std::make_shared<const OrderKernel>(t.kernel.univariate());
    const auto kh = kernel_on_lattice(t.kernel, t.h, t.lattice);
    t.regular.resize(t.values.size());
    bool zero = true;
    for (std::size_t f = 0; f < t.values.size(); ++f) {
        t.regular[f] = t.values[f] - t.singular_coeff * kh[f];
        zero = zero && t.regular[f] == 0.0;
    }
    t.regular_is_zero = zero;
}

std::vector<std::size_t> DeconvKernelTable::dims() const {
    std::vector<std::size_t> d(lattice.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = lattice[j].count;
    return d;
}

std::vector<double> DeconvKernelTable::node(std::size_t flat) const {
    const auto ds = dims();
    std::vector<std::size_t> idx(ds.size());
    unravel(flat, ds, idx);
    std::vector<double> y(ds.size());
    for (std::size_t j = 0; j < ds.size(); ++j) y[j] = lattice[j].node(idx[j]);
    return y;
}

double DeconvKernelTable::cell_volume() const {
    double v = 1.0;
    for (const auto& l : lattice) v *= l.step;
    return v;
}

double frequency_cutoff(const KernelSpec& spec, const NoiseSpec& noise, const BandwidthVec& h, std::size_t j,
                        double tol) {
    const OrderKernel k = spec.univariate();
    const double hj = h.value(j);
    const double c = singular_coefficient(noise.alpha);
    std::vector<double> t(noise.d, 0.0);
    auto weight = [&](double tj) {
        t[j] = -tj;
        const std::complex<double> g = noise.g_fourier(t);
        if (noise.alpha == 1.0) return 1.0 / std::abs(g);
        return std::abs(1.0 / (1.0 - noise.alpha + noise.alpha * g) - c);
    };
    constexpr int kSteps = 480;
    int last_above = -1;
    double tq = 1.0 / hj;
    for (int q = 0; q < kSteps; ++q, tq *= 1.1) {
        const double w = noise.alpha == 0.0 ? 1.0 : weight(tq);
        if (k.fourier_envelope(hj * tq) * w >= tol) last_above = q;
    }
    if (last_above == kSteps - 1)
        throw ValidationError("frequency cutoff too small: kernel spectrum times noise weight does not decay");
    return 2.0 * std::pow(1.1, last_above + 1) / hj;
}

DeconvKernelTable solve_deconv_kernel(const KernelSpec& spec, const NoiseSpec& noise, const BandwidthVec& h,
                                      const SolveOptions& options) {
    noise.validate();
    const std::size_t d = spec.d;
    if (noise.d != d || h.dim() != d) throw ValidationError("kernel, noise and bandwidth dimensions differ");
    if (noise.alpha == 1.0 && !noise.moderately_ill_posed)
        throw AssumptionError("moderate ill-posedness of the noise", "g^ decays faster than any polynomial");

    const double alpha = noise.alpha;
    const double c = singular_coefficient(alpha);
    const double support = spec.ell * spec.radius;

    DeconvKernelTable table;
    table.h = h;
    table.kernel = spec;
    table.singular_coeff = alpha == 0.0 ? 1.0 : c;
    table.lattice.resize(d);

    if (alpha == 0.0) {
        std::size_t total = 1;
        for (std::size_t j = 0; j < d; ++j) {
            const double step = h.value(j) * options.step_fraction;
            const std::size_t n = next_pow2(2.0 * (support * h.value(j) + step) / step + 1.0);
            table.lattice[j] = {-static_cast<double>(n / 2) * step, step, n};
            total *= n;
        }
        if (total > options.max_points) throw ValidationError("kernel lattice exceeds the point budget");
        table.values = kernel_on_lattice(spec, h, table.lattice);
        table.regular.assign(table.values.size(), 0.0);
    } else {
        std::vector<double> steps(d), pads(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double tcut = frequency_cutoff(spec, noise, h, j, options.cutoff_tol);
            double step = h.value(j) * options.step_fraction;
            while (step > std::numbers::pi / tcut) step *= 0.5;  // keeps nodes on multiples of h/16
            steps[j] = step;
            pads[j] = alpha == 1.0 ? 0.25 * support * h.value(j) : 8.0 * noise.scale;
        }
        for (int attempt = 0;; ++attempt) {
            std::size_t total = 1;
            std::vector<std::size_t> dims(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double half = support * h.value(j) + pads[j];
                const std::size_t n = next_pow2(2.0 * half / steps[j]);
                table.lattice[j] = {-static_cast<double>(n / 2) * steps[j], steps[j], n};
                dims[j] = n;
                total *= n;
            }
            if (total > options.max_points)
                throw ValidationError("frequency cutoff too small for the lattice budget (" + std::to_string(total) +
                                      " points needed)");

            const auto kspec = kernel_spectrum(spec, h, table.lattice);
            std::vector<std::vector<double>> freq(d);
            double norm = 1.0;
            for (std::size_t j = 0; j < d; ++j) {
                const std::size_t n = dims[j];
                const double dt = 2.0 * std::numbers::pi / (static_cast<double>(n) * steps[j]);
                freq[j].resize(n);
                for (std::size_t q = 0; q < n; ++q) freq[j][q] = signed_freq(q, n) * dt;
                norm *= static_cast<double>(n) * steps[j];
            }

            detail::ComplexBuffer buf(total);
            std::vector<std::size_t> idx(d);
            std::vector<double> minus_t(d);
            for (std::size_t f = 0; f < total; ++f) {
                unravel(f, dims, idx);
                double kv = 1.0, lower = 1.0;
                int parity = 0;
                for (std::size_t j = 0; j < d; ++j) {
                    kv *= kspec[j][idx[j]];
                    minus_t[j] = -freq[j][idx[j]];
                    parity += signed_freq(idx[j], dims[j]);
                    if (alpha == 1.0) lower *= std::pow(1.0 + minus_t[j] * minus_t[j], -0.5 * noise.mu[j]);
                }
                const std::complex<double> g = noise.g_fourier(minus_t);
                std::complex<double> w;
                if (alpha == 1.0) {
                    if (std::abs(g) < 0.5 * noise.upsilon0 * lower)
                        throw AssumptionError("noise Fourier lower bound",
                                              "|g^(t)| below upsilon0/2 times the polynomial bound at a probed frequency");
                    w = 1.0 / g;
                } else {
                    const std::complex<double> den = 1.0 - alpha + alpha * g;
                    if (std::abs(den) < 0.5 * noise.epsilon)
                        throw AssumptionError("noise denominator bound",
                                              "|1-alpha+alpha g^(t)| below epsilon/2 at a probed frequency");
                    w = 1.0 / den - c;
                }
                const double sgn = (parity & 1) ? -1.0 : 1.0;
                buf[f] = kv * w * (sgn / norm);
            }
            detail::fft_inplace(buf, dims, +1);

            table.regular.resize(total);
            double max_imag = 0.0;
            for (std::size_t f = 0; f < total; ++f) {
                table.regular[f] = buf[f].real();
                max_imag = std::max(max_imag, std::abs(buf[f].imag()));
            }
            table.max_imag = max_imag;
            if (c != 0.0) {
                table.values = kernel_on_lattice(spec, h, table.lattice);
                for (std::size_t f = 0; f < total; ++f) table.values[f] = c * table.values[f] + table.regular[f];
            } else {
                table.values = table.regular;
            }
            if (alpha == 1.0) break;

            // the regular part decays like the noise; grow the box until the outer band is negligible
            double band_max = 0.0, all_max = 0.0;
            for (std::size_t f = 0; f < total; ++f) {
                unravel(f, dims, idx);
                bool outer = false;
                for (std::size_t j = 0; j < d; ++j)
                    outer = outer || std::abs(table.lattice[j].node(idx[j])) >= 0.75 * std::abs(table.lattice[j].origin);
                all_max = std::max(all_max, std::abs(table.values[f]));
                if (outer) band_max = std::max(band_max, std::abs(table.regular[f]));
            }
            if (band_max <= options.tail_tol * all_max) break;
            if (attempt >= 6) throw ValidationError("deconvolution kernel box did not converge");
            for (auto& p : pads) p *= 2.0;
        }
    }

    double msup = 0.0, l2 = 0.0;
    for (double v : table.values) {
        if (!std::isfinite(v)) throw AssertionFailure("non-finite deconvolution kernel value");
        msup = std::max(msup, std::abs(v));
        l2 += v * v;
    }
    finalize_table(table);
    table.m_sup = msup;
    table.l2_norm = std::sqrt(l2 * table.cell_volume());
    table.residual = verify_operator_equation(table, spec, noise);
    if (!(table.residual <= options.residual_tol))
        throw AssertionFailure("operator equation residual " + std::to_string(table.residual) + " exceeds tolerance");
    return table;
}

double verify_operator_equation(const DeconvKernelTable& table, const KernelSpec& spec, const NoiseSpec& noise) {
    const std::size_t d = table.dim();
    const auto dims = table.dims();
    const std::size_t total = table.size();
    const double alpha = noise.alpha;
    const double c = singular_coefficient(alpha);

    const std::vector<double> kh = kernel_on_lattice(spec, table.h, table.lattice);
    double kh_sup = 0.0;
    for (double v : kh) kh_sup = std::max(kh_sup, std::abs(v));

    // regular part recomputed from the stored values
    detail::ComplexBuffer buf(total);
    bool all_zero = true;
    for (std::size_t f = 0; f < total; ++f) {
        const double r = table.values[f] - c * kh[f];
        buf[f] = r;
        all_zero = all_zero && r == 0.0;
    }
    if (alpha == 0.0 && all_zero) return 0.0;

    detail::fft_inplace(buf, dims, -1);
    const auto kspec = kernel_spectrum(spec, table.h, table.lattice);
    std::vector<std::vector<double>> freq(d);
    double cell = 1.0, norm = 1.0;
    for (std::size_t j = 0; j < d; ++j) {
        const std::size_t n = dims[j];
        const double dt = 2.0 * std::numbers::pi / (static_cast<double>(n) * table.lattice[j].step);
        freq[j].resize(n);
        for (std::size_t q = 0; q < n; ++q) freq[j][q] = signed_freq(q, n) * dt;
        cell *= table.lattice[j].step;
        norm *= static_cast<double>(n) * table.lattice[j].step;
    }
    std::vector<std::size_t> idx(d);
    std::vector<double> minus_t(d);
    for (std::size_t f = 0; f < total; ++f) {
        unravel(f, dims, idx);
        double kv = 1.0;
        int parity = 0;
        for (std::size_t j = 0; j < d; ++j) {
            kv *= kspec[j][idx[j]];
            minus_t[j] = -freq[j][idx[j]];
            parity += signed_freq(idx[j], dims[j]);
        }
        const double sgn = (parity & 1) ? -1.0 : 1.0;
        const std::complex<double> g = noise.g_fourier(minus_t);
        const std::complex<double> den = 1.0 - alpha + alpha * g;
        const std::complex<double> rhat = buf[f] * (sgn * cell);
        const std::complex<double> err = den * rhat + ((1.0 - alpha) * c - 1.0 + alpha * c * g) * kv;
        buf[f] = err * (sgn / norm);
    }
    detail::fft_inplace(buf, dims, +1);
    double worst = 0.0;
    for (std::size_t f = 0; f < total; ++f) worst = std::max(worst, std::abs(buf[f]));
    return worst / kh_sup;
}

double eval_M(const DeconvKernelTable& table, std::span<const double> y, std::size_t* truncated) {
    const std::size_t d = table.dim();
    double interp = 0.0;
    if (d == 1) {
        const Lattice1D& l = table.lattice[0];
        const double u = (y[0] - l.origin) / l.step;
        if (!(u >= -1.0 && u <= static_cast<double>(l.count))) {
            if (truncated) ++*truncated;
            return 0.0;
        }
        if (!table.regular_is_zero) {
            const double fl = std::floor(u);
            const long k = static_cast<long>(fl);
            const double fr = u - fl;
            const long n = static_cast<long>(l.count);
            const double a = k >= 0 && k < n ? table.regular[static_cast<std::size_t>(k)] : 0.0;
            const double b = k + 1 >= 0 && k + 1 < n ? table.regular[static_cast<std::size_t>(k + 1)] : 0.0;
            interp = fr == 0.0 ? a : (1.0 - fr) * a + fr * b;
        }
    } else {
        if (d > 8) throw ValidationError("eval_M supports at most 8 dimensions");
        long lo[8];
        double frac[8];
        for (std::size_t j = 0; j < d; ++j) {
            const Lattice1D& l = table.lattice[j];
            const double u = (y[j] - l.origin) / l.step;
            if (!(u >= -1.0 && u <= static_cast<double>(l.count))) {
                if (truncated) ++*truncated;
                return 0.0;
            }
            const double fl = std::floor(u);
            lo[j] = static_cast<long>(fl);
            frac[j] = u - fl;
        }
        if (!table.regular_is_zero) {
            const std::size_t corners = std::size_t{1} << d;
            for (std::size_t cmask = 0; cmask < corners; ++cmask) {
                double w = 1.0;
                std::size_t flat = 0;
                bool inside = true;
                for (std::size_t j = 0; j < d; ++j) {
                    const bool up = (cmask >> (d - 1 - j)) & 1;
                    const long k = lo[j] + (up ? 1 : 0);
                    w *= up ? frac[j] : 1.0 - frac[j];
                    if (k < 0 || k >= static_cast<long>(table.lattice[j].count)) inside = false;
                    flat = flat * table.lattice[j].count + static_cast<std::size_t>(std::max(0L, k));
                }
                if (inside && w != 0.0) interp += w * table.regular[flat];
            }
        }
    }
    if (table.singular_coeff == 0.0) return interp;
    const OrderKernel& k = *table.shape;
    double kh = 1.0;
    for (std::size_t j = 0; j < d && kh != 0.0; ++j) kh *= k(y[j] / table.h_values[j]) / table.h_values[j];
    return table.singular_coeff * kh + interp;
}

void write_table(const std::string& path, const DeconvKernelTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write table file '" + path + "'");
    out.write("DKTB", 4);
    put<std::uint32_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
    for (std::size_t j = 0; j < table.dim(); ++j) {
        put<std::int32_t>(out, table.h.exponent(j));
        put<std::uint64_t>(out, table.lattice[j].count);
        put<double>(out, table.lattice[j].origin);
        put<double>(out, table.lattice[j].step);
    }
    put<double>(out, table.singular_coeff);
    put<double>(out, table.m_sup);
    put<double>(out, table.l2_norm);
    put<double>(out, table.residual);
    put<double>(out, table.max_imag);
    out.write(reinterpret_cast<const char*>(table.values.data()),
              static_cast<std::streamsize>(table.values.size() * sizeof(double)));
    if (!out) throw IoError("error writing table file '" + path + "'");
}

DeconvKernelTable read_table(const std::string& path, const KernelSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open table file '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "DKTB", 4) != 0) throw IoError("'" + path + "' is not a DKTB file");
    if (get<std::uint32_t>(in) != 1) throw IoError("unsupported DKTB version in '" + path + "'");
    const std::uint32_t d = get<std::uint32_t>(in);
    if (d != spec.d) throw ValidationError("DKTB dimension does not match the kernel");
    DeconvKernelTable t;
    t.kernel = spec;
    std::vector<int> k(d);
    t.lattice.resize(d);
    std::size_t total = 1;
    for (std::uint32_t j = 0; j < d; ++j) {
        k[j] = get<std::int32_t>(in);
        t.lattice[j].count = get<std::uint64_t>(in);
        t.lattice[j].origin = get<double>(in);
        t.lattice[j].step = get<double>(in);
        total *= t.lattice[j].count;
    }
    t.h = BandwidthVec(k);
    t.singular_coeff = get<double>(in);
    t.m_sup = get<double>(in);
    t.l2_norm = get<double>(in);
    t.residual = get<double>(in);
    t.max_imag = get<double>(in);
    t.values.resize(total);
    if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(total * sizeof(double))))
        throw IoError("truncated DKTB payload in '" + path + "'");
    finalize_table(t);
    return t;
}

TableCache::TableCache() {
    if (const char* dir = std::getenv("DECONV_CACHE_DIR"); dir && *dir) dir_ = dir;
}

TableCache::TableCache(std::string disk_dir, SolveOptions options) : dir_(std::move(disk_dir)), options_(options) {}

std::shared_ptr<const DeconvKernelTable> TableCache::get(const KernelSpec& spec, const NoiseSpec& noise,
                                                         const BandwidthVec& h) {
    std::ostringstream key;
    key.precision(17);
    key << spec.cache_key() << "|" << (noise.tag.empty() ? "custom" : noise.tag) << "|alpha=" << noise.alpha
        << "|h=" << h.to_string() << "|tol=" << options_.cutoff_tol << "," << options_.step_fraction;
    const std::string k = key.str();
    std::lock_guard lock(mutex_);
    if (auto it = tables_.find(k); it != tables_.end()) return it->second;

    std::shared_ptr<const DeconvKernelTable> table;
    std::string file;
    if (!dir_.empty() && !noise.tag.empty()) {
        char name[32];
        std::snprintf(name, sizeof name, "%016llx.dktb", static_cast<unsigned long long>(fnv1a(k)));
        file = (std::filesystem::path(dir_) / name).string();
        if (std::filesystem::exists(file)) {
            try {
                table = std::make_shared<const DeconvKernelTable>(read_table(file, spec));
            } catch (const IoError&) {
                table.reset();
            }
        }
    }
    if (!table) {
        table = std::make_shared<const DeconvKernelTable>(solve_deconv_kernel(spec, noise, h, options_));
        if (!file.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(dir_, ec);
            const std::string tmp = file + ".tmp";
            try {
                write_table(tmp, *table);
                std::filesystem::rename(tmp, file, ec);
            } catch (const IoError&) {
                // the disk cache is an optimisation only
            }
        }
    }
    tables_.emplace(k, table);
    return table;
}

std::size_t TableCache::size() const {
    std::lock_guard lock(mutex_);
    return tables_.size();
}

std::vector<std::shared_ptr<const DeconvKernelTable>> TableCache::tables() const {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<const DeconvKernelTable>> out;
    for (const auto& [k, t] : tables_) out.push_back(t);
    return out;
}

}  // namespace deconv
