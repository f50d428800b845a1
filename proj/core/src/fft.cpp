#include "fft.hpp"

#include <mutex>
#include <new>
#include <stdexcept>

namespace deconv::detail {
namespace {
std::mutex g_planner_mutex;  // the fftw planner is not thread safe
}

ComplexBuffer::ComplexBuffer(std::size_t n) : raw_(fftw_alloc_complex(n)), n_(n) {
    if (!raw_) throw std::bad_alloc();
}

ComplexBuffer::~ComplexBuffer() { fftw_free(raw_); }

void fft_inplace(ComplexBuffer& buf, const std::vector<std::size_t>& dims, int sign) {
    std::vector<int> n(dims.begin(), dims.end());
    std::size_t total = 1;
    for (auto v : dims) total *= v;
    if (total != buf.size()) throw std::logic_error("fft dims do not match buffer size");
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan;
    {
        std::lock_guard lock(g_planner_mutex);
        plan = fftw_plan_dft(static_cast<int>(n.size()), n.data(), p, p, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                             FFTW_ESTIMATE);
    }
    if (!plan) throw std::runtime_error("fftw planning failed");
    fftw_execute(plan);
    std::lock_guard lock(g_planner_mutex);
    fftw_destroy_plan(plan);
}

}  // namespace deconv::detail
