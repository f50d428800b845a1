#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <vector>

namespace deconv::detail {

// fftw-aligned complex array
class ComplexBuffer {
public:
    explicit ComplexBuffer(std::size_t n);
    ~ComplexBuffer();
    ComplexBuffer(const ComplexBuffer&) = delete;
    ComplexBuffer& operator=(const ComplexBuffer&) = delete;

    std::complex<double>& operator[](std::size_t i) { return data()[i]; }
    const std::complex<double>& operator[](std::size_t i) const { return data()[i]; }
    std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(raw_); }
    const std::complex<double>* data() const { return reinterpret_cast<const std::complex<double>*>(raw_); }
    std::size_t size() const { return n_; }

private:
    fftw_complex* raw_;
    std::size_t n_;
};

// Unnormalized in-place multidimensional DFT, row-major dims.
// sign = -1: sum x_k e^{-2 pi i qk/N}; sign = +1: sum x_k e^{+2 pi i qk/N}.
void fft_inplace(ComplexBuffer& buf, const std::vector<std::size_t>& dims, int sign);

}  // namespace deconv::detail
