#pragma once

#include <complex>
#include <vector>

#include "dpssm/tensor.hpp"

namespace dpssm {

// Unnormalized 2-d spectrum, row-major (H, W) bins.
struct Spectrum {
    int h = 0;
    int w = 0;
    std::vector<std::complex<double>> bins;

    std::complex<double>& at(int y, int x) { return bins[static_cast<size_t>(y) * w + x]; }
    std::complex<double> at(int y, int x) const { return bins[static_cast<size_t>(y) * w + x]; }
};

bool is_power_of_two(int n);

// Unnormalized forward DFT of a real (H, W) tensor, computed separably:
// radix-2 FFT along power-of-two axes, direct O(n^2) summation otherwise.
Spectrum dft2(const Tensor& input);

// Direct-summation forward DFT over both axes at once. Reference path for
// the FFT/naive agreement property; O((HW)^2).
Spectrum dft2_naive(const Tensor& input);

// Adjoint of the unnormalized forward DFT restricted to real inputs:
// out[x] = Re(sum_k g[k] * e^{+2*pi*i*<k,x>/N}). Used by the frequency-loss gradient.
Tensor dft2_adjoint_real(const Spectrum& g);

// In-place 1-d transforms used by both paths (exposed for tests).
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse);
void dft_naive(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace dpssm
