#pragma once

#include <vector>

#include "dpssm/tensor.hpp"

namespace dpssm {

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double lambda3 = 0.001;
};

struct LossTerms {
    double l1 = 0.0;
    double l2 = 0.0;
    double l_fft = 0.0;
    double total = 0.0;
};

// total = lambda1*L1 + lambda2*L2 + lambda3*L_fft, with L_fft the mean over
// channels and bins of |DFT(target) - DFT(pred)| (complex modulus).
// Inputs are (C, H, W) or (H, W) tensors of equal shape.
LossTerms total_loss(const Tensor& target, const Tensor& pred, const LossConfig& cfg = {});

// Analytic d(total)/d(pred), including the term through the DFT.
Tensor total_loss_grad(const Tensor& target, const Tensor& pred, const LossConfig& cfg = {});

// 10*log10(max_val^2 / MSE) over all channels jointly; capped at 100 dB.
double psnr(const Tensor& target, const Tensor& pred, double max_val = 1.0);

// Windowed SSIM: Gaussian 11x11 sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic
// range 1, valid windows only, mean over windows and channels. Requires
// H, W >= 11.
double ssim(const Tensor& a, const Tensor& b);

struct SpectrumGapBand {
    double freq_lo = 0.0;  // normalized radial frequency in [0, 1]
    double freq_hi = 0.0;
    double gap = 0.0;
    int bin_count = 0;
};

// Radially averaged |mean magnitude spectrum of a - mean magnitude spectrum
// of b| per normalized frequency band. Every bin lands in exactly one band.
std::vector<SpectrumGapBand> spectrum_gap(const Tensor& a, const Tensor& b, int n_bands = 16);

void write_spectrum_gap_csv(std::ostream& os, const std::vector<SpectrumGapBand>& bands);

}  // namespace dpssm
