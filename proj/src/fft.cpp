#include "dpssm/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace dpssm {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (!is_power_of_two(static_cast<int>(n))) throw std::invalid_argument("fft_radix2: length not 2^k");
    // Bit-reversal permutation.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void dft_naive(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    std::vector<std::complex<double>> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (size_t x = 0; x < n; ++x) {
            const double ang = sign * kTwoPi * static_cast<double>(k * x % n) / static_cast<double>(n);
            acc += a[x] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    a = std::move(out);
}

namespace {

void transform_1d(std::vector<std::complex<double>>& a, bool inverse) {
    if (a.size() == 1) return;
    if (is_power_of_two(static_cast<int>(a.size()))) {
        fft_radix2(a, inverse);
    } else {
        dft_naive(a, inverse);
    }
}

// Row transforms followed by column transforms.
void transform_2d(Spectrum& s, bool inverse) {
    std::vector<std::complex<double>> line;
    line.resize(static_cast<size_t>(s.w));
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) line[static_cast<size_t>(x)] = s.at(y, x);
        transform_1d(line, inverse);
        for (int x = 0; x < s.w; ++x) s.at(y, x) = line[static_cast<size_t>(x)];
    }
    line.resize(static_cast<size_t>(s.h));
    for (int x = 0; x < s.w; ++x) {
        for (int y = 0; y < s.h; ++y) line[static_cast<size_t>(y)] = s.at(y, x);
        transform_1d(line, inverse);
        for (int y = 0; y < s.h; ++y) s.at(y, x) = line[static_cast<size_t>(y)];
    }
}

Spectrum spectrum_from_real(const Tensor& input) {
    if (input.rank() != 2) throw std::invalid_argument("dft2 input must be (H, W)");
    Spectrum s;
    s.h = input.dim(0);
    s.w = input.dim(1);
    s.bins.resize(input.size());
    for (size_t i = 0; i < input.size(); ++i) s.bins[i] = std::complex<double>(input[i], 0.0);
    return s;
}

}  // namespace

Spectrum dft2(const Tensor& input) {
    Spectrum s = spectrum_from_real(input);
    transform_2d(s, false);
    for (const auto& b : s.bins) {
        if (!std::isfinite(b.real()) || !std::isfinite(b.imag())) {
            throw std::runtime_error("dft2: non-finite spectrum");
        }
    }
    return s;
}

Spectrum dft2_naive(const Tensor& input) {
    Spectrum in = spectrum_from_real(input);
    Spectrum out = in;
    for (int ky = 0; ky < in.h; ++ky) {
        for (int kx = 0; kx < in.w; ++kx) {
            std::complex<double> acc(0.0, 0.0);
            for (int y = 0; y < in.h; ++y) {
                for (int x = 0; x < in.w; ++x) {
                    const double ang = -kTwoPi * (static_cast<double>(ky) * y / in.h +
                                                  static_cast<double>(kx) * x / in.w);
                    acc += in.at(y, x) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            }
            out.at(ky, kx) = acc;
        }
    }
    return out;
}

Tensor dft2_adjoint_real(const Spectrum& g) {
    // out = Re(W^H g) where W is the unnormalized forward DFT matrix. W^H is
    // the transform with the opposite twiddle sign and no 1/N factor, which is
    // exactly transform_2d with inverse = true.
    Spectrum s = g;
    transform_2d(s, true);
    Tensor out({s.h, s.w});
    for (size_t i = 0; i < out.size(); ++i) out[i] = s.bins[i].real();
    return out;
}

}  // namespace dpssm
