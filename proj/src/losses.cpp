#include "dpssm/losses.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dpssm/fft.hpp"

namespace dpssm {

namespace {

// Treat (H, W) as a single channel; (C, H, W) as C channels.
struct ChannelView {
    int channels, h, w;
};

ChannelView channel_view(const Tensor& t) {
    if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    throw std::invalid_argument("expected (H, W) or (C, H, W) tensor");
}

Tensor channel_slice(const Tensor& t, const ChannelView& v, int c) {
    Tensor out({v.h, v.w});
    const double* src = t.data() + static_cast<size_t>(c) * v.h * v.w;
    std::copy(src, src + static_cast<size_t>(v.h) * v.w, out.data());
    return out;
}

}  // namespace

LossTerms total_loss(const Tensor& target, const Tensor& pred, const LossConfig& cfg) {
    ensure_same_shape(target, pred, "total_loss");
    const ChannelView v = channel_view(target);
    const double n = static_cast<double>(target.size());

    LossTerms t;
    for (size_t i = 0; i < target.size(); ++i) {
        const double d = target[i] - pred[i];
        t.l1 += std::fabs(d);
        t.l2 += d * d;
    }
    t.l1 /= n;
    t.l2 /= n;

    for (int c = 0; c < v.channels; ++c) {
        const Spectrum so = dft2(channel_slice(target, v, c));
        const Spectrum sp = dft2(channel_slice(pred, v, c));
        for (size_t k = 0; k < so.bins.size(); ++k) t.l_fft += std::abs(so.bins[k] - sp.bins[k]);
    }
    t.l_fft /= n;

    t.total = cfg.lambda1 * t.l1 + cfg.lambda2 * t.l2 + cfg.lambda3 * t.l_fft;
    return t;
}

Tensor total_loss_grad(const Tensor& target, const Tensor& pred, const LossConfig& cfg) {
    ensure_same_shape(target, pred, "total_loss_grad");
    const ChannelView v = channel_view(target);
    const double n = static_cast<double>(target.size());

    Tensor grad = Tensor::zeros_like(pred);
    for (size_t i = 0; i < target.size(); ++i) {
        const double d = pred[i] - target[i];
        double g = cfg.lambda1 * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
        g += cfg.lambda2 * 2.0 * d / n;
        grad[i] = g;
    }

    // d/d(pred) of mean_k |DFT(target)_k - DFT(pred)_k|: the difference
    // spectrum E depends on pred through -DFT, so pull the per-bin phase
    // E_k/|E_k| back through the adjoint transform with a sign flip.
    for (int c = 0; c < v.channels; ++c) {
        const Tensor tc = channel_slice(target, v, c);
        const Tensor pc = channel_slice(pred, v, c);
        const Spectrum so = dft2(tc);
        const Spectrum sp = dft2(pc);
        Spectrum g;
        g.h = so.h;
        g.w = so.w;
        g.bins.resize(so.bins.size());
        for (size_t k = 0; k < so.bins.size(); ++k) {
            const std::complex<double> e = so.bins[k] - sp.bins[k];
            const double m = std::abs(e);
            g.bins[k] = m > 0.0 ? e / m : std::complex<double>(0.0, 0.0);
        }
        const Tensor back = dft2_adjoint_real(g);
        double* dst = grad.data() + static_cast<size_t>(c) * v.h * v.w;
        for (size_t i = 0; i < back.size(); ++i) dst[i] += -cfg.lambda3 * back[i] / n;
    }
    return grad;
}

double psnr(const Tensor& target, const Tensor& pred, double max_val) {
    ensure_same_shape(target, pred, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < target.size(); ++i) {
        const double d = target[i] - pred[i];
        mse += d * d;
    }
    mse /= static_cast<double>(target.size());
    if (mse <= 0.0) return 100.0;
    const double db = 10.0 * std::log10(max_val * max_val / mse);
    return db > 100.0 ? 100.0 : db;
}

namespace {

std::vector<double> gaussian_window11() {
    const int k = 11;
    const double sigma = 1.5;
    std::vector<double> w(static_cast<size_t>(k) * k);
    double sum = 0.0;
    for (int y = 0; y < k; ++y) {
        for (int x = 0; x < k; ++x) {
            const double dy = y - 5, dx = x - 5;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            w[static_cast<size_t>(y) * k + x] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    ensure_same_shape(a, b, "ssim");
    const ChannelView v = channel_view(a);
    if (v.h < 11 || v.w < 11) throw std::invalid_argument("ssim: image smaller than 11x11 window");

    static const std::vector<double> win = gaussian_window11();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const int k = 11;

    double acc = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < v.channels; ++c) {
        const double* pa = a.data() + static_cast<size_t>(c) * v.h * v.w;
        const double* pb = b.data() + static_cast<size_t>(c) * v.h * v.w;
        for (int oy = 0; oy + k <= v.h; ++oy) {
            for (int ox = 0; ox + k <= v.w; ++ox) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int wy = 0; wy < k; ++wy) {
                    for (int wx = 0; wx < k; ++wx) {
                        const double g = win[static_cast<size_t>(wy) * k + wx];
                        const double xv = pa[static_cast<size_t>(oy + wy) * v.w + (ox + wx)];
                        const double yv = pb[static_cast<size_t>(oy + wy) * v.w + (ox + wx)];
                        mx += g * xv;
                        my += g * yv;
                        sxx += g * xv * xv;
                        syy += g * yv * yv;
                        sxy += g * xv * yv;
                    }
                }
                const double vx = sxx - mx * mx;
                const double vy = syy - my * my;
                const double cov = sxy - mx * my;
                const double val = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                                   ((mx * mx + my * my + c1) * (vx + vy + c2));
                acc += val;
                ++count;
            }
        }
    }
    return acc / static_cast<double>(count);
}

std::vector<SpectrumGapBand> spectrum_gap(const Tensor& a, const Tensor& b, int n_bands) {
    ensure_same_shape(a, b, "spectrum_gap");
    if (n_bands < 1) throw std::invalid_argument("spectrum_gap: n_bands must be >= 1");
    const ChannelView v = channel_view(a);

    // Mean magnitude spectrum over channels.
    std::vector<double> sa(static_cast<size_t>(v.h) * v.w, 0.0), sb(sa.size(), 0.0);
    for (int c = 0; c < v.channels; ++c) {
        const Spectrum fa = dft2(channel_slice(a, v, c));
        const Spectrum fb = dft2(channel_slice(b, v, c));
        for (size_t k = 0; k < sa.size(); ++k) {
            sa[k] += std::abs(fa.bins[k]) / v.channels;
            sb[k] += std::abs(fb.bins[k]) / v.channels;
        }
    }

    std::vector<SpectrumGapBand> bands(static_cast<size_t>(n_bands));
    const double r_max = std::sqrt(0.5);
    for (int i = 0; i < n_bands; ++i) {
        bands[static_cast<size_t>(i)].freq_lo = static_cast<double>(i) / n_bands;
        bands[static_cast<size_t>(i)].freq_hi = static_cast<double>(i + 1) / n_bands;
    }
    for (int y = 0; y < v.h; ++y) {
        const double fy = (y <= v.h / 2 ? y : y - v.h) / static_cast<double>(v.h);
        for (int x = 0; x < v.w; ++x) {
            const double fx = (x <= v.w / 2 ? x : x - v.w) / static_cast<double>(v.w);
            const double r = std::sqrt(fy * fy + fx * fx) / r_max;
            int band = static_cast<int>(r * n_bands);
            if (band >= n_bands) band = n_bands - 1;
            auto& bd = bands[static_cast<size_t>(band)];
            bd.gap += std::fabs(sa[static_cast<size_t>(y) * v.w + x] - sb[static_cast<size_t>(y) * v.w + x]);
            bd.bin_count += 1;
        }
    }
    for (auto& bd : bands) {
        if (bd.bin_count > 0) bd.gap /= bd.bin_count;
    }
    return bands;
}

void write_spectrum_gap_csv(std::ostream& os, const std::vector<SpectrumGapBand>& bands) {
    os << "freq_lo,freq_hi,gap,bin_count\n";
    os.precision(12);
    for (const auto& b : bands) {
        os << b.freq_lo << "," << b.freq_hi << "," << b.gap << "," << b.bin_count << "\n";
    }
}

}  // namespace dpssm
