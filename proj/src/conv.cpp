#include "dpssm/conv.hpp"

#include <stdexcept>

#include "dpssm/threading.hpp"

namespace dpssm {

Conv2dKernel Conv2dKernel::make(int c_out, int c_in, int k, int stride, bool same_pad) {
    if (same_pad && k % 2 == 0) throw std::invalid_argument("same padding requires odd kernel size");
    Conv2dKernel kernel;
    kernel.weights = Tensor({c_out, c_in, k, k});
    kernel.bias = Tensor({c_out});
    kernel.stride = stride;
    kernel.padding = same_pad ? (k - 1) / 2 : 0;
    return kernel;
}

void Conv2dKernel::validate() const {
    if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
        throw std::invalid_argument("conv kernel must be (C_out, C_in, k, k)");
    }
    if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
        throw std::invalid_argument("conv bias must be (C_out)");
    }
    if (stride < 1 || padding < 0) throw std::invalid_argument("bad conv stride/padding");
}

Tensor conv2d(const Tensor& input, const Conv2dKernel& kernel, int workers) {
    kernel.validate();
    if (input.rank() != 3) throw std::invalid_argument("conv2d input must be (C, H, W)");
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (c_in != kernel.in_channels()) {
        throw std::invalid_argument("conv2d channel mismatch: input " + input.shape_str());
    }
    const int k = kernel.kernel_size(), p = kernel.padding, s = kernel.stride;
    const int h_out = (h + 2 * p - k) / s + 1;
    const int w_out = (w + 2 * p - k) / s + 1;
    if (h_out < 1 || w_out < 1) throw std::invalid_argument("conv2d output would be empty");

    const int c_out = kernel.out_channels();
    Tensor out({c_out, h_out, w_out});
    const double* in = input.data();
    const double* wt = kernel.weights.data();
    double* dst = out.data();

    parallel_for_chunks(static_cast<size_t>(c_out), workers, [&](size_t lo, size_t hi) {
        for (size_t co = lo; co < hi; ++co) {
            const double b = kernel.bias[co];
            for (int oy = 0; oy < h_out; ++oy) {
                for (int ox = 0; ox < w_out; ++ox) {
                    double acc = b;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* in_c = in + static_cast<size_t>(ci) * h * w;
                        const double* wt_c = wt + ((co * c_in + ci) * k) * k;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= h) continue;
                            const double* in_row = in_c + static_cast<size_t>(iy) * w;
                            const double* wt_row = wt_c + static_cast<size_t>(ky) * k;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * s - p + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += wt_row[kx] * in_row[ix];
                            }
                        }
                    }
                    dst[(co * h_out + oy) * w_out + ox] = acc;
                }
            }
        }
    });
    ensure_finite(out, "conv2d");
    return out;
}

Tensor global_avg_pool(const Tensor& input) {
    if (input.rank() != 3) throw std::invalid_argument("global_avg_pool input must be (C, H, W)");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h * w < 1) throw std::invalid_argument("global_avg_pool: empty spatial extent");
    Tensor out({c, 1, 1});
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const double* p = input.data() + static_cast<size_t>(ch) * h * w;
        for (int i = 0; i < h * w; ++i) s += p[i];
        out[static_cast<size_t>(ch)] = s * inv;
    }
    ensure_finite(out, "global_avg_pool");
    return out;
}

Tensor pixel_shuffle(const Tensor& input, int r) {
    if (input.rank() != 3) throw std::invalid_argument("pixel_shuffle input must be (C, H, W)");
    if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (c_in % (r * r) != 0) throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int c_out = c_in / (r * r);
    Tensor out({c_out, h * r, w * r});
    for (int c = 0; c < c_out; ++c) {
        for (int dh = 0; dh < r; ++dh) {
            for (int dw = 0; dw < r; ++dw) {
                const int src_c = c * r * r + dh * r + dw;
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        out.at(c, y * r + dh, x * r + dw) = input.at(src_c, y, x);
                    }
                }
            }
        }
    }
    return out;
}

Tensor pixel_unshuffle(const Tensor& input, int r) {
    if (input.rank() != 3) throw std::invalid_argument("pixel_unshuffle input must be (C, H, W)");
    if (r < 1) throw std::invalid_argument("pixel_unshuffle: r must be >= 1");
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % r != 0 || w % r != 0) {
        throw std::invalid_argument("pixel_unshuffle: spatial extents not divisible by r");
    }
    const int h_out = h / r, w_out = w / r;
    Tensor out({c_in * r * r, h_out, w_out});
    for (int c = 0; c < c_in; ++c) {
        for (int dh = 0; dh < r; ++dh) {
            for (int dw = 0; dw < r; ++dw) {
                const int dst_c = c * r * r + dh * r + dw;
                for (int y = 0; y < h_out; ++y) {
                    for (int x = 0; x < w_out; ++x) {
                        out.at(dst_c, y, x) = input.at(c, y * r + dh, x * r + dw);
                    }
                }
            }
        }
    }
    return out;
}

Tensor avg_pool2x2(const Tensor& input) {
    if (input.rank() != 3) throw std::invalid_argument("avg_pool2x2 input must be (C, H, W)");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("avg_pool2x2: extents must be even");
    Tensor out({c, h / 2, w / 2});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h / 2; ++y) {
            for (int x = 0; x < w / 2; ++x) {
                out.at(ch, y, x) = 0.25 * (input.at(ch, 2 * y, 2 * x) + input.at(ch, 2 * y, 2 * x + 1) +
                                           input.at(ch, 2 * y + 1, 2 * x) + input.at(ch, 2 * y + 1, 2 * x + 1));
            }
        }
    }
    return out;
}

}  // namespace dpssm
