#pragma once

#include "dpssm/tensor.hpp"

namespace dpssm {

// Learned 2-d kernel. Cross-correlation semantics (no kernel flip), zero
// padding. "Same" mode requires odd k and sets padding = (k-1)/2.
struct Conv2dKernel {
    Tensor weights;  // (C_out, C_in, k, k)
    Tensor bias;     // (C_out)
    int stride = 1;
    int padding = 0;

    int out_channels() const { return weights.dim(0); }
    int in_channels() const { return weights.dim(1); }
    int kernel_size() const { return weights.dim(2); }

    static Conv2dKernel make(int c_out, int c_in, int k, int stride = 1, bool same_pad = true);
    void validate() const;
};

// input (C_in, H, W) -> (C_out, H', W') with H' = (H + 2p - k) / stride + 1.
// `workers` parallelizes over output channels; reduction order within a
// channel is fixed, so results do not depend on the worker count.
Tensor conv2d(const Tensor& input, const Conv2dKernel& kernel, int workers = 1);

// Per-channel arithmetic mean: (C, H, W) -> (C, 1, 1).
Tensor global_avg_pool(const Tensor& input);

// (C*r*r, H, W) -> (C, H*r, W*r); out[c, h*r+dh, w*r+dw] = in[c*r*r + dh*r + dw, h, w].
Tensor pixel_shuffle(const Tensor& input, int r);
// Exact inverse of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& input, int r);

// 2x2 mean pooling, stride 2 (spatial extents must be even).
Tensor avg_pool2x2(const Tensor& input);

}  // namespace dpssm
