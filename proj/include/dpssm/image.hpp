#pragma once

#include <iosfwd>
#include <string>

#include "dpssm/tensor.hpp"

namespace dpssm {

// Image = (C, H, W) tensor with C in {1, 3} and values in [0, 1].
// Values are clamped on ingest; out-of-range data never survives construction.
struct Image {
    Tensor t;

    Image() = default;
    static Image from_tensor(Tensor tensor);  // clamps to [0, 1]
    static Image zeros(int c, int h, int w);

    int channels() const { return t.dim(0); }
    int height() const { return t.dim(1); }
    int width() const { return t.dim(2); }
};

Tensor clamp01(const Tensor& t);

// Binary PPM (P6) for 3-channel, PGM (P5) for 1-channel, 8-bit, maxval 255.
void write_pnm(const std::string& path, const Image& img);
Image read_pnm(const std::string& path);

// Procedural clean test image: smooth low-frequency field plus a few shapes.
Image synth_clean_image(std::uint64_t seed, int c, int h, int w);

}  // namespace dpssm
