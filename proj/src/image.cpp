#include "dpssm/image.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "dpssm/rng.hpp"

namespace dpssm {

Tensor clamp01(const Tensor& t) {
    Tensor out = t;
    for (size_t i = 0; i < out.size(); ++i) {
        double v = out[i];
        out[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

Image Image::from_tensor(Tensor tensor) {
    if (tensor.rank() != 3) throw std::invalid_argument("image must be (C, H, W)");
    const int c = tensor.dim(0);
    if (c != 1 && c != 3) throw std::invalid_argument("image channels must be 1 or 3");
    ensure_finite(tensor, "image ingest");
    Image img;
    img.t = clamp01(tensor);
    return img;
}

Image Image::zeros(int c, int h, int w) {
    Image img;
    img.t = Tensor({c, h, w});
    return img;
}

void write_pnm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    const int c = img.channels(), h = img.height(), w = img.width();
    f << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double v = img.t.at(ch, y, x);
                int q = static_cast<int>(std::lround(v * 255.0));
                q = q < 0 ? 0 : (q > 255 ? 255 : q);
                row[static_cast<size_t>(x) * c + ch] = static_cast<unsigned char>(q);
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {
int read_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments per the PNM grammar.
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = in.get();
        }
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (c >= '0' && c <= '9') {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw std::runtime_error("malformed PNM header");
    return value;
}
}  // namespace

Image read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    int channels = 0;
    if (m0 == 'P' && m1 == '6') channels = 3;
    else if (m0 == 'P' && m1 == '5') channels = 1;
    else throw std::runtime_error("unsupported PNM magic in " + path);
    const int w = read_pnm_token(f);
    const int h = read_pnm_token(f);
    const int maxval = read_pnm_token(f);
    if (maxval != 255) throw std::runtime_error("only 8-bit PNM supported: " + path);
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw std::runtime_error("truncated PNM data: " + path);
    }
    Tensor t({channels, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < channels; ++ch) {
                t.at(ch, y, x) = raw[(static_cast<size_t>(y) * w + x) * channels + ch] / 255.0;
            }
        }
    }
    return Image::from_tensor(std::move(t));
}

Image synth_clean_image(std::uint64_t seed, int c, int h, int w) {
    Rng rng(splitmix64(seed));
    Tensor t({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        const double fy = rng.uniform(0.5, 2.5), fx = rng.uniform(0.5, 2.5);
        const double py = rng.uniform(0.0, 6.28), px = rng.uniform(0.0, 6.28);
        const double base = rng.uniform(0.3, 0.7);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double v = base + 0.25 * std::sin(fy * 6.283185307179586 * y / h + py) *
                                      std::cos(fx * 6.283185307179586 * x / w + px);
                t.at(ch, y, x) = v;
            }
        }
    }
    // A few solid rectangles and disks shared across channels for structure.
    const int n_shapes = 3 + rng.uniform_int(0, 3);
    for (int s = 0; s < n_shapes; ++s) {
        const bool disk = rng.uniform01() < 0.5;
        const int cy = rng.uniform_int(0, h - 1), cx = rng.uniform_int(0, w - 1);
        const int rr = 1 + rng.uniform_int(1, std::max(2, std::min(h, w) / 6));
        const double lum = rng.uniform(0.05, 0.95);
        for (int y = std::max(0, cy - rr); y <= std::min(h - 1, cy + rr); ++y) {
            for (int x = std::max(0, cx - rr); x <= std::min(w - 1, cx + rr); ++x) {
                if (disk && (y - cy) * (y - cy) + (x - cx) * (x - cx) > rr * rr) continue;
                for (int ch = 0; ch < c; ++ch) t.at(ch, y, x) = lum;
            }
        }
    }
    return Image::from_tensor(std::move(t));
}

}  // namespace dpssm
