#include "dpssm/degradation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dpssm/rng.hpp"
#include "json.hpp"

namespace dpssm {

namespace fs = std::filesystem;
using nlohmann::json;

DegradationSpec DegradationSpec::identity() { return DegradationSpec{}; }

void DegradationSpec::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("spec: alpha must be in (0,1]");
    if (ramp && !(alpha_hi > 0.0 && alpha_hi <= 1.0)) {
        throw std::invalid_argument("spec: alpha_hi must be in (0,1]");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("spec: beta must be in [0,1]");
    if (q_levels < 2 || q_levels > 256) throw std::invalid_argument("spec: q_levels must be in 2..256");
    if (noise_sigma < 0.0) throw std::invalid_argument("spec: noise_sigma must be >= 0");
    const Tensor k = blur_kernel();
    double s = 0.0;
    for (double v : k.vec()) s += v;
    if (std::fabs(s - 1.0) > 1e-9) throw std::invalid_argument("spec: blur kernel not normalized");
}

Tensor DegradationSpec::alpha_field(int h, int w) const {
    Tensor f({h, w});
    if (!ramp) {
        f.fill(alpha);
        return f;
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double t = ramp_axis == 0 ? (h > 1 ? static_cast<double>(y) / (h - 1) : 0.0)
                                            : (w > 1 ? static_cast<double>(x) / (w - 1) : 0.0);
            f.at(y, x) = alpha + (alpha_hi - alpha) * t;
        }
    }
    return f;
}

Tensor DegradationSpec::beta_field(int h, int w) const {
    return Tensor::full({h, w}, artifact == ArtifactKind::None ? 0.0 : beta);
}

Tensor DegradationSpec::gamma_field(int h, int w) const {
    Tensor f({h, w});
    if (artifact == ArtifactKind::None) return f;
    if (artifact == ArtifactKind::Haze) {
        f.fill(1.0);
        return f;
    }
    Rng rng(derive_seed(seed, 0x67616d6dULL));  // pattern stream
    if (artifact == ArtifactKind::Rain) {
        const double ang = artifact_angle * 3.14159265358979323846 / 180.0;
        const double dy = std::sin(ang), dx = std::cos(ang);
        for (int s = 0; s < artifact_count; ++s) {
            const double cy = rng.uniform(0.0, h - 1.0), cx = rng.uniform(0.0, w - 1.0);
            const int steps = std::max(2, static_cast<int>(artifact_length));
            for (int t = 0; t < steps; ++t) {
                const double p = t - 0.5 * (steps - 1);
                const int y = static_cast<int>(std::lround(cy + p * dy));
                const int x = static_cast<int>(std::lround(cx + p * dx));
                if (y >= 0 && y < h && x >= 0 && x < w) f.at(y, x) = 1.0;
            }
        }
    } else {  // Snow
        for (int s = 0; s < artifact_count; ++s) {
            const int cy = rng.uniform_int(0, h - 1), cx = rng.uniform_int(0, w - 1);
            const int r = std::max(1, static_cast<int>(std::lround(artifact_radius)));
            for (int y = std::max(0, cy - r); y <= std::min(h - 1, cy + r); ++y) {
                for (int x = std::max(0, cx - r); x <= std::min(w - 1, cx + r); ++x) {
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) f.at(y, x) = 1.0;
                }
            }
        }
    }
    return f;
}

Tensor DegradationSpec::blur_kernel() const {
    switch (blur) {
        case BlurKind::Delta: {
            Tensor k({1, 1});
            k[0] = 1.0;
            return k;
        }
        case BlurKind::Box: {
            const int s = blur_size | 1;  // force odd
            Tensor k = Tensor::full({s, s}, 1.0 / (static_cast<double>(s) * s));
            return k;
        }
        case BlurKind::Gaussian: {
            const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * blur_sigma)));
            const int s = 2 * radius + 1;
            Tensor k({s, s});
            double sum = 0.0;
            for (int y = 0; y < s; ++y) {
                for (int x = 0; x < s; ++x) {
                    const double dy = y - radius, dx = x - radius;
                    const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * blur_sigma * blur_sigma));
                    k.at(y, x) = v;
                    sum += v;
                }
            }
            for (double& v : k.vec()) v /= sum;
            return k;
        }
        case BlurKind::Motion: {
            const int radius = std::max(1, static_cast<int>(std::ceil(0.5 * motion_length)));
            const int s = 2 * radius + 1;
            Tensor k({s, s});
            const double ang = motion_angle * 3.14159265358979323846 / 180.0;
            const double dy = std::sin(ang), dx = std::cos(ang);
            const int taps = std::max(2, static_cast<int>(std::lround(motion_length)) * 4);
            for (int t = 0; t < taps; ++t) {
                const double p = (static_cast<double>(t) / (taps - 1) - 0.5) * (motion_length - 1.0);
                const double fy = radius + p * dy, fx = radius + p * dx;
                const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
                const double wy = fy - y0, wx = fx - x0;
                // Bilinear splat.
                for (int oy = 0; oy <= 1; ++oy) {
                    for (int ox = 0; ox <= 1; ++ox) {
                        const int y = y0 + oy, x = x0 + ox;
                        if (y < 0 || y >= s || x < 0 || x >= s) continue;
                        k.at(y, x) += (oy ? wy : 1.0 - wy) * (ox ? wx : 1.0 - wx);
                    }
                }
            }
            double sum = 0.0;
            for (double v : k.vec()) sum += v;
            for (double& v : k.vec()) v /= sum;
            return k;
        }
    }
    throw std::logic_error("unreachable blur kind");
}

Tensor correlate_reflect(const Tensor& channel, const Tensor& kernel) {
    if (channel.rank() != 2 || kernel.rank() != 2) {
        throw std::invalid_argument("correlate_reflect expects (H,W) and (k,k)");
    }
    const int h = channel.dim(0), w = channel.dim(1);
    const int kh = kernel.dim(0), kw = kernel.dim(1);
    const int ry = (kh - 1) / 2, rx = (kw - 1) / 2;
    // Edge-repeating reflection: index -1 -> 0, -2 -> 1, h -> h-1, ...
    auto mirror = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = mirror(y + ky - ry, h);
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = mirror(x + kx - rx, w);
                    acc += kernel.at(ky, kx) * channel.at(iy, ix);
                }
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

double quantize_value(double v, int q_levels) {
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    const double steps = static_cast<double>(q_levels - 1);
    return std::round(v * steps) / steps;
}

DegradeTrace degrade_traced(const Image& clean, const DegradationSpec& spec) {
    spec.validate();
    const int c = clean.channels(), h = clean.height(), w = clean.width();
    const Tensor alpha = spec.alpha_field(h, w);
    const Tensor beta = spec.beta_field(h, w);
    const Tensor gamma = spec.gamma_field(h, w);
    const Tensor kernel = spec.blur_kernel();

    DegradeTrace tr;
    tr.composite = Tensor({c, h, w});
    tr.blurred = Tensor({c, h, w});
    tr.quantized = Tensor({c, h, w});
    tr.noisy = Tensor({c, h, w});

    for (int ch = 0; ch < c; ++ch) {
        Tensor plane({h, w});
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                plane.at(y, x) = alpha.at(y, x) * clean.t.at(ch, y, x) + beta.at(y, x) * gamma.at(y, x);
            }
        }
        const Tensor blurred = correlate_reflect(plane, kernel);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                tr.composite.at(ch, y, x) = plane.at(y, x);
                tr.blurred.at(ch, y, x) = blurred.at(y, x);
                tr.quantized.at(ch, y, x) = quantize_value(blurred.at(y, x), spec.q_levels);
            }
        }
    }
    // Additive noise last, then the final clamp.
    Rng noise(derive_seed(spec.seed, 0x6e6f6973ULL));
    tr.noisy = tr.quantized;
    if (spec.noise_sigma > 0.0) {
        for (size_t i = 0; i < tr.noisy.size(); ++i) tr.noisy[i] += spec.noise_sigma * noise.normal();
    }
    tr.final_image = Image::from_tensor(tr.noisy);
    return tr;
}

Image degrade(const Image& clean, const DegradationSpec& spec) {
    return degrade_traced(clean, spec).final_image;
}

std::string classify_spec(const DegradationSpec& spec) {
    if (spec.noise_sigma > 0.0) return "noise";
    if (spec.q_levels < 256) return "jpeg";
    if (spec.blur != BlurKind::Delta) return "blur";
    if (spec.artifact == ArtifactKind::Rain) return "rain";
    if (spec.artifact == ArtifactKind::Snow) return "snow";
    if (spec.artifact == ArtifactKind::Haze) return "haze";
    if (spec.alpha < 1.0 || (spec.ramp && spec.alpha_hi < 1.0)) return "lowlight";
    return "identity";
}

std::vector<ClassRecipe> default_recipes() {
    std::vector<ClassRecipe> r;
    {
        ClassRecipe c;
        c.label = "lowlight";
        c.alpha_lo = 0.2;
        c.alpha_hi = 0.5;
        r.push_back(c);
    }
    {
        ClassRecipe c;
        c.label = "haze";
        c.artifact = ArtifactKind::Haze;
        c.beta_lo = 0.3;
        c.beta_hi = 0.6;
        r.push_back(c);
    }
    {
        ClassRecipe c;
        c.label = "rain";
        c.artifact = ArtifactKind::Rain;
        c.beta_lo = 0.4;
        c.beta_hi = 0.8;
        r.push_back(c);
    }
    {
        ClassRecipe c;
        c.label = "snow";
        c.artifact = ArtifactKind::Snow;
        c.beta_lo = 0.4;
        c.beta_hi = 0.8;
        r.push_back(c);
    }
    {
        ClassRecipe c;
        c.label = "blur";
        c.blur = BlurKind::Gaussian;
        c.blur_lo = 1.0;
        c.blur_hi = 2.5;
        r.push_back(c);
    }
    {
        ClassRecipe c;
        c.label = "noise";
        c.noise_lo = 0.05;
        c.noise_hi = 0.2;
        r.push_back(c);
    }
    {
        ClassRecipe c;
        c.label = "jpeg";
        c.q_lo = 8;
        c.q_hi = 32;
        r.push_back(c);
    }
    return r;
}

ClassRecipe recipe_for(const std::string& label) {
    for (const auto& r : default_recipes()) {
        if (r.label == label) return r;
    }
    throw std::invalid_argument("unknown degradation class: " + label);
}

DegradationSpec sample_spec(const ClassRecipe& recipe, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x72656369ULL));
    DegradationSpec s;
    s.label = recipe.label;
    s.seed = seed;
    s.alpha = rng.uniform(recipe.alpha_lo, recipe.alpha_hi);
    s.artifact = recipe.artifact;
    if (recipe.artifact != ArtifactKind::None) {
        s.beta = rng.uniform(recipe.beta_lo, recipe.beta_hi);
        if (recipe.artifact == ArtifactKind::Haze) {
            // Transmission-style veil: dim the scene by the veil weight.
            s.alpha = 1.0 - s.beta;
        } else if (recipe.artifact == ArtifactKind::Rain) {
            s.artifact_count = rng.uniform_int(8, 24);
            s.artifact_angle = rng.uniform(55.0, 115.0);
            s.artifact_length = rng.uniform(6.0, 14.0);
        } else {
            s.artifact_count = rng.uniform_int(10, 30);
            s.artifact_radius = rng.uniform(1.0, 2.5);
        }
    }
    s.blur = recipe.blur;
    if (recipe.blur == BlurKind::Gaussian) {
        s.blur_sigma = rng.uniform(recipe.blur_lo, recipe.blur_hi);
    } else if (recipe.blur == BlurKind::Motion) {
        s.motion_length = rng.uniform(recipe.blur_lo, recipe.blur_hi);
        s.motion_angle = rng.uniform(0.0, 180.0);
    } else if (recipe.blur == BlurKind::Box) {
        s.blur_size = 1 + 2 * rng.uniform_int(1, std::max(1, static_cast<int>(recipe.blur_hi) / 2));
    }
    if (recipe.q_lo < 256) s.q_levels = rng.uniform_int(recipe.q_lo, recipe.q_hi);
    if (recipe.noise_hi > 0.0) s.noise_sigma = rng.uniform(recipe.noise_lo, recipe.noise_hi);
    return s;
}

std::vector<LabeledSample> make_corpus(const std::vector<Image>& clean_images,
                                       const std::vector<ClassRecipe>& recipes, int count,
                                       std::uint64_t seed) {
    if (clean_images.empty()) throw std::invalid_argument("make_corpus: no clean images");
    if (recipes.empty()) throw std::invalid_argument("make_corpus: no class recipes");
    std::vector<LabeledSample> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t si = derive_seed(seed, static_cast<std::uint64_t>(i));
        const ClassRecipe& recipe = recipes[static_cast<size_t>(i) % recipes.size()];
        Rng pick(derive_seed(si, 0x70696b63ULL));
        LabeledSample s;
        s.clean = clean_images[static_cast<size_t>(pick.uniform_int(0, static_cast<int>(clean_images.size()) - 1))];
        s.spec = sample_spec(recipe, si);
        s.degraded = degrade(s.clean, s.spec);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

const char* blur_name(BlurKind k) {
    switch (k) {
        case BlurKind::Delta: return "delta";
        case BlurKind::Box: return "box";
        case BlurKind::Gaussian: return "gaussian";
        case BlurKind::Motion: return "motion";
    }
    return "delta";
}
BlurKind blur_from(const std::string& s) {
    if (s == "delta") return BlurKind::Delta;
    if (s == "box") return BlurKind::Box;
    if (s == "gaussian") return BlurKind::Gaussian;
    if (s == "motion") return BlurKind::Motion;
    throw std::invalid_argument("unknown blur kind: " + s);
}
const char* artifact_name(ArtifactKind k) {
    switch (k) {
        case ArtifactKind::None: return "none";
        case ArtifactKind::Haze: return "haze";
        case ArtifactKind::Rain: return "rain";
        case ArtifactKind::Snow: return "snow";
    }
    return "none";
}
ArtifactKind artifact_from(const std::string& s) {
    if (s == "none") return ArtifactKind::None;
    if (s == "haze") return ArtifactKind::Haze;
    if (s == "rain") return ArtifactKind::Rain;
    if (s == "snow") return ArtifactKind::Snow;
    throw std::invalid_argument("unknown artifact kind: " + s);
}

}  // namespace

std::string DegradationSpec::to_json() const {
    json j;
    j["label"] = label;
    j["seed"] = seed;
    j["illumination"] = {{"alpha", alpha}, {"alpha_hi", alpha_hi}, {"ramp", ramp}, {"ramp_axis", ramp_axis}};
    j["artifact"] = {{"kind", artifact_name(artifact)}, {"beta", beta},      {"count", artifact_count},
                     {"angle_deg", artifact_angle},     {"length", artifact_length},
                     {"radius", artifact_radius}};
    j["blur"] = {{"kind", blur_name(blur)},    {"size", blur_size},          {"sigma", blur_sigma},
                 {"length", motion_length},    {"angle_deg", motion_angle}};
    j["q_levels"] = q_levels;
    j["noise_sigma"] = noise_sigma;
    return j.dump(2);
}

DegradationSpec DegradationSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    DegradationSpec s;
    s.label = j.at("label").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& il = j.at("illumination");
    s.alpha = il.at("alpha").get<double>();
    s.alpha_hi = il.at("alpha_hi").get<double>();
    s.ramp = il.at("ramp").get<bool>();
    s.ramp_axis = il.at("ramp_axis").get<int>();
    const auto& ar = j.at("artifact");
    s.artifact = artifact_from(ar.at("kind").get<std::string>());
    s.beta = ar.at("beta").get<double>();
    s.artifact_count = ar.at("count").get<int>();
    s.artifact_angle = ar.at("angle_deg").get<double>();
    s.artifact_length = ar.at("length").get<double>();
    s.artifact_radius = ar.at("radius").get<double>();
    const auto& bl = j.at("blur");
    s.blur = blur_from(bl.at("kind").get<std::string>());
    s.blur_size = bl.at("size").get<int>();
    s.blur_sigma = bl.at("sigma").get<double>();
    s.motion_length = bl.at("length").get<double>();
    s.motion_angle = bl.at("angle_deg").get<double>();
    s.q_levels = j.at("q_levels").get<int>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    return s;
}

void write_corpus(const std::string& dir, const std::vector<LabeledSample>& corpus) {
    fs::create_directories(dir);
    json manifest;
    manifest["samples"] = json::array();
    char name[64];
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& s = corpus[i];
        std::snprintf(name, sizeof(name), "%04zu", i);
        const std::string base(name);
        write_pnm(dir + "/" + base + "_clean.ppm", s.clean);
        write_pnm(dir + "/" + base + "_degraded.ppm", s.degraded);
        std::ofstream spec_f(dir + "/" + base + "_spec.json");
        spec_f << s.spec.to_json() << "\n";
        manifest["samples"].push_back({{"id", base},
                                       {"label", s.spec.label},
                                       {"clean", base + "_clean.ppm"},
                                       {"degraded", base + "_degraded.ppm"},
                                       {"spec", base + "_spec.json"}});
    }
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
}

std::vector<LabeledSample> read_corpus(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot read manifest in " + dir);
    json manifest;
    mf >> manifest;
    std::vector<LabeledSample> out;
    for (const auto& e : manifest.at("samples")) {
        LabeledSample s;
        s.clean = read_pnm(dir + "/" + e.at("clean").get<std::string>());
        s.degraded = read_pnm(dir + "/" + e.at("degraded").get<std::string>());
        std::ifstream sf(dir + "/" + e.at("spec").get<std::string>());
        std::stringstream ss;
        ss << sf.rdbuf();
        s.spec = DegradationSpec::from_json(ss.str());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace dpssm
