#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dirl/image_io.hpp"
#include "dirl/rng.hpp"
#include "dirl/tensor.hpp"

namespace dirl {

// Desk-scale stand-in for a composite-image dataset: synthetic textured
// backgrounds whose foreground region gets a color/lighting perturbation.
// Foregrounds cover at most half the image, so the perturbed region is always
// the minority region; samples outside the area bounds or below the
// visibility floor are resampled, never emitted. All pixel values live on the
// 1/255 grid, which makes raster round-trips exact.

struct PerturbMeta {
    std::string kind;             // brightness | contrast | hue_rotate | channel_affine | gamma
    std::uint64_t bg_seed = 0;    // regenerates the clean background
    std::vector<double> params;
};

template <class T>
struct CompositeSample {
    Tensor<T> image;  // (1,3,H,W)
    Tensor<T> mask;   // (1,1,H,W), binary
    PerturbMeta meta;
    double foreground_area_fraction = 0;
};

struct DatagenOptions {
    double area_min = 0.02;
    double area_max = 0.5;
    double min_visibility = 0.05;  // mean |composite - background| inside mask
};

namespace datagen_detail {

inline double quantize(double v) {
    const double x = std::clamp(v, 0.0, 1.0) * 255.0;
    return std::floor(x + 0.5) / 255.0;
}

// Bilinearly upsampled random lattice in [-1,1].
inline std::vector<double> value_noise(Rng& rng, std::int64_t h, std::int64_t w, std::int64_t res) {
    std::vector<double> lattice(static_cast<std::size_t>((res + 1) * (res + 1)));
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y) {
        const double fy = static_cast<double>(y) / static_cast<double>(h) * static_cast<double>(res);
        const std::int64_t y0 = static_cast<std::int64_t>(fy);
        const double ty = fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / static_cast<double>(w) * static_cast<double>(res);
            const std::int64_t x0 = static_cast<std::int64_t>(fx);
            const double tx = fx - static_cast<double>(x0);
            const auto at = [&](std::int64_t yy, std::int64_t xx) {
                return lattice[static_cast<std::size_t>(yy * (res + 1) + xx)];
            };
            out[static_cast<std::size_t>(y * w + x)] =
                (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
        }
    }
    return out;
}

}  // namespace datagen_detail

// Textured background: per-channel base tone + oriented ramp + three octaves
// of value noise, clamped and quantized. Deterministic in bg_seed.
template <class T>
Tensor<T> synthesize_background(std::uint64_t bg_seed, std::int64_t h, std::int64_t w) {
    Rng rng(bg_seed);
    Tensor<T> img(Shape{1, 3, h, w});
    const double ramp_angle = rng.uniform(0.0, 6.283185307179586);
    const double gx = std::cos(ramp_angle), gy = std::sin(ramp_angle);
    for (std::int64_t c = 0; c < 3; ++c) {
        const double base = rng.uniform(0.25, 0.7);
        const double ramp_amp = rng.uniform(-0.25, 0.25);
        const auto n1 = datagen_detail::value_noise(rng, h, w, 4);
        const auto n2 = datagen_detail::value_noise(rng, h, w, 8);
        const auto n3 = datagen_detail::value_noise(rng, h, w, 16);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double u = static_cast<double>(x) / static_cast<double>(w - 1);
                const double v = static_cast<double>(y) / static_cast<double>(h - 1);
                const std::size_t i = static_cast<std::size_t>(y * w + x);
                double val = base + ramp_amp * (gx * u + gy * v) + 0.18 * n1[i] + 0.1 * n2[i] + 0.05 * n3[i];
                img.at(0, c, y, x) = static_cast<T>(datagen_detail::quantize(std::clamp(val, 0.05, 0.95)));
            }
    }
    return img;
}

namespace datagen_detail {

template <class T>
double mask_area(const Tensor<T>& mask) {
    double pos = 0;
    for (std::int64_t i = 0; i < mask.numel(); ++i) pos += mask[i] == T(1);
    return pos / static_cast<double>(mask.numel());
}

template <class T>
Tensor<T> ellipse_mask(Rng& rng, std::int64_t h, std::int64_t w, double target_area) {
    Tensor<T> mask(Shape{1, 1, h, w});
    const double cx = rng.uniform(0.3, 0.7) * static_cast<double>(w);
    const double cy = rng.uniform(0.3, 0.7) * static_cast<double>(h);
    const double aspect = rng.uniform(0.45, 1.0);
    const double area_px = target_area * static_cast<double>(h * w);
    const double ra = std::sqrt(area_px / (3.14159265358979 * aspect));
    const double rb = aspect * ra;
    const double theta = rng.uniform(0.0, 3.14159265358979);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double ex = (ct * dx + st * dy) / ra;
            const double ey = (-st * dx + ct * dy) / rb;
            if (ex * ex + ey * ey <= 1.0) mask.at(0, 0, y, x) = T(1);
        }
    return mask;
}

template <class T>
Tensor<T> polygon_mask(Rng& rng, std::int64_t h, std::int64_t w, double target_area) {
    const std::int64_t nv = rng.uniform_int(5, 9);
    const double cx = rng.uniform(0.35, 0.65) * static_cast<double>(w);
    const double cy = rng.uniform(0.35, 0.65) * static_cast<double>(h);
    const double base_r = std::sqrt(target_area * static_cast<double>(h * w) / 3.14159265358979);
    std::vector<double> vx(static_cast<std::size_t>(nv)), vy(static_cast<std::size_t>(nv));
    for (std::int64_t i = 0; i < nv; ++i) {
        const double ang = 6.283185307179586 * (static_cast<double>(i) + rng.uniform(-0.3, 0.3)) /
                           static_cast<double>(nv);
        const double r = base_r * rng.uniform(0.6, 1.35);
        vx[static_cast<std::size_t>(i)] = cx + r * std::cos(ang);
        vy[static_cast<std::size_t>(i)] = cy + r * std::sin(ang);
    }
    Tensor<T> mask(Shape{1, 1, h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double px = static_cast<double>(x) + 0.5;
            const double py = static_cast<double>(y) + 0.5;
            bool inside = false;  // even-odd ray crossing
            for (std::int64_t i = 0, j = nv - 1; i < nv; j = i++) {
                const double xi = vx[static_cast<std::size_t>(i)], yi = vy[static_cast<std::size_t>(i)];
                const double xj = vx[static_cast<std::size_t>(j)], yj = vy[static_cast<std::size_t>(j)];
                if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
            }
            if (inside) mask.at(0, 0, y, x) = T(1);
        }
    return mask;
}

template <class T>
Tensor<T> blob_mask(Rng& rng, std::int64_t h, std::int64_t w, double target_area) {
    const auto n1 = value_noise(rng, h, w, 5);
    const auto n2 = value_noise(rng, h, w, 11);
    std::vector<double> field(static_cast<std::size_t>(h * w));
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = n1[i] + 0.5 * n2[i];
    // Threshold at the target quantile so the area lands on target.
    std::vector<double> sorted = field;
    const auto kth = static_cast<std::size_t>((1.0 - target_area) * static_cast<double>(sorted.size()));
    const std::size_t idx = std::min(kth, sorted.size() - 1);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx), sorted.end());
    const double threshold = sorted[idx];
    Tensor<T> mask(Shape{1, 1, h, w});
    for (std::int64_t i = 0; i < h * w; ++i)
        if (field[static_cast<std::size_t>(i)] > threshold) mask[i] = T(1);
    return mask;
}

// RGB hue rotation about the gray axis; rows sum to 1 so grays are fixed.
inline std::array<double, 9> hue_matrix(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double a = c + (1.0 - c) / 3.0;
    const double b = (1.0 - c) / 3.0 - s * 0.57735026918962576;
    const double d = (1.0 - c) / 3.0 + s * 0.57735026918962576;
    return {a, b, d, d, a, b, b, d, a};
}

inline std::array<double, 3> perturb_pixel(const std::string& kind, const std::vector<double>& p,
                                           const std::array<double, 3>& rgb) {
    std::array<double, 3> out = rgb;
    if (kind == "brightness") {
        for (auto& v : out) v *= p[0];
    } else if (kind == "contrast") {
        for (auto& v : out) v = (v - 0.5) * p[0] + 0.5;
    } else if (kind == "hue_rotate") {
        const auto m = hue_matrix(p[0]);
        for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] =
            m[static_cast<std::size_t>(3 * i)] * rgb[0] + m[static_cast<std::size_t>(3 * i + 1)] * rgb[1] +
            m[static_cast<std::size_t>(3 * i + 2)] * rgb[2];
    } else if (kind == "channel_affine") {
        for (int i = 0; i < 3; ++i)
            out[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(2 * i)] * rgb[static_cast<std::size_t>(i)] +
                                               p[static_cast<std::size_t>(2 * i + 1)];
    } else if (kind == "gamma") {
        for (auto& v : out) v = std::pow(std::max(v, 0.0), p[0]);
    } else {
        throw FormatError("unknown perturbation kind '" + kind + "'");
    }
    return out;
}

inline std::pair<std::string, std::vector<double>> sample_perturbation(Rng& rng) {
    switch (rng.uniform_int(0, 4)) {
        case 0: return {"brightness", {rng.uniform(0.0, 1.0) < 0.5 ? rng.uniform(1.3, 1.9) : rng.uniform(0.4, 0.75)}};
        case 1: return {"contrast", {rng.uniform(0.0, 1.0) < 0.5 ? rng.uniform(1.7, 2.5) : rng.uniform(0.3, 0.6)}};
        case 2: {
            const double mag = rng.uniform(0.9, 2.6);
            return {"hue_rotate", {rng.uniform(0.0, 1.0) < 0.5 ? mag : -mag}};
        }
        case 3: {
            std::vector<double> p;
            for (int c = 0; c < 3; ++c) {
                p.push_back(rng.uniform(0.55, 1.45));
                p.push_back(rng.uniform(-0.22, 0.22));
            }
            return {"channel_affine", p};
        }
        default: return {"gamma", {rng.uniform(0.0, 1.0) < 0.5 ? rng.uniform(1.8, 3.0) : rng.uniform(0.3, 0.55)}};
    }
}

}  // namespace datagen_detail

// Applies the stored perturbation inside the mask; outside pixels are copied
// bit-for-bit from the background.
template <class T>
Tensor<T> apply_perturbation(const Tensor<T>& bg, const Tensor<T>& mask, const PerturbMeta& meta) {
    check_same_shape(Tensor<T>(Shape{1, 1, bg.shape().h, bg.shape().w}), mask, "apply_perturbation mask");
    Tensor<T> img = bg;
    const Shape& s = bg.shape();
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            if (mask.at(0, 0, y, x) != T(1)) continue;
            const std::array<double, 3> rgb{static_cast<double>(bg.at(0, 0, y, x)),
                                            static_cast<double>(bg.at(0, 1, y, x)),
                                            static_cast<double>(bg.at(0, 2, y, x))};
            const auto out = datagen_detail::perturb_pixel(meta.kind, meta.params, rgb);
            for (int c = 0; c < 3; ++c)
                img.at(0, c, y, x) = static_cast<T>(datagen_detail::quantize(out[static_cast<std::size_t>(c)]));
        }
    return img;
}

template <class T>
double mean_abs_diff_inside(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& mask) {
    double acc = 0;
    std::int64_t count = 0;
    const Shape& s = a.shape();
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            if (mask.at(0, 0, y, x) != T(1)) continue;
            ++count;
            for (std::int64_t c = 0; c < 3; ++c)
                acc += std::abs(static_cast<double>(a.at(0, c, y, x)) - static_cast<double>(b.at(0, c, y, x)));
        }
    return count == 0 ? 0.0 : acc / (3.0 * static_cast<double>(count));
}

template <class T>
std::vector<CompositeSample<T>> generate(std::uint64_t seed, std::int64_t count, std::int64_t h, std::int64_t w,
                                         const DatagenOptions& opt = {}) {
    if (count < 1) throw InvalidConfig("count must be >= 1");
    if (h < 8 || w < 8) throw InvalidConfig("size must be at least 8x8");
    if (!(opt.area_min > 0) || !(opt.area_min < opt.area_max))
        throw InvalidConfig("need 0 < area_min < area_max");
    if (opt.area_max > 0.5) throw InvalidConfig("area_max must not exceed 0.5");

    Rng root(seed);
    std::vector<CompositeSample<T>> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        Rng rng = root.fork(static_cast<std::uint64_t>(i));
        for (int attempt = 0;; ++attempt) {
            if (attempt > 4096) throw InvalidConfig("area bounds too tight to satisfy");
            const std::uint64_t bg_seed = rng.next_u64();
            Tensor<T> bg = synthesize_background<T>(bg_seed, h, w);
            // Aim slightly below the upper bound; the rasterized area scatters
            // around the target and rejection enforces the hard bounds.
            const double target = rng.uniform(opt.area_min, opt.area_min + 0.92 * (opt.area_max - opt.area_min));
            Tensor<T> mask;
            switch (rng.uniform_int(0, 2)) {
                case 0: mask = datagen_detail::ellipse_mask<T>(rng, h, w, target); break;
                case 1: mask = datagen_detail::polygon_mask<T>(rng, h, w, target); break;
                default: mask = datagen_detail::blob_mask<T>(rng, h, w, target); break;
            }
            const double area = datagen_detail::mask_area(mask);
            if (area < opt.area_min || area > opt.area_max) continue;
            auto [kind, params] = datagen_detail::sample_perturbation(rng);
            PerturbMeta meta{kind, bg_seed, params};
            Tensor<T> img = apply_perturbation(bg, mask, meta);
            if (mean_abs_diff_inside(img, bg, mask) < opt.min_visibility) continue;
            samples.push_back(CompositeSample<T>{std::move(img), std::move(mask), std::move(meta), area});
            break;
        }
    }
    return samples;
}

// --- manifest ---------------------------------------------------------------
//
//   dirl-manifest v1
//   size <h> <w>
//   count <n>
//   <id> <image> <mask> <kind> <bg_seed> <nparams> <p...>

template <class T>
std::string write_manifest(const std::vector<CompositeSample<T>>& samples, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir);
    if (samples.empty()) throw LengthError("refusing to write an empty manifest");
    const Shape& s0 = samples.front().image.shape();
    std::ostringstream manifest;
    manifest << "dirl-manifest v1\n";
    manifest << "size " << s0.h << " " << s0.w << "\n";
    manifest << "count " << samples.size() << "\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::ostringstream id;
        id << "s" << std::setw(4) << std::setfill('0') << i;
        const std::string img_name = id.str() + ".ppm";
        const std::string mask_name = id.str() + "_mask.pgm";
        write_ppm(samples[i].image, (fs::path(dir) / img_name).string());
        write_pgm(samples[i].mask, (fs::path(dir) / mask_name).string());
        manifest << id.str() << " " << img_name << " " << mask_name << " " << samples[i].meta.kind << " "
                 << samples[i].meta.bg_seed << " " << samples[i].meta.params.size();
        manifest << std::setprecision(17);
        for (double p : samples[i].meta.params) manifest << " " << p;
        manifest << "\n";
    }
    const std::string path = (fs::path(dir) / "manifest.txt").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << manifest.str();
    if (!os) throw IoError("write failed: " + path);
    return path;
}

template <class T>
std::vector<CompositeSample<T>> load_manifest(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "dirl-manifest v1")
        throw FormatError(path + ": missing 'dirl-manifest v1' header");
    std::int64_t h = 0, w = 0;
    std::size_t count = 0;
    {
        std::string key;
        if (!(is >> key >> h >> w) || key != "size" || h < 1 || w < 1)
            throw FormatError(path + ": bad size line");
        if (!(is >> key >> count) || key != "count" || count < 1)
            throw FormatError(path + ": bad count line");
        std::getline(is, line);
    }
    const fs::path dir = fs::path(path).parent_path();
    std::vector<CompositeSample<T>> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(is, line) || line.find_first_not_of(" \t\r\n") == std::string::npos)
            throw FormatError(path + ": truncated manifest, expected " + std::to_string(count) + " records, got " +
                              std::to_string(i));
        std::istringstream ls(line);
        std::string id, img_name, mask_name, kind;
        std::uint64_t bg_seed = 0;
        std::size_t nparams = 0;
        if (!(ls >> id >> img_name >> mask_name >> kind >> bg_seed >> nparams))
            throw FormatError(path + ": malformed record '" + line + "'");
        std::vector<double> params(nparams);
        for (auto& p : params)
            if (!(ls >> p)) throw FormatError(path + ": record '" + id + "' is missing parameters");
        const std::string img_path = (dir / img_name).string();
        const std::string mask_path = (dir / mask_name).string();
        if (!fs::exists(img_path)) throw IoError("manifest references missing file: " + img_path);
        if (!fs::exists(mask_path)) throw IoError("manifest references missing file: " + mask_path);
        CompositeSample<T> s;
        s.image = read_ppm<T>(img_path);
        s.mask = read_pgm<T>(mask_path);
        if (s.image.shape().h != h || s.image.shape().w != w)
            throw FormatError(path + ": record '" + id + "' raster size differs from manifest size");
        s.meta = PerturbMeta{kind, bg_seed, std::move(params)};
        s.foreground_area_fraction = datagen_detail::mask_area(s.mask);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace dirl
