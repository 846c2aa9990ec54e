#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dirl/errors.hpp"
#include "dirl/tensor.hpp"

namespace dirl {

// Lossless 8-bit rasters: binary PPM (P6) for RGB images, PGM (P5) for
// grayscale masks and attention maps. Values are stored as round(v*255), so
// tensors already on the 1/255 grid round-trip exactly.

namespace image_io_detail {

inline std::uint8_t to_byte(double v) {
    const double x = v * 255.0 + 0.5;
    if (x <= 0) return 0;
    if (x >= 255) return 255;
    return static_cast<std::uint8_t>(x);
}

inline void read_header(std::istream& is, const std::string& path, const char* magic, std::int64_t& w,
                        std::int64_t& h) {
    std::string m;
    is >> m;
    if (m != magic) throw FormatError(path + ": expected " + magic + " raster, got '" + m + "'");
    long long ww = 0, hh = 0, maxv = 0;
    is >> ww >> hh >> maxv;
    if (!is || ww < 1 || hh < 1) throw FormatError(path + ": bad raster dimensions");
    if (maxv != 255) throw FormatError(path + ": only 8-bit rasters supported");
    is.get();  // single whitespace after header
    w = ww;
    h = hh;
}

}  // namespace image_io_detail

template <class T>
void write_ppm(const Tensor<T>& img, const std::string& path) {
    const Shape& s = img.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm expects (1,3,H,W), got " + s.str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P6\n" << s.w << " " << s.h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(s.w * 3));
    for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x * 3 + c)] = image_io_detail::to_byte(static_cast<double>(img.at(0, c, y, x)));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

template <class T>
Tensor<T> read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::int64_t w = 0, h = 0;
    image_io_detail::read_header(is, path, "P6", w, h);
    Tensor<T> img(Shape{1, 3, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w * 3));
    for (std::int64_t y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw FormatError(path + ": truncated pixel data");
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                img.at(0, c, y, x) = static_cast<T>(row[static_cast<std::size_t>(x * 3 + c)]) / T(255);
    }
    return img;
}

template <class T>
void write_pgm(const Tensor<T>& mask, const std::string& path) {
    const Shape& s = mask.shape();
    if (s.n != 1 || s.c != 1) throw ShapeError("write_pgm expects (1,1,H,W), got " + s.str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "P5\n" << s.w << " " << s.h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(s.w));
    for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x)
            row[static_cast<std::size_t>(x)] = image_io_detail::to_byte(static_cast<double>(mask.at(0, 0, y, x)));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

template <class T>
Tensor<T> read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::int64_t w = 0, h = 0;
    image_io_detail::read_header(is, path, "P5", w, h);
    Tensor<T> mask(Shape{1, 1, h, w});
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (std::int64_t y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw FormatError(path + ": truncated pixel data");
        for (std::int64_t x = 0; x < w; ++x) mask.at(0, 0, y, x) = static_cast<T>(row[static_cast<std::size_t>(x)]) / T(255);
    }
    return mask;
}

}  // namespace dirl
