#pragma once

#include <array>
#include <vector>

#include "dirl/autograd.hpp"
#include "dirl/config.hpp"
#include "dirl/tensor.hpp"

namespace dirl {

struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error("ValueError: " + msg) {}
};

// A batch of RGB images in [0,1]; spatial size must survive four halvings.
template <class T>
class ImageTensor {
public:
    explicit ImageTensor(Tensor<T> data) : data_(std::move(data)) {
        const Shape& s = data_.shape();
        if (s.c != 3) throw ShapeError("image needs 3 channels, got " + s.str());
        if (s.n < 1 || s.h < 16 || s.w < 16 || s.h % 16 != 0 || s.w % 16 != 0)
            throw ShapeError("image spatial size must be divisible by 16, got " + s.str());
        for (std::int64_t i = 0; i < data_.numel(); ++i)
            if (!(data_[i] >= T(0) && data_[i] <= T(1)))
                throw ValueError("image values must lie in [0,1]");
    }

    const Tensor<T>& tensor() const { return data_; }
    const Shape& shape() const { return data_.shape(); }

private:
    Tensor<T> data_;
};

// A batch of single-channel soft masks in [0,1]. Ground-truth masks are
// additionally binary; predictions and attention maps are not.
template <class T>
class MaskTensor {
public:
    explicit MaskTensor(Tensor<T> data) : data_(std::move(data)) {
        const Shape& s = data_.shape();
        if (s.c != 1) throw ShapeError("mask needs 1 channel, got " + s.str());
        for (std::int64_t i = 0; i < data_.numel(); ++i)
            if (!(data_[i] >= T(0) && data_[i] <= T(1)))
                throw ValueError("mask values must lie in [0,1]");
    }

    const Tensor<T>& tensor() const { return data_; }
    const Shape& shape() const { return data_.shape(); }

    bool is_binary() const {
        for (std::int64_t i = 0; i < data_.numel(); ++i)
            if (data_[i] != T(0) && data_[i] != T(1)) return false;
        return true;
    }

private:
    Tensor<T> data_;
};

// Five feature maps with strictly halving resolution. Held as Vars so the
// same container carries both plain data (tests) and tape-connected
// activations (training).
template <class T>
struct FeaturePyramid {
    std::vector<Var<T>> levels;

    FeaturePyramid() = default;
    explicit FeaturePyramid(std::vector<Var<T>> lv) : levels(std::move(lv)) {}
};

template <class T>
void validate_pyramid(const FeaturePyramid<T>& p, const ModelConfig& cfg) {
    if (p.levels.size() != 5)
        throw ShapeError("pyramid needs exactly 5 levels, got " + std::to_string(p.levels.size()));
    std::int64_t batch = -1;
    for (std::size_t k = 0; k < 5; ++k) {
        const Shape& s = p.levels[k].shape();
        const std::int64_t eh = cfg.input_h >> k;
        const std::int64_t ew = cfg.input_w >> k;
        if (s.h != eh || s.w != ew)
            throw ShapeError("level " + std::to_string(k + 1) + ": expected spatial " + std::to_string(eh) + "x" +
                             std::to_string(ew) + ", got " + s.str());
        if (s.c != cfg.channels[k])
            throw ShapeError("level " + std::to_string(k + 1) + ": expected " + std::to_string(cfg.channels[k]) +
                             " channels, got " + s.str());
        if (batch < 0) batch = s.n;
        if (s.n != batch)
            throw ShapeError("level " + std::to_string(k + 1) + ": batch " + std::to_string(s.n) +
                             " differs from level 1 batch " + std::to_string(batch));
    }
}

// Per-image and averaged evaluation metrics. Averages are plain arithmetic
// means of the per-image values.
struct MetricReport {
    double ap = 0;
    double f1 = 0;
    double iou = 0;
    std::vector<std::array<double, 3>> per_image;  // (ap, f1, iou)
    double threshold = 0.5;
};

}  // namespace dirl
