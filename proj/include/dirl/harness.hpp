#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <thread>

#include "dirl/checkpoint.hpp"
#include "dirl/datagen.hpp"
#include "dirl/losses.hpp"
#include "dirl/metrics.hpp"
#include "dirl/network.hpp"

namespace dirl {

// Adam with L2 weight decay folded into the gradient (the convention the
// usual framework implementation uses for its weight_decay knob).
template <class T>
class Adam {
public:
    Adam(const nn::ParamRegistry<T>& reg, const TrainConfig& cfg) : cfg_(cfg) {
        for (const auto& [name, v] : reg.params) {
            m_.emplace_back(v.shape());
            v_.emplace_back(v.shape());
        }
    }

    void step(nn::ParamRegistry<T>& reg, double lr) {
        ++t_;
        const T b1 = static_cast<T>(cfg_.beta1);
        const T b2 = static_cast<T>(cfg_.beta2);
        const T wd = static_cast<T>(cfg_.weight_decay);
        const T eps = static_cast<T>(1e-8);
        const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
        const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
        for (std::size_t p = 0; p < reg.params.size(); ++p) {
            auto& var = reg.params[p].second;
            Tensor<T>& theta = var.value();
            const Tensor<T>& grad = var.grad();
            if (grad.empty()) continue;
            Tensor<T>& m = m_[p];
            Tensor<T>& v = v_[p];
            for (std::int64_t i = 0; i < theta.numel(); ++i) {
                const T g = grad[i] + wd * theta[i];
                m[i] = b1 * m[i] + (T(1) - b1) * g;
                v[i] = b2 * v[i] + (T(1) - b2) * g * g;
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                theta[i] -= static_cast<T>(lr) * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    std::int64_t steps() const { return t_; }

private:
    TrainConfig cfg_;
    std::vector<Tensor<T>> m_, v_;
    std::int64_t t_ = 0;
};

struct TrainLogRow {
    std::int64_t step = 0;
    std::int64_t epoch = 0;
    double lr = 0;
    double bce = 0, ssim = 0, aux = 0, total = 0;
};

template <class T>
struct TrainResult {
    DirlNet<T> net;
    std::vector<TrainLogRow> log;
    double final_total = 0;
};

inline void write_training_log(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "step,epoch,lr,bce,ssim,aux,total\n";
    os << std::setprecision(10);
    for (const auto& r : log)
        os << r.step << "," << r.epoch << "," << r.lr << "," << r.bce << "," << r.ssim << "," << r.aux << ","
           << r.total << "\n";
    if (!os) throw IoError("write failed: " + path);
}

namespace harness_detail {

// Stacks samples into a batch pair (images, masks).
template <class T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<CompositeSample<T>>& samples,
                                           const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    const Shape& s = samples[idx[begin]].image.shape();
    const auto b = static_cast<std::int64_t>(end - begin);
    Tensor<T> images(Shape{b, 3, s.h, s.w});
    Tensor<T> masks(Shape{b, 1, s.h, s.w});
    const std::int64_t img_sz = 3 * s.h * s.w;
    const std::int64_t mask_sz = s.h * s.w;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& sample = samples[idx[i]];
        const auto bi = static_cast<std::int64_t>(i - begin);
        std::memcpy(images.data() + bi * img_sz, sample.image.data(), sizeof(T) * static_cast<std::size_t>(img_sz));
        std::memcpy(masks.data() + bi * mask_sz, sample.mask.data(), sizeof(T) * static_cast<std::size_t>(mask_sz));
    }
    return {std::move(images), std::move(masks)};
}

}  // namespace harness_detail

// Full training run. Deterministic given the seed: parameter init, batch
// order, and every arithmetic reduction are fixed.
template <class T>
TrainResult<T> train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                     const std::vector<CompositeSample<T>>& data, bool verbose = false) {
    model_cfg.validate();
    train_cfg.validate();
    if (data.empty()) throw LengthError("training set is empty");
    for (const auto& s : data)
        if (s.image.shape().h != model_cfg.input_h || s.image.shape().w != model_cfg.input_w)
            throw ConfigError("sample size " + s.image.shape().str() + " does not match configured input " +
                              std::to_string(model_cfg.input_h) + "x" + std::to_string(model_cfg.input_w));

    TrainResult<T> result;
    result.net = DirlNet<T>(model_cfg, train_cfg.seed);
    auto reg = result.net.registry();
    Adam<T> opt(reg, train_cfg);
    Rng shuffle_rng = Rng(train_cfg.seed).fork(1);

    const bool use_aux = model_cfg.attention_variant == AttentionVariant::MDA;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::int64_t step = 0;
    for (std::int64_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        const double lr = train_cfg.lr_at_epoch(epoch);
        Rng epoch_rng = shuffle_rng.fork(static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(train_cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(train_cfg.batch_size));
            auto [images, masks] = harness_detail::make_batch(data, order, begin, end);
            auto out = result.net.forward(Var<T>(std::move(images)), true);
            auto loss = total_loss(out.mask, use_aux ? out.attn : std::vector<Var<T>>{}, masks,
                                   static_cast<T>(train_cfg.lambda_aux));
            if (!std::isfinite(static_cast<double>(loss.breakdown.total)))
                throw Error("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                            "): bce=" + std::to_string(static_cast<double>(loss.breakdown.bce)) +
                            " ssim=" + std::to_string(static_cast<double>(loss.breakdown.ssim)) +
                            " aux=" + std::to_string(static_cast<double>(loss.breakdown.aux)));
            reg.zero_grad();
            loss.total.backward();
            opt.step(reg, lr);
            ++step;
            result.log.push_back(TrainLogRow{step, epoch, lr, static_cast<double>(loss.breakdown.bce),
                                             static_cast<double>(loss.breakdown.ssim),
                                             static_cast<double>(loss.breakdown.aux),
                                             static_cast<double>(loss.breakdown.total)});
        }
        if (verbose && (epoch % 10 == 0 || epoch == 1))
            std::fprintf(stderr, "epoch %lld/%lld lr %.3g total %.5f\n", static_cast<long long>(epoch),
                         static_cast<long long>(train_cfg.epochs), lr, result.log.back().total);
    }
    result.final_total = result.log.empty() ? 0.0 : result.log.back().total;
    return result;
}

// Inference on a batch of images; eval-mode BN, no tape.
template <class T>
Tensor<T> predict(const DirlNet<T>& net, const Tensor<T>& images) {
    ops::NoGradGuard guard;
    return net.forward(Var<T>(images), false).mask.value();
}

// Per-level spatial attention maps for one batch (export path).
template <class T>
std::vector<Tensor<T>> predict_attention(const DirlNet<T>& net, const Tensor<T>& images) {
    ops::NoGradGuard guard;
    auto out = net.forward(Var<T>(images), false);
    std::vector<Tensor<T>> maps;
    for (const auto& a : out.attn) maps.push_back(a.value());
    return maps;
}

// Predicts every sample and reduces with the metric suite.
template <class T>
MetricReport evaluate(const DirlNet<T>& net, const std::vector<CompositeSample<T>>& data) {
    if (data.empty()) throw LengthError("evaluation set is empty");
    std::vector<Tensor<T>> preds, gts;
    preds.reserve(data.size());
    gts.reserve(data.size());
    for (const auto& s : data) {
        Tensor<T> img = s.image;
        preds.push_back(predict(net, img));
        gts.push_back(s.mask);
    }
    return evaluate_dataset(preds, gts);
}

inline void write_metrics_csv(const MetricReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os << "image_id,ap,f1,iou\n" << std::setprecision(10);
    for (std::size_t i = 0; i < report.per_image.size(); ++i)
        os << i << "," << report.per_image[i][0] << "," << report.per_image[i][1] << "," << report.per_image[i][2]
           << "\n";
    os << "mean," << report.ap << "," << report.f1 << "," << report.iou << "\n";
    if (!os) throw IoError("write failed: " + path);
}

// --- ablation matrix ---------------------------------------------------------

struct AblationRow {
    int id = 0;
    FusionVariant transition = FusionVariant::NONE;
    AttentionVariant refine = AttentionVariant::NONE;
    DecoderVariant decoder = DecoderVariant::REG;
};

// The ten configurations, from plain UNet to the full network.
inline std::vector<AblationRow> ablation_table() {
    return {
        {1, FusionVariant::NONE, AttentionVariant::NONE, DecoderVariant::REG},
        {2, FusionVariant::NONE, AttentionVariant::NONE, DecoderVariant::GGD_SIM},
        {3, FusionVariant::NONE, AttentionVariant::NONE, DecoderVariant::GGD},
        {4, FusionVariant::AIM, AttentionVariant::NONE, DecoderVariant::GGD},
        {5, FusionVariant::BFI_DOWN, AttentionVariant::NONE, DecoderVariant::GGD},
        {6, FusionVariant::BFI_UP, AttentionVariant::NONE, DecoderVariant::GGD},
        {7, FusionVariant::BFI, AttentionVariant::NONE, DecoderVariant::GGD},
        {8, FusionVariant::NONE, AttentionVariant::DA, DecoderVariant::GGD},
        {9, FusionVariant::NONE, AttentionVariant::MDA, DecoderVariant::GGD},
        {10, FusionVariant::BFI, AttentionVariant::MDA, DecoderVariant::GGD},
    };
}

inline ModelConfig model_config_for(const AblationRow& row, ModelConfig base) {
    base.fusion_variant = row.transition;
    base.attention_variant = row.refine;
    base.decoder_variant = row.decoder;
    return base;
}

struct AblationEntry {
    AblationRow row;
    MetricReport report;
    double final_loss = 0;
    std::int64_t param_count = 0;
};

// Trains and evaluates each requested row with a shared seed and dataset.
// Rows are independent, so they may run on worker threads; per-row results
// are still bitwise deterministic.
template <class T>
std::vector<AblationEntry> run_ablation(const std::vector<AblationRow>& rows, const ModelConfig& base_cfg,
                                        const TrainConfig& train_cfg, const std::vector<CompositeSample<T>>& data,
                                        const std::vector<CompositeSample<T>>& eval_data, int threads = 1,
                                        bool verbose = false) {
    if (data.empty()) throw LengthError("ablation training set is empty");
    std::vector<AblationEntry> entries(rows.size());
    std::vector<std::exception_ptr> errors(rows.size());
    auto work = [&](std::size_t i) {
        try {
            const ModelConfig cfg = model_config_for(rows[i], base_cfg);
            auto result = train(cfg, train_cfg, data, verbose);
            entries[i].row = rows[i];
            entries[i].report = evaluate(result.net, eval_data.empty() ? data : eval_data);
            entries[i].final_loss = result.final_total;
            entries[i].param_count = result.net.param_count();
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (threads <= 1) {
        for (std::size_t i = 0; i < rows.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < rows.size(); i = next.fetch_add(1)) work(i);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return entries;
}

inline std::string ablation_csv(const std::vector<AblationEntry>& entries) {
    std::ostringstream os;
    os << "row,transition,refine,decoder,ap,f1,iou\n" << std::setprecision(10);
    for (const auto& e : entries)
        os << e.row.id << "," << to_string(e.row.transition) << "," << to_string(e.row.refine) << ","
           << to_string(e.row.decoder) << "," << e.report.ap << "," << e.report.f1 << "," << e.report.iou << "\n";
    return os.str();
}

inline std::string ablation_text_table(const std::vector<AblationEntry>& entries) {
    std::ostringstream os;
    os << std::left << std::setw(5) << "#" << std::setw(10) << "trans" << std::setw(7) << "refine" << std::setw(9)
       << "decoder" << std::right << std::setw(9) << "AP(%)" << std::setw(9) << "F1" << std::setw(9) << "IoU(%)"
       << "\n";
    for (const auto& e : entries) {
        auto dash = [](const char* s) { return std::string(s) == "none" ? "-" : s; };
        os << std::left << std::setw(5) << e.row.id << std::setw(10) << dash(to_string(e.row.transition))
           << std::setw(7) << dash(to_string(e.row.refine)) << std::setw(9) << to_string(e.row.decoder) << std::right
           << std::fixed << std::setprecision(2) << std::setw(9) << 100.0 * e.report.ap << std::setprecision(4)
           << std::setw(9) << e.report.f1 << std::setprecision(2) << std::setw(9) << 100.0 * e.report.iou << "\n";
    }
    return os.str();
}

}  // namespace dirl
