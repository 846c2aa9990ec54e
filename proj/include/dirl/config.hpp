#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dirl/errors.hpp"

namespace dirl {

enum class FusionVariant { NONE, AIM, BFI, BFI_UP, BFI_DOWN };
enum class AttentionVariant { NONE, DA, MDA };
enum class DecoderVariant { REG, GGD_SIM, GGD };

inline const char* to_string(FusionVariant v) {
    switch (v) {
        case FusionVariant::NONE: return "none";
        case FusionVariant::AIM: return "aim";
        case FusionVariant::BFI: return "bfi";
        case FusionVariant::BFI_UP: return "bfi_up";
        case FusionVariant::BFI_DOWN: return "bfi_down";
    }
    return "?";
}

inline const char* to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::NONE: return "none";
        case AttentionVariant::DA: return "da";
        case AttentionVariant::MDA: return "mda";
    }
    return "?";
}

inline const char* to_string(DecoderVariant v) {
    switch (v) {
        case DecoderVariant::REG: return "reg";
        case DecoderVariant::GGD_SIM: return "ggd_sim";
        case DecoderVariant::GGD: return "ggd";
    }
    return "?";
}

inline FusionVariant fusion_variant_from(const std::string& s) {
    if (s == "none") return FusionVariant::NONE;
    if (s == "aim") return FusionVariant::AIM;
    if (s == "bfi") return FusionVariant::BFI;
    if (s == "bfi_up") return FusionVariant::BFI_UP;
    if (s == "bfi_down") return FusionVariant::BFI_DOWN;
    throw ConfigError("unknown fusion_variant '" + s + "'");
}

inline AttentionVariant attention_variant_from(const std::string& s) {
    if (s == "none") return AttentionVariant::NONE;
    if (s == "da") return AttentionVariant::DA;
    if (s == "mda") return AttentionVariant::MDA;
    throw ConfigError("unknown attention_variant '" + s + "'");
}

inline DecoderVariant decoder_variant_from(const std::string& s) {
    if (s == "reg") return DecoderVariant::REG;
    if (s == "ggd_sim") return DecoderVariant::GGD_SIM;
    if (s == "ggd") return DecoderVariant::GGD;
    throw ConfigError("unknown decoder_variant '" + s + "'");
}

// Channel widths follow a ResNet34-like doubling schedule capped at 8x.
inline std::array<std::int64_t, 5> channels_from_base_width(std::int64_t base_width) {
    return {base_width, base_width * 2, base_width * 4, base_width * 8, base_width * 8};
}

struct ModelConfig {
    std::array<std::int64_t, 5> channels = channels_from_base_width(8);
    FusionVariant fusion_variant = FusionVariant::BFI;
    AttentionVariant attention_variant = AttentionVariant::MDA;
    DecoderVariant decoder_variant = DecoderVariant::GGD;
    std::int64_t input_h = 64;
    std::int64_t input_w = 64;
    std::int64_t base_width = 8;

    // Residual-block depth per encoder stage. Full-width models use the
    // ResNet34 counts, small ones a single block per stage.
    std::array<std::int64_t, 4> stage_blocks() const {
        if (base_width >= 64) return {3, 4, 6, 3};
        return {1, 1, 1, 1};
    }

    // CBAM squeeze ratio; must keep channels/ratio >= 1.
    std::int64_t squeeze_ratio() const { return base_width >= 64 ? 16 : 2; }

    void validate() const {
        if (base_width < 1) throw ConfigError("base_width must be positive");
        for (auto c : channels)
            if (c < 1) throw ConfigError("channels must be positive");
        if (input_h < 16 || input_w < 16 || input_h % 16 != 0 || input_w % 16 != 0)
            throw ConfigError("input_size must be divisible by 16, got " + std::to_string(input_h) + "x" +
                              std::to_string(input_w));
        if (channels[0] < squeeze_ratio())
            throw ConfigError("channels[0] smaller than attention squeeze ratio");
    }

    static ModelConfig desk_scale() { return ModelConfig{}; }

    static ModelConfig full_scale() {
        ModelConfig c;
        c.base_width = 64;
        c.channels = channels_from_base_width(64);
        c.input_h = c.input_w = 256;
        return c;
    }
};

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    std::int64_t decay_epoch = 30;
    double decay_factor = 0.5;
    std::int64_t epochs = 200;
    std::int64_t batch_size = 4;
    std::uint64_t seed = 1;
    double lambda_aux = 0.1;

    void validate() const {
        if (lr <= 0 || beta1 <= 0 || beta2 <= 0 || weight_decay < 0) throw ConfigError("optimizer values must be positive");
        if (beta1 >= 1 || beta2 >= 1) throw ConfigError("betas must be < 1");
        if (decay_epoch <= 0 || epochs <= 0 || batch_size <= 0) throw ConfigError("schedule values must be positive");
        if (decay_factor <= 0 || decay_factor >= 1) throw ConfigError("decay_factor must lie in (0,1)");
        if (lambda_aux < 0) throw ConfigError("lambda_aux must be nonnegative");
    }

    // Stepwise decay: halve every decay_epoch epochs (epoch is 1-based).
    double lr_at_epoch(std::int64_t epoch) const {
        double v = lr;
        for (std::int64_t e = decay_epoch; e < epoch; e += decay_epoch) v *= decay_factor;
        return v;
    }
};

// --- flat `key = value` serialization ---------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

inline std::int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    }
}

inline double to_f64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
}

}  // namespace detail

inline std::string serialize_config(const ModelConfig& m, const TrainConfig& t) {
    std::ostringstream os;
    os << "channels = ";
    for (std::size_t i = 0; i < m.channels.size(); ++i) os << (i ? "," : "") << m.channels[i];
    os << "\n";
    os << "fusion_variant = " << to_string(m.fusion_variant) << "\n";
    os << "attention_variant = " << to_string(m.attention_variant) << "\n";
    os << "decoder_variant = " << to_string(m.decoder_variant) << "\n";
    os << "input_size = " << m.input_h << "x" << m.input_w << "\n";
    os << "base_width = " << m.base_width << "\n";
    os << "lr = " << t.lr << "\n";
    os << "beta1 = " << t.beta1 << "\n";
    os << "beta2 = " << t.beta2 << "\n";
    os << "weight_decay = " << t.weight_decay << "\n";
    os << "decay_epoch = " << t.decay_epoch << "\n";
    os << "decay_factor = " << t.decay_factor << "\n";
    os << "epochs = " << t.epochs << "\n";
    os << "batch_size = " << t.batch_size << "\n";
    os << "seed = " << t.seed << "\n";
    os << "lambda_aux = " << t.lambda_aux << "\n";
    return os.str();
}

// Parses a combined config; keys may cover ModelConfig, TrainConfig or both.
// Unknown keys are an error.
inline void parse_config(const std::string& text, ModelConfig& m, TrainConfig& t) {
    const auto kv = detail::parse_kv(text);
    for (const auto& [key, val] : kv) {
        if (key == "channels") {
            std::istringstream is(val);
            std::string item;
            std::vector<std::int64_t> ch;
            while (std::getline(is, item, ',')) ch.push_back(detail::to_i64(key, detail::trim(item)));
            if (ch.size() != 5) throw ConfigError("channels needs 5 entries, got " + std::to_string(ch.size()));
            for (std::size_t i = 0; i < 5; ++i) m.channels[i] = ch[i];
        } else if (key == "fusion_variant") {
            m.fusion_variant = fusion_variant_from(val);
        } else if (key == "attention_variant") {
            m.attention_variant = attention_variant_from(val);
        } else if (key == "decoder_variant") {
            m.decoder_variant = decoder_variant_from(val);
        } else if (key == "input_size") {
            const auto x = val.find('x');
            if (x == std::string::npos) {
                m.input_h = m.input_w = detail::to_i64(key, val);
            } else {
                m.input_h = detail::to_i64(key, val.substr(0, x));
                m.input_w = detail::to_i64(key, val.substr(x + 1));
            }
        } else if (key == "base_width") {
            m.base_width = detail::to_i64(key, val);
        } else if (key == "lr") {
            t.lr = detail::to_f64(key, val);
        } else if (key == "beta1") {
            t.beta1 = detail::to_f64(key, val);
        } else if (key == "beta2") {
            t.beta2 = detail::to_f64(key, val);
        } else if (key == "weight_decay") {
            t.weight_decay = detail::to_f64(key, val);
        } else if (key == "decay_epoch") {
            t.decay_epoch = detail::to_i64(key, val);
        } else if (key == "decay_factor") {
            t.decay_factor = detail::to_f64(key, val);
        } else if (key == "epochs") {
            t.epochs = detail::to_i64(key, val);
        } else if (key == "batch_size") {
            t.batch_size = detail::to_i64(key, val);
        } else if (key == "seed") {
            t.seed = static_cast<std::uint64_t>(detail::to_i64(key, val));
        } else if (key == "lambda_aux") {
            t.lambda_aux = detail::to_f64(key, val);
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }
}

}  // namespace dirl
