#pragma once

#include <cstring>
#include <fstream>

#include "dirl/config.hpp"
#include "dirl/nn.hpp"

namespace dirl {

// Single-file checkpoint: a little-endian archive mapping canonical parameter
// names (module/level/layer paths, registry order) to raw tensors with shape
// headers, preceded by the flat-text model/train config. Layout:
//
//   8 bytes  "DIRLCKP1"
//   u32      config text length, then the text
//   u64      entry count
//   entries: u32 name length, name bytes, u8 scalar width (4|8),
//            4 x u64 dims, raw scalar data
//
// Entries cover parameters and BN running statistics.

namespace checkpoint_detail {

inline constexpr char kMagic[8] = {'D', 'I', 'R', 'L', 'C', 'K', 'P', '1'};

template <class V>
void write_pod(std::ostream& os, const V& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& is, const std::string& path) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw FormatError(path + ": truncated checkpoint");
    return v;
}

template <class T>
void write_tensor_entry(std::ostream& os, const std::string& name, const Tensor<T>& t) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint8_t>(sizeof(T)));
    const Shape& s = t.shape();
    for (std::int64_t d : {s.n, s.c, s.h, s.w}) write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * static_cast<std::int64_t>(sizeof(T))));
}

template <class T>
std::pair<std::string, Tensor<T>> read_tensor_entry(std::istream& is, const std::string& path) {
    const auto name_len = read_pod<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw FormatError(path + ": truncated checkpoint");
    const auto width = read_pod<std::uint8_t>(is, path);
    if (width != 4 && width != 8) throw FormatError(path + ": bad scalar width for '" + name + "'");
    Shape s;
    s.n = static_cast<std::int64_t>(read_pod<std::uint64_t>(is, path));
    s.c = static_cast<std::int64_t>(read_pod<std::uint64_t>(is, path));
    s.h = static_cast<std::int64_t>(read_pod<std::uint64_t>(is, path));
    s.w = static_cast<std::int64_t>(read_pod<std::uint64_t>(is, path));
    Tensor<T> t(s);
    if (width == sizeof(T)) {
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * width));
        if (!is) throw FormatError(path + ": truncated tensor data for '" + name + "'");
    } else if (width == 4) {
        std::vector<float> buf(static_cast<std::size_t>(t.numel()));
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(t.numel() * 4));
        if (!is) throw FormatError(path + ": truncated tensor data for '" + name + "'");
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(buf[static_cast<std::size_t>(i)]);
    } else {
        std::vector<double> buf(static_cast<std::size_t>(t.numel()));
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(t.numel() * 8));
        if (!is) throw FormatError(path + ": truncated tensor data for '" + name + "'");
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(buf[static_cast<std::size_t>(i)]);
    }
    return {std::move(name), std::move(t)};
}

}  // namespace checkpoint_detail

template <class T>
void save_checkpoint(const std::string& path, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                     const nn::ParamRegistry<T>& reg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(checkpoint_detail::kMagic, 8);
    const std::string cfg = serialize_config(model_cfg, train_cfg);
    checkpoint_detail::write_pod(os, static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    checkpoint_detail::write_pod(os, static_cast<std::uint64_t>(reg.params.size() + reg.buffers.size()));
    for (const auto& [name, v] : reg.params) checkpoint_detail::write_tensor_entry(os, name, v.value());
    for (const auto& [name, t] : reg.buffers) checkpoint_detail::write_tensor_entry(os, name, *t);
    if (!os) throw IoError("write failed: " + path);
}

// Reads just the embedded configs (to construct the right model).
inline std::pair<ModelConfig, TrainConfig> read_checkpoint_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, checkpoint_detail::kMagic, 8) != 0)
        throw FormatError(path + ": not a dirl checkpoint");
    const auto len = checkpoint_detail::read_pod<std::uint32_t>(is, path);
    std::string cfg(len, '\0');
    is.read(cfg.data(), len);
    if (!is) throw FormatError(path + ": truncated config block");
    ModelConfig m;
    TrainConfig t;
    parse_config(cfg, m, t);
    return {m, t};
}

// Loads tensors into an existing registry; every name must match in both
// directions and shapes must agree, otherwise the checkpoint belongs to a
// different model configuration.
template <class T>
void load_checkpoint_into(const std::string& path, nn::ParamRegistry<T>& reg) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, checkpoint_detail::kMagic, 8) != 0)
        throw FormatError(path + ": not a dirl checkpoint");
    const auto len = checkpoint_detail::read_pod<std::uint32_t>(is, path);
    is.seekg(len, std::ios::cur);
    const auto count = checkpoint_detail::read_pod<std::uint64_t>(is, path);

    std::map<std::string, Tensor<T>> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto [name, t] = checkpoint_detail::read_tensor_entry<T>(is, path);
        entries.emplace(std::move(name), std::move(t));
    }
    const std::size_t expected = reg.params.size() + reg.buffers.size();
    if (entries.size() != expected)
        throw ConfigError(path + ": holds " + std::to_string(entries.size()) + " tensors, model expects " +
                          std::to_string(expected));
    auto take = [&](const std::string& name, Shape want) -> Tensor<T>& {
        auto it = entries.find(name);
        if (it == entries.end()) throw ConfigError(path + ": missing tensor '" + name + "'");
        if (it->second.shape() != want)
            throw ConfigError(path + ": tensor '" + name + "' has shape " + it->second.shape().str() + ", model expects " +
                              want.str());
        return it->second;
    };
    for (auto& [name, v] : reg.params) v.value() = take(name, v.shape());
    for (auto& [name, t] : reg.buffers) *t = take(name, t->shape());
}

}  // namespace dirl
