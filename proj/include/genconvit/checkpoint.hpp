#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "adam.hpp"
#include "common.hpp"
#include "config.hpp"
#include "tensor.hpp"

namespace gcv::io {

using u32 = std::uint32_t;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written little-endian via memcpy");

constexpr char kMagic[8] = {'G', 'C', 'V', 'C', 'K', 'P', 'T', '\n'};
constexpr u32 kVersion = 1;

// Ordered name -> tensor table; every name may appear exactly once.
struct NamedTensors {
    std::vector<std::string> order;
    std::map<std::string, Tensor<float>> by_name;

    void add(const std::string& name, const Tensor<float>& t) {
        if (!by_name.emplace(name, t).second)
            throw IoError("checkpoint table already has a tensor named " + name);
        order.push_back(name);
    }
    const Tensor<float>* find(const std::string& name) const {
        auto it = by_name.find(name);
        return it == by_name.end() ? nullptr : &it->second;
    }
};

struct CheckpointMeta {
    RunConfig config;
    i64 epoch = 0;  // completed epochs
    u64 seed = 0;   // master seed; with keyed streams this is the full rng state
    nlohmann::json extra = nlohmann::json::object();
};

struct LoadedCheckpoint {
    CheckpointMeta meta;
    NamedTensors tensors;
};

namespace detail {

inline std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

template <typename U>
void put_le(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

template <typename U>
U get_le(const std::string& in, size_t at) {
    U v;
    std::memcpy(&v, in.data() + at, sizeof(U));
    return v;
}

}  // namespace detail

// Layout: magic, u32 version, u64 header length, JSON header, raw f32 blob.
// The header carries the config snapshot, epoch, seed, free-form extras, and
// the tensor table (name, dtype, shape, byte offset into the blob).
inline void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                            const NamedTensors& tensors) {
    nlohmann::ordered_json header;
    header["config"] = nlohmann::json(meta.config);
    header["epoch"] = meta.epoch;
    header["seed"] = meta.seed;
    header["extra"] = meta.extra;
    auto table = nlohmann::ordered_json::array();
    u64 offset = 0;
    for (const auto& name : tensors.order) {
        const Tensor<float>& t = tensors.by_name.at(name);
        table.push_back({{"name", name},
                         {"dtype", "f32"},
                         {"shape", t.shape},
                         {"offset", offset}});
        offset += static_cast<u64>(t.numel()) * sizeof(float);
    }
    header["tensors"] = std::move(table);

    std::string bytes;
    bytes.append(kMagic, sizeof(kMagic));
    detail::put_le<u32>(bytes, kVersion);
    const std::string hj = header.dump();
    detail::put_le<u64>(bytes, static_cast<u64>(hj.size()));
    bytes += hj;
    for (const auto& name : tensors.order) {
        const Tensor<float>& t = tensors.by_name.at(name);
        const size_t n = static_cast<size_t>(t.numel()) * sizeof(float);
        const size_t at = bytes.size();
        bytes.resize(at + n);
        std::memcpy(bytes.data() + at, t.store->data(), n);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    const size_t head = sizeof(kMagic) + sizeof(u32) + sizeof(u64);
    if (bytes.size() < head) throw IoError("truncated checkpoint (missing header): " + path);
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file: " + path);
    const u32 version = detail::get_le<u32>(bytes, sizeof(kMagic));
    if (version != kVersion)
        throw IoError("checkpoint version mismatch: file has version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kVersion));
    const u64 json_len = detail::get_le<u64>(bytes, sizeof(kMagic) + sizeof(u32));
    if (bytes.size() < head + json_len)
        throw IoError("truncated checkpoint (header cut short): " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(head),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(head + json_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header: " + std::string(e.what()));
    }

    LoadedCheckpoint out;
    try {
        out.meta.config = header.at("config").get<RunConfig>();
        out.meta.epoch = header.at("epoch").get<i64>();
        out.meta.seed = header.at("seed").get<u64>();
        out.meta.extra = header.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint header: " + std::string(e.what()));
    }

    const char* blob = bytes.data() + head + json_len;
    const u64 blob_size = bytes.size() - head - json_len;
    u64 expected = 0;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::string dtype = entry.at("dtype").get<std::string>();
        if (dtype != "f32")
            throw IoError("checkpoint tensor " + name + " has unsupported dtype " + dtype);
        const Shape shape = entry.at("shape").get<Shape>();
        const u64 offset = entry.at("offset").get<u64>();
        Tensor<float> t = Tensor<float>::zeros(shape);
        const u64 nbytes = static_cast<u64>(t.numel()) * sizeof(float);
        if (offset + nbytes > blob_size)
            throw IoError("truncated checkpoint (tensor " + name + " cut short): " + path);
        std::memcpy(t.store->data(), blob + offset, nbytes);
        out.tensors.add(name, t);
        expected = std::max(expected, offset + nbytes);
    }
    if (expected != blob_size)
        throw IoError("checkpoint size mismatch (unexpected trailing bytes): " + path);
    return out;
}

// Collects every tensor of the model (trainable or not) under its visit name.
// The returned tensors alias the model's storage.
template <typename Model>
NamedTensors snapshot_model(Model& model) {
    NamedTensors t;
    model.visit("", [&](const std::string& name, Tensor<float>& p, bool) { t.add(name, p); });
    return t;
}

// Copies checkpoint tensors into the model by name. Shape mismatches are
// gathered and reported together; names on either side that have no partner
// raise their own errors.
template <typename Model>
void restore_model(Model& model, const NamedTensors& t,
                   const std::vector<std::string>& ignore_prefixes = {"opt_"}) {
    std::vector<std::string> missing, offenders;
    std::map<std::string, bool> consumed;
    model.visit("", [&](const std::string& name, Tensor<float>& p, bool) {
        const Tensor<float>* src = t.find(name);
        if (!src) {
            missing.push_back(name);
            return;
        }
        consumed[name] = true;
        if (src->shape != p.shape) {
            offenders.push_back(name + " is " + shape_str(src->shape) + " in the checkpoint but " +
                                shape_str(p.shape) + " in the model");
            return;
        }
        std::copy(src->store->begin(), src->store->end(), p.store->begin());
        p.tape = nullptr;
        p.node = -1;
    });
    if (!offenders.empty())
        throw ShapeError("checkpoint does not fit the model config: " +
                         detail::join(offenders, "; "));
    if (!missing.empty())
        throw IoError("checkpoint is missing tensors: " + detail::join(missing, ", "));
    for (const auto& name : t.order) {
        if (consumed.count(name)) continue;
        bool ignored = false;
        for (const auto& pre : ignore_prefixes)
            if (name.rfind(pre, 0) == 0) ignored = true;
        if (!ignored) throw IoError("checkpoint has an unknown tensor name: " + name);
    }
}

// Optimizer moments ride in the same table under <prefix>.m.<param> and
// <prefix>.v.<param>; step counts belong in meta.extra.
inline void add_adam_state(NamedTensors& t, const Adam<float>& opt, const std::string& prefix) {
    for (const auto& [name, m] : opt.m) t.add(prefix + ".m." + name, m);
    for (const auto& [name, v] : opt.v) t.add(prefix + ".v." + name, v);
}

inline void restore_adam_state(Adam<float>& opt, const NamedTensors& t, const std::string& prefix,
                               i64 step_count) {
    opt.step_count = step_count;
    opt.m.clear();
    opt.v.clear();
    const std::string mp = prefix + ".m.", vp = prefix + ".v.";
    for (const auto& name : t.order) {
        if (name.rfind(mp, 0) == 0) {
            Tensor<float> copy = Tensor<float>::zeros(t.by_name.at(name).shape);
            std::copy(t.by_name.at(name).store->begin(), t.by_name.at(name).store->end(),
                      copy.store->begin());
            opt.m.emplace(name.substr(mp.size()), std::move(copy));
        } else if (name.rfind(vp, 0) == 0) {
            Tensor<float> copy = Tensor<float>::zeros(t.by_name.at(name).shape);
            std::copy(t.by_name.at(name).store->begin(), t.by_name.at(name).store->end(),
                      copy.store->begin());
            opt.v.emplace(name.substr(vp.size()), std::move(copy));
        }
    }
}

}  // namespace gcv::io
