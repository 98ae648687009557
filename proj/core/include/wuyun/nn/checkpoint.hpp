#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wuyun/errors.hpp"
#include "wuyun/nn/adam.hpp"
#include "wuyun/nn/config.hpp"
#include "wuyun/nn/model.hpp"

namespace wuyun::nn {

/// Self-describing model snapshot: magic "WYCK", version, config JSON block,
/// vocabulary hash, named parameter manifest, little-endian float32 payload,
/// optional Adam state, RNG seed and training step.
struct Checkpoint {
    ModelConfig config;
    std::uint64_t vocab_hash = 0;
    std::uint64_t seed = 0;
    std::uint64_t train_step = 0;

    struct Record {
        std::string name;
        int rows = 0, cols = 0;
        std::uint64_t offset = 0;  // in floats
    };
    std::vector<Record> manifest;
    std::vector<float> payload;

    bool has_optimizer = false;
    std::vector<float> opt_m, opt_v;
    long opt_steps = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <class T, class Model>
Checkpoint snapshot(const Model& model, const Adam<T>* opt, std::uint64_t vocab_hash,
                    std::uint64_t seed, std::uint64_t train_step) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.vocab_hash = vocab_hash;
    ckpt.seed = seed;
    ckpt.train_step = train_step;
    std::uint64_t offset = 0;
    for (const auto& entry : model.params().entries) {
        ckpt.manifest.push_back({entry.name, entry.tensor.rows(), entry.tensor.cols(), offset});
        for (const T v : entry.tensor.value()) ckpt.payload.push_back(float(v));
        offset += entry.tensor.numel();
    }
    if (opt) {
        ckpt.has_optimizer = true;
        ckpt.opt_steps = const_cast<Adam<T>*>(opt)->steps_taken();
        for (const auto& m : const_cast<Adam<T>*>(opt)->m())
            for (const T v : m) ckpt.opt_m.push_back(float(v));
        for (const auto& v : const_cast<Adam<T>*>(opt)->v())
            for (const T x : v) ckpt.opt_v.push_back(float(x));
    }
    return ckpt;
}

template <class T, class Model>
void restore(Model& model, Adam<T>* opt, const Checkpoint& ckpt) {
    auto& entries = model.params().entries;
    if (entries.size() != ckpt.manifest.size())
        throw ShapeMismatch("checkpoint manifest does not match the model");
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& rec = ckpt.manifest[i];
        auto& tensor = entries[i].tensor;
        if (rec.name != entries[i].name || rec.rows != tensor.rows() || rec.cols != tensor.cols())
            throw ShapeMismatch("checkpoint parameter " + rec.name + " does not match the model");
        for (size_t j = 0; j < tensor.numel(); ++j)
            tensor.value()[j] = T(ckpt.payload.at(rec.offset + j));
    }
    if (opt && ckpt.has_optimizer) {
        opt->set_steps_taken(ckpt.opt_steps);
        size_t at = 0;
        for (auto& m : opt->m())
            for (auto& v : m) v = T(ckpt.opt_m.at(at++));
        at = 0;
        for (auto& vv : opt->v())
            for (auto& v : vv) v = T(ckpt.opt_v.at(at++));
    }
}

}  // namespace wuyun::nn
