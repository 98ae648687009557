#pragma once

#include <cstdint>
#include <string>

namespace wuyun::nn {

enum class ModelRole { SkeletonLM, InpaintSeq2Seq };

/// Architecture hyperparameters. The *_paper presets are the published
/// configuration; the *_test presets are the desk-scale defaults the test
/// suite trains on CPU.
struct ModelConfig {
    ModelRole role = ModelRole::SkeletonLM;
    int n_layers = 4;
    int n_heads = 8;
    int d_model = 512;
    int d_ff = 2048;
    int d_embed = 512;
    int context_len = 512;
    int memory_len = 512;  // LM segment memory; 0 = vanilla causal transformer
    double dropout_rate = 0.1;
    int max_bar_embed = 64;

    static ModelConfig lm_paper();
    static ModelConfig lm_test();
    static ModelConfig seq2seq_paper();
    static ModelConfig seq2seq_test();

    void validate() const;  // throws ConfigError
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

}  // namespace wuyun::nn
