#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wuyun/nn/config.hpp"
#include "wuyun/nn/sampler.hpp"
#include "wuyun/nn/train.hpp"
#include "wuyun/skeleton.hpp"

namespace wuyun {

inline constexpr const char* kToolVersion = "wuyun 0.1.0";

// Exit codes shared by every stage.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitDataError = 4;
inline constexpr int kExitNumeric = 5;

struct PipelineConfig {
    std::filesystem::path input;
    std::filesystem::path output;
    std::filesystem::path work_dir;  // $WUYUN_WORK_DIR or "." when empty

    StrategySpec strategy{SkeletonStrategy::Rhythm};
    nn::ModelConfig lm_config = nn::ModelConfig::lm_test();
    nn::ModelConfig inpaint_config = nn::ModelConfig::seq2seq_test();
    nn::SamplerConfig sampler;
    nn::TrainConfig train;
    std::uint64_t seed = 0;

    bool skeleton_only = false;
    bool report = false;
    bool estimate_key = false;
    bool binary_tokens = false;
    bool paired_ttest = false;
    bool copy_chords = false;

    std::filesystem::path real_skeleton;     // generate: skip stage one
    std::filesystem::path skeleton_ckpt;
    std::filesystem::path inpaint_ckpt;
    std::filesystem::path prompt_file;
    int prompt_bars = 4;
    std::filesystem::path skeleton_file;     // tokenize: mask the melody first
    std::filesystem::path smf_out;
    std::filesystem::path corpus_b;          // evaluate: reference corpus
    std::string metric, system_a, system_b;  // ttest selection

    /// Merges keys from a JSON config file; explicit flags are applied on top
    /// by the CLI.
    void apply_json(const std::string& text);
    /// Stable hash over the provenance-relevant settings.
    std::uint64_t config_hash() const;
};

/// Runs one pipeline stage. Stage names: ingest, preprocess, tension,
/// extract, tokenize, detokenize, train-skeleton, train-inpaint, generate,
/// evaluate, ttest. Returns an exit code from the table above; artifacts are
/// deterministic for a fixed (inputs, config, seed).
int run_stage(const std::string& name, const PipelineConfig& config, std::ostream& out,
              std::ostream& err);

}  // namespace wuyun
