#include "wuyun/nn/config.hpp"

#include <json.hpp>

#include "wuyun/errors.hpp"

namespace wuyun::nn {

using nlohmann::json;

ModelConfig ModelConfig::lm_paper() { return ModelConfig{}; }

ModelConfig ModelConfig::lm_test() {
    ModelConfig c;
    c.role = ModelRole::SkeletonLM;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 64;
    c.d_ff = 256;
    c.d_embed = 64;
    c.context_len = 256;
    c.memory_len = 128;
    c.dropout_rate = 0.1;
    return c;
}

ModelConfig ModelConfig::seq2seq_paper() {
    ModelConfig c;
    c.role = ModelRole::InpaintSeq2Seq;
    c.n_layers = 4;
    c.n_heads = 4;
    c.d_model = 256;
    c.d_ff = 1024;
    c.d_embed = 256;
    c.context_len = 512;
    c.memory_len = 0;
    return c;
}

ModelConfig ModelConfig::seq2seq_test() {
    ModelConfig c = lm_test();
    c.role = ModelRole::InpaintSeq2Seq;
    c.memory_len = 0;
    return c;
}

void ModelConfig::validate() const {
    if (n_layers < 0 || n_heads < 1 || d_model < 1 || d_ff < 1 || d_embed < 1)
        throw ConfigError("model dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (memory_len < 0) throw ConfigError("memory_len must be >= 0");
    if (context_len < 1) throw ConfigError("context_len must be >= 1");
    if (dropout_rate < 0 || dropout_rate >= 1) throw ConfigError("dropout_rate must be in [0,1)");
    if (max_bar_embed < 2) throw ConfigError("max_bar_embed must be >= 2");
}

std::string ModelConfig::to_json() const {
    json j;
    j["role"] = role == ModelRole::SkeletonLM ? "skeleton_lm" : "inpaint_seq2seq";
    j["n_layers"] = n_layers;
    j["n_heads"] = n_heads;
    j["d_model"] = d_model;
    j["d_ff"] = d_ff;
    j["d_embed"] = d_embed;
    j["context_len"] = context_len;
    j["memory_len"] = memory_len;
    j["dropout_rate"] = dropout_rate;
    j["max_bar_embed"] = max_bar_embed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config JSON: ") + e.what());
    }
    ModelConfig c;
    const std::string role = j.value("role", "skeleton_lm");
    if (role == "skeleton_lm") c.role = ModelRole::SkeletonLM;
    else if (role == "inpaint_seq2seq") c.role = ModelRole::InpaintSeq2Seq;
    else throw ConfigError("unknown model role " + role);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_model = j.value("d_model", c.d_model);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.d_embed = j.value("d_embed", c.d_embed);
    c.context_len = j.value("context_len", c.context_len);
    c.memory_len = j.value("memory_len", c.memory_len);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.max_bar_embed = j.value("max_bar_embed", c.max_bar_embed);
    c.validate();
    return c;
}

}  // namespace wuyun::nn
