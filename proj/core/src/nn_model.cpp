#include "wuyun/nn/model.hpp"

namespace wuyun::nn {

size_t expected_param_count(const ModelConfig& cfg, const Vocabulary& vocab) {
    const size_t d = size_t(cfg.d_model), de = size_t(cfg.d_embed), ff = size_t(cfg.d_ff);
    size_t total = 0;
    total += de * size_t(Vocabulary::kind_count() + Vocabulary::tempo_count() +
                         cfg.max_bar_embed + vocab.position_count() + Vocabulary::chord_count() +
                         Vocabulary::pitch_count() + Vocabulary::velocity_count() +
                         vocab.duration_count());
    if (de != d) total += de * d + d;

    const auto attn = [&](bool relative) {
        size_t n = 4 * (d * d + d);        // wq wk wv wo with biases
        if (relative) n += d * d + 2 * d;  // wr, u, v
        return n;
    };
    const auto block = [&](bool relative, bool cross) {
        size_t n = 2 * (2 * d) + attn(relative) + (d * ff + ff) + (ff * d + d);
        if (cross) n += 2 * d + attn(false);
        return n;
    };
    if (cfg.role == ModelRole::SkeletonLM)
        total += size_t(cfg.n_layers) * block(true, false) + 2 * d;
    else
        total += size_t(cfg.n_layers) * (block(false, false) + block(false, true)) + 2 * (2 * d);

    const size_t dc = d + de;
    total += d * size_t(Vocabulary::kind_count()) + size_t(Vocabulary::kind_count());
    const int attr_sizes[] = {Vocabulary::tempo_count(),    vocab.position_count(),
                              Vocabulary::chord_count(),    Vocabulary::pitch_count(),
                              Vocabulary::velocity_count(), vocab.duration_count()};
    for (const int v : attr_sizes) total += dc * size_t(v) + size_t(v);
    return total;
}

}  // namespace wuyun::nn
