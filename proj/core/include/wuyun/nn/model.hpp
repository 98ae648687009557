#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "wuyun/errors.hpp"
#include "wuyun/memidi.hpp"
#include "wuyun/nn/config.hpp"
#include "wuyun/nn/tensor.hpp"

namespace wuyun::nn {

template <class T>
struct ParamStore {
    struct Entry {
        std::string name;
        Tensor<T> tensor;
    };
    std::vector<Entry> entries;
    std::mt19937_64 init_rng;

    explicit ParamStore(std::uint64_t seed = 0) : init_rng(seed) {}

    Tensor<T> normal(const std::string& name, int rows, int cols, double stddev = 0.02) {
        Tensor<T> t(rows, cols, true);
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& v : t.value()) v = T(dist(init_rng));
        entries.push_back({name, t});
        return t;
    }
    Tensor<T> zeros(const std::string& name, int rows, int cols) {
        Tensor<T> t(rows, cols, true);
        entries.push_back({name, t});
        return t;
    }
    Tensor<T> ones(const std::string& name, int rows, int cols) {
        Tensor<T> t(rows, cols, true);
        std::fill(t.value().begin(), t.value().end(), T(1));
        entries.push_back({name, t});
        return t;
    }

    size_t total_values() const {
        size_t n = 0;
        for (const auto& e : entries) n += e.tensor.numel();
        return n;
    }
    Tensor<T>* find(const std::string& name) {
        for (auto& e : entries)
            if (e.name == name) return &e.tensor;
        return nullptr;
    }
    void zero_grads() {
        for (auto& e : entries) {
            auto& g = e.tensor.grad();
            std::fill(g.begin(), g.end(), T(0));
        }
    }
    void fill_values(T v) {
        for (auto& e : entries) std::fill(e.tensor.value().begin(), e.tensor.value().end(), v);
    }
};

template <class T>
struct RunContext {
    bool train = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;

    Tensor<T> maybe_dropout(const Tensor<T>& x) const {
        if (!train || dropout <= 0 || rng == nullptr) return x;
        return nn::dropout(x, dropout, *rng);
    }
};

template <class T>
struct LinearLayer {
    Tensor<T> w, b;  // w: [in, out]
    Tensor<T> forward(const Tensor<T>& x) const { return add_bias(matmul(x, w), b); }
};

template <class T>
struct LayerNormLayer {
    Tensor<T> gamma, beta;
    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

/// Sinusoidal encoding rows for integer positions [begin, end).
template <class T>
Tensor<T> sinusoid_rows(int begin, int end, int d) {
    Tensor<T> out(end - begin, d);
    for (int p = begin; p < end; ++p)
        for (int i = 0; i < d; ++i) {
            const double angle = p / std::pow(10000.0, double(2 * (i / 2)) / d);
            out.value()[size_t(p - begin) * d + size_t(i)] =
                T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return out;
}

/// Multi-head attention. With `relative` set it uses the Transformer-XL
/// decomposition: (q+u)k^T content scores plus a shift-gathered (q+v)R^T
/// positional term; otherwise plain scaled dot product.
template <class T>
struct AttentionLayer {
    int n_heads = 1, d_model = 0, d_head = 0;
    LinearLayer<T> wq, wk, wv, wo;
    bool relative = false;
    Tensor<T> wr;       // [d_model, d_model]
    Tensor<T> u, vbias; // [1, d_model]

    /// q_in: [L, d]; kv_in: [mem_len + L, d] (mem rows first). rel_enc holds
    /// sinusoid rows for distances 0..mem_len+L-1 when relative.
    Tensor<T> forward(const Tensor<T>& q_in, const Tensor<T>& kv_in, bool causal, int mem_len,
                      const Tensor<T>& rel_enc, const RunContext<T>& ctx) const {
        const Tensor<T> q = wq.forward(q_in);
        const Tensor<T> k = wk.forward(kv_in);
        const Tensor<T> v = wv.forward(kv_in);
        const int key_len = kv_in.rows();
        Tensor<T> merged;
        for (int h = 0; h < n_heads; ++h) {
            const int c0 = h * d_head, c1 = (h + 1) * d_head;
            const Tensor<T> qh = slice_cols(q, c0, c1);
            const Tensor<T> kh = slice_cols(k, c0, c1);
            const Tensor<T> vh = slice_cols(v, c0, c1);
            Tensor<T> scores;
            if (relative) {
                const Tensor<T> qh_u = add_bias(qh, slice_cols(u, c0, c1));
                const Tensor<T> content = matmul(qh_u, kh, false, true);
                const Tensor<T> r_proj = matmul(rel_enc, slice_cols(wr, c0, c1));  // [Nd, dh]
                const Tensor<T> qh_v = add_bias(qh, slice_cols(vbias, c0, c1));
                const Tensor<T> pos_full = matmul(qh_v, r_proj, false, true);  // [L, Nd]
                scores = add(content, rel_shift(pos_full, mem_len, key_len));
            } else {
                scores = matmul(qh, kh, false, true);
            }
            scores = scale(scores, T(1.0 / std::sqrt(double(d_head))));
            if (causal) scores = causal_mask(scores, mem_len);
            Tensor<T> probs = ctx.maybe_dropout(softmax_rows(scores));
            const Tensor<T> oh = matmul(probs, vh);
            merged = merged.defined() ? concat_cols(merged, oh) : oh;
        }
        return ctx.maybe_dropout(wo.forward(merged));
    }
};

/// Pre-norm transformer block: x + attn(LN(mem|x)), then x + ff(LN(x)).
template <class T>
struct Block {
    LayerNormLayer<T> ln1, ln2;
    AttentionLayer<T> attn;
    LinearLayer<T> ff1, ff2;
    // cross attention (decoder blocks only)
    bool has_cross = false;
    LayerNormLayer<T> ln_cross;
    AttentionLayer<T> cross;

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& memory, bool causal,
                      const Tensor<T>& rel_enc, const Tensor<T>& enc_out,
                      const RunContext<T>& ctx) const {
        const int mem_len = memory.defined() ? memory.rows() : 0;
        const Tensor<T> full = mem_len > 0 ? concat_rows(memory, x) : x;
        const Tensor<T> normed = ln1.forward(full);
        const Tensor<T> q_in = mem_len > 0 ? slice_rows(normed, mem_len, normed.rows()) : normed;
        Tensor<T> h = add(x, attn.forward(q_in, normed, causal, mem_len, rel_enc, ctx));
        if (has_cross)
            h = add(h, cross.forward(ln_cross.forward(h), enc_out, false, 0, Tensor<T>(), ctx));
        const Tensor<T> f1 = relu(ff1.forward(ln2.forward(h)));
        return add(h, ctx.maybe_dropout(ff2.forward(ctx.maybe_dropout(f1))));
    }
};

template <class T>
struct HeadLogits {
    Tensor<T> type, tempo, pos, chord, pitch, velocity, duration;

    Tensor<T>& by_index(int i) {
        Tensor<T>* heads[] = {&type, &tempo, &pos, &chord, &pitch, &velocity, &duration};
        return *heads[i];
    }
};

inline constexpr std::array<const char*, 7> kHeadNames = {"type",  "tempo",    "pos",     "chord",
                                                          "pitch", "velocity", "duration"};

/// Summed per-field event embeddings (Fig.-S1 style input module): token kind
/// plus its attributes plus the broadcast tempo/bar/position side channels.
template <class T>
struct CompoundEmbedding {
    Tensor<T> kind, tempo, bar, pos, chord, pitch, velocity, duration;
    bool has_proj = false;
    LinearLayer<T> proj;

    Tensor<T> forward(const std::vector<ModelStep>& steps, const RunContext<T>& ctx) const {
        std::vector<int> kind_ids, tempo_ids, bar_ids, pos_ids, chord_ids, pitch_ids, vel_ids,
            dur_ids;
        for (const auto& s : steps) {
            kind_ids.push_back(s.kind);
            tempo_ids.push_back(s.tempo_ctx);
            bar_ids.push_back(s.bar_ctx);
            pos_ids.push_back(s.pos_ctx);
            chord_ids.push_back(s.chord);
            pitch_ids.push_back(s.pitch);
            vel_ids.push_back(s.velocity);
            dur_ids.push_back(s.duration);
        }
        Tensor<T> sum = embedding_rows(kind, kind_ids);
        sum = add(sum, embedding_rows(tempo, tempo_ids));
        sum = add(sum, embedding_rows(bar, bar_ids));
        sum = add(sum, embedding_rows(pos, pos_ids));
        sum = add(sum, embedding_rows(chord, chord_ids));
        sum = add(sum, embedding_rows(pitch, pitch_ids));
        sum = add(sum, embedding_rows(velocity, vel_ids));
        sum = add(sum, embedding_rows(duration, dur_ids));
        if (has_proj) sum = proj.forward(sum);
        return ctx.maybe_dropout(sum);
    }
};

/// Token-attribute prediction heads: a type head on the hidden state, then
/// attribute heads on [hidden ; E_kind(predicted type)].
template <class T>
struct OutputHeads {
    LinearLayer<T> type, tempo, pos, chord, pitch, velocity, duration;
    Tensor<T> kind_table;  // shared with the input embedding

    HeadLogits<T> forward(const Tensor<T>& hidden, const std::vector<int>& cond_kinds) const {
        HeadLogits<T> out;
        out.type = type.forward(hidden);
        const Tensor<T> cond = embedding_rows(kind_table, cond_kinds);
        const Tensor<T> hc = concat_cols(hidden, cond);
        out.tempo = tempo.forward(hc);
        out.pos = pos.forward(hc);
        out.chord = chord.forward(hc);
        out.pitch = pitch.forward(hc);
        out.velocity = velocity.forward(hc);
        out.duration = duration.forward(hc);
        return out;
    }
};

/// Detached per-layer hidden-state history: the XL segment memory for the LM
/// and the exact incremental cache for the seq2seq decoder.
template <class T>
struct LayerMemory {
    std::vector<std::vector<T>> layers;  // row-major [len, d_model]
    int len = 0;

    void update(int layer, const Tensor<T>& input, int d_model, int keep) {
        auto& buf = layers[size_t(layer)];
        const auto& v = input.value();
        buf.insert(buf.end(), v.begin(), v.end());
        const int have = int(buf.size()) / d_model;
        const int drop = std::max(0, have - keep);
        if (drop > 0) buf.erase(buf.begin(), buf.begin() + size_t(drop) * size_t(d_model));
        if (layer == 0) len = std::min(have, keep);
    }
    Tensor<T> tensor(int layer, int d_model) const {
        const auto& buf = layers[size_t(layer)];
        Tensor<T> t(int(buf.size()) / d_model, d_model);
        t.value() = buf;
        return t;
    }
};

namespace detail {

template <class T>
void build_block(ParamStore<T>& ps, Block<T>& b, const std::string& prefix, int d_model, int d_ff,
                 int n_heads, bool relative, bool with_cross) {
    auto linear = [&](LinearLayer<T>& l, const std::string& name, int in, int out) {
        l.w = ps.normal(prefix + name + ".w", in, out);
        l.b = ps.zeros(prefix + name + ".b", 1, out);
    };
    b.ln1.gamma = ps.ones(prefix + "ln1.g", 1, d_model);
    b.ln1.beta = ps.zeros(prefix + "ln1.b", 1, d_model);
    b.ln2.gamma = ps.ones(prefix + "ln2.g", 1, d_model);
    b.ln2.beta = ps.zeros(prefix + "ln2.b", 1, d_model);
    b.attn.n_heads = n_heads;
    b.attn.d_model = d_model;
    b.attn.d_head = d_model / n_heads;
    b.attn.relative = relative;
    linear(b.attn.wq, "attn.wq", d_model, d_model);
    linear(b.attn.wk, "attn.wk", d_model, d_model);
    linear(b.attn.wv, "attn.wv", d_model, d_model);
    linear(b.attn.wo, "attn.wo", d_model, d_model);
    if (relative) {
        b.attn.wr = ps.normal(prefix + "attn.wr", d_model, d_model);
        b.attn.u = ps.normal(prefix + "attn.u", 1, d_model);
        b.attn.vbias = ps.normal(prefix + "attn.v", 1, d_model);
    }
    linear(b.ff1, "ff1", d_model, d_ff);
    linear(b.ff2, "ff2", d_ff, d_model);
    b.has_cross = with_cross;
    if (with_cross) {
        b.ln_cross.gamma = ps.ones(prefix + "lnx.g", 1, d_model);
        b.ln_cross.beta = ps.zeros(prefix + "lnx.b", 1, d_model);
        b.cross.n_heads = n_heads;
        b.cross.d_model = d_model;
        b.cross.d_head = d_model / n_heads;
        linear(b.cross.wq, "cross.wq", d_model, d_model);
        linear(b.cross.wk, "cross.wk", d_model, d_model);
        linear(b.cross.wv, "cross.wv", d_model, d_model);
        linear(b.cross.wo, "cross.wo", d_model, d_model);
    }
}

template <class T>
void build_embedding(ParamStore<T>& ps, CompoundEmbedding<T>& e, const ModelConfig& cfg,
                     const Vocabulary& vocab) {
    const int d = cfg.d_embed;
    e.kind = ps.normal("embed.kind", Vocabulary::kind_count(), d);
    e.tempo = ps.normal("embed.tempo", Vocabulary::tempo_count(), d);
    e.bar = ps.normal("embed.bar", cfg.max_bar_embed, d);
    e.pos = ps.normal("embed.pos", vocab.position_count(), d);
    e.chord = ps.normal("embed.chord", Vocabulary::chord_count(), d);
    e.pitch = ps.normal("embed.pitch", Vocabulary::pitch_count(), d);
    e.velocity = ps.normal("embed.velocity", Vocabulary::velocity_count(), d);
    e.duration = ps.normal("embed.duration", vocab.duration_count(), d);
    e.has_proj = cfg.d_embed != cfg.d_model;
    if (e.has_proj) {
        e.proj.w = ps.normal("embed.proj.w", cfg.d_embed, cfg.d_model);
        e.proj.b = ps.zeros("embed.proj.b", 1, cfg.d_model);
    }
}

/// Output heads start at zero so an untrained model emits uniform logits.
template <class T>
void build_heads(ParamStore<T>& ps, OutputHeads<T>& h, const CompoundEmbedding<T>& e,
                 const ModelConfig& cfg, const Vocabulary& vocab) {
    const int d = cfg.d_model, dc = cfg.d_model + cfg.d_embed;
    auto head = [&](LinearLayer<T>& l, const std::string& name, int in, int out) {
        l.w = ps.zeros("head." + name + ".w", in, out);
        l.b = ps.zeros("head." + name + ".b", 1, out);
    };
    head(h.type, "type", d, Vocabulary::kind_count());
    head(h.tempo, "tempo", dc, Vocabulary::tempo_count());
    head(h.pos, "pos", dc, vocab.position_count());
    head(h.chord, "chord", dc, Vocabulary::chord_count());
    head(h.pitch, "pitch", dc, Vocabulary::pitch_count());
    head(h.velocity, "velocity", dc, Vocabulary::velocity_count());
    head(h.duration, "duration", dc, vocab.duration_count());
    h.kind_table = e.kind;
}

}  // namespace detail

/// Decoder-only memory transformer for melodic-skeleton sequence learning.
template <class T>
class SkeletonLm {
  public:
    SkeletonLm(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t init_seed = 0)
        : cfg_(cfg), params_(init_seed) {
        cfg.validate();
        if (cfg.role != ModelRole::SkeletonLM) throw ConfigError("config role is not SkeletonLM");
        detail::build_embedding(params_, embed_, cfg, vocab);
        blocks_.resize(size_t(cfg.n_layers));
        for (int l = 0; l < cfg.n_layers; ++l)
            detail::build_block(params_, blocks_[size_t(l)], "lm.layer" + std::to_string(l) + ".",
                                cfg.d_model, cfg.d_ff, cfg.n_heads, /*relative=*/true,
                                /*with_cross=*/false);
        ln_f_.gamma = params_.ones("lm.lnf.g", 1, cfg.d_model);
        ln_f_.beta = params_.zeros("lm.lnf.b", 1, cfg.d_model);
        detail::build_heads(params_, heads_, embed_, cfg, vocab);
    }

    LayerMemory<T> make_memory() const {
        LayerMemory<T> m;
        m.layers.resize(size_t(cfg_.n_layers));
        return m;
    }

    /// Causal forward over `steps` given (and updating) the segment memory.
    Tensor<T> hidden_forward(const std::vector<ModelStep>& steps, LayerMemory<T>* memory,
                             const RunContext<T>& ctx) const {
        if (int(steps.size()) > cfg_.context_len)
            throw ShapeMismatch("input length exceeds context_len");
        Tensor<T> h = embed_.forward(steps, ctx);
        const int mem_len = memory ? memory->len : 0;
        const Tensor<T> rel_enc = sinusoid_rows<T>(0, mem_len + int(steps.size()), cfg_.d_model);
        for (int l = 0; l < cfg_.n_layers; ++l) {
            Tensor<T> mem_t;
            if (memory && memory->len > 0) mem_t = memory->tensor(l, cfg_.d_model);
            if (memory) memory->update(l, h, cfg_.d_model, cfg_.memory_len);
            h = blocks_[size_t(l)].forward(h, mem_t, /*causal=*/true, rel_enc, Tensor<T>(), ctx);
        }
        return ln_f_.forward(h);
    }

    HeadLogits<T> forward(const std::vector<ModelStep>& steps, const std::vector<int>& cond_kinds,
                          LayerMemory<T>* memory, const RunContext<T>& ctx) const {
        return heads_.forward(hidden_forward(steps, memory, ctx), cond_kinds);
    }

    // parameters are shared handles; copying a model would alias them
    SkeletonLm(const SkeletonLm&) = delete;
    SkeletonLm& operator=(const SkeletonLm&) = delete;
    SkeletonLm(SkeletonLm&&) = default;

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const OutputHeads<T>& heads() const { return heads_; }

  private:
    ModelConfig cfg_;
    ParamStore<T> params_;
    CompoundEmbedding<T> embed_;
    std::vector<Block<T>> blocks_;
    LayerNormLayer<T> ln_f_;
    OutputHeads<T> heads_;
};

/// Encoder-decoder transformer: bidirectional encoder over the skeleton
/// sequence, causal decoder with cross attention for melody inpainting.
/// Encoder and decoder share the compound embedding tables.
template <class T>
class InpaintModel {
  public:
    InpaintModel(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t init_seed = 0)
        : cfg_(cfg), params_(init_seed) {
        cfg.validate();
        if (cfg.role != ModelRole::InpaintSeq2Seq)
            throw ConfigError("config role is not InpaintSeq2Seq");
        detail::build_embedding(params_, embed_, cfg, vocab);
        enc_.resize(size_t(cfg.n_layers));
        dec_.resize(size_t(cfg.n_layers));
        for (int l = 0; l < cfg.n_layers; ++l) {
            detail::build_block(params_, enc_[size_t(l)], "enc.layer" + std::to_string(l) + ".",
                                cfg.d_model, cfg.d_ff, cfg.n_heads, false, false);
            detail::build_block(params_, dec_[size_t(l)], "dec.layer" + std::to_string(l) + ".",
                                cfg.d_model, cfg.d_ff, cfg.n_heads, false, true);
        }
        enc_ln_.gamma = params_.ones("enc.lnf.g", 1, cfg.d_model);
        enc_ln_.beta = params_.zeros("enc.lnf.b", 1, cfg.d_model);
        dec_ln_.gamma = params_.ones("dec.lnf.g", 1, cfg.d_model);
        dec_ln_.beta = params_.zeros("dec.lnf.b", 1, cfg.d_model);
        detail::build_heads(params_, heads_, embed_, cfg, vocab);
    }

    Tensor<T> encode(const std::vector<ModelStep>& skeleton, const RunContext<T>& ctx) const {
        if (skeleton.empty()) throw EmptySkeleton("encoder input is empty");
        Tensor<T> h = add(embed_.forward(skeleton, ctx),
                          sinusoid_rows<T>(0, int(skeleton.size()), cfg_.d_model));
        for (const auto& block : enc_)
            h = block.forward(h, Tensor<T>(), /*causal=*/false, Tensor<T>(), Tensor<T>(), ctx);
        return enc_ln_.forward(h);
    }

    LayerMemory<T> make_memory() const {
        LayerMemory<T> m;
        m.layers.resize(size_t(cfg_.n_layers));
        return m;
    }

    /// Causal decode of `melody` steps attending to `enc_out`. `cache`, when
    /// given, carries the earlier decoder prefix so incremental decoding is
    /// exact (absolute positions offset by the cached length).
    Tensor<T> decode_hidden(const std::vector<ModelStep>& melody, const Tensor<T>& enc_out,
                            LayerMemory<T>* cache, int cache_limit,
                            const RunContext<T>& ctx) const {
        const int offset = cache ? cache->len : 0;
        Tensor<T> h = add(embed_.forward(melody, ctx),
                          sinusoid_rows<T>(offset, offset + int(melody.size()), cfg_.d_model));
        for (int l = 0; l < cfg_.n_layers; ++l) {
            Tensor<T> mem_t;
            if (cache && cache->len > 0) mem_t = cache->tensor(l, cfg_.d_model);
            if (cache) cache->update(l, h, cfg_.d_model, cache_limit);
            h = dec_[size_t(l)].forward(h, mem_t, /*causal=*/true, Tensor<T>(), enc_out, ctx);
        }
        return dec_ln_.forward(h);
    }

    HeadLogits<T> forward(const std::vector<ModelStep>& skeleton,
                          const std::vector<ModelStep>& melody,
                          const std::vector<int>& cond_kinds, const RunContext<T>& ctx) const {
        const Tensor<T> enc_out = encode(skeleton, ctx);
        return heads_.forward(decode_hidden(melody, enc_out, nullptr, 0, ctx), cond_kinds);
    }

    InpaintModel(const InpaintModel&) = delete;
    InpaintModel& operator=(const InpaintModel&) = delete;
    InpaintModel(InpaintModel&&) = default;

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const OutputHeads<T>& heads() const { return heads_; }

  private:
    ModelConfig cfg_;
    ParamStore<T> params_;
    CompoundEmbedding<T> embed_;
    std::vector<Block<T>> enc_, dec_;
    LayerNormLayer<T> enc_ln_, dec_ln_;
    OutputHeads<T> heads_;
};

/// Closed-form parameter count for a config; tested against the live stores.
size_t expected_param_count(const ModelConfig& cfg, const Vocabulary& vocab);

}  // namespace wuyun::nn
