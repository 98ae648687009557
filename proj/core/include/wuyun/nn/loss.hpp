#pragma once

#include <array>

#include "wuyun/memidi.hpp"
#include "wuyun/nn/model.hpp"
#include "wuyun/nn/tensor.hpp"

namespace wuyun::nn {

/// Next-token targets per output head, aligned with the teacher-forced input
/// steps (BOS + tokens[:-1]); -1 marks a head inactive at that step.
struct HeadTargets {
    std::array<std::vector<int>, 7> heads;  // kHeadNames order
    std::vector<int>& kind() { return heads[0]; }
    const std::vector<int>& by_index(int i) const { return heads[size_t(i)]; }
    std::vector<int> cond_kinds;  // target kinds, condition the attribute heads

    HeadTargets slice(size_t begin, size_t end) const {
        HeadTargets out;
        for (int i = 0; i < 7; ++i)
            out.heads[size_t(i)].assign(heads[size_t(i)].begin() + long(begin),
                                        heads[size_t(i)].begin() + long(end));
        out.cond_kinds.assign(cond_kinds.begin() + long(begin), cond_kinds.begin() + long(end));
        return out;
    }
};

HeadTargets make_targets(const std::vector<Token>& tokens, const Vocabulary& vocab);

/// Teacher-forced input for next-token prediction: BOS then tokens[0..n-2].
std::vector<ModelStep> lm_input_steps(const std::vector<Token>& tokens, const Vocabulary& vocab,
                                      int max_bar_embed);

/// Accumulates per-head cross-entropy sums/counts across chunks and batch
/// entries. The reported loss is the sum over heads of each head's mean CE,
/// so a uniform model scores sum_h ln|vocab_h| over the heads present.
template <class T>
struct LossAccumulator {
    std::array<Tensor<T>, 7> sums;
    std::array<long, 7> counts{};
    long correct = 0;
    long predictions = 0;
    long tokens = 0;

    void add(const HeadLogits<T>& logits, const HeadTargets& targets) {
        const HeadLogits<T>& l = logits;
        const Tensor<T>* tensors[7] = {&l.type,  &l.tempo,    &l.pos,     &l.chord,
                                       &l.pitch, &l.velocity, &l.duration};
        tokens += long(targets.by_index(0).size());
        for (int h = 0; h < 7; ++h) {
            const auto& tgt = targets.by_index(h);
            long active = 0;
            for (const int t : tgt)
                if (t >= 0) ++active;
            if (active == 0) continue;
            Tensor<T> ce = cross_entropy_mean(*tensors[h], tgt);
            Tensor<T> sum = scale(ce, T(active));
            sums[size_t(h)] = sums[size_t(h)].defined() ? nn::add(sums[size_t(h)], sum) : sum;
            counts[size_t(h)] += active;

            const auto& values = tensors[h]->value();
            const int v = tensors[h]->cols();
            for (size_t r = 0; r < tgt.size(); ++r) {
                if (tgt[r] < 0) continue;
                const T* row = values.data() + r * size_t(v);
                int best = 0;
                for (int c = 1; c < v; ++c)
                    if (row[c] > row[best]) best = c;
                correct += best == tgt[r];
                ++predictions;
            }
        }
    }

    Tensor<T> total() const {
        Tensor<T> out;
        for (int h = 0; h < 7; ++h) {
            if (counts[size_t(h)] == 0) continue;
            Tensor<T> mean = scale(sums[size_t(h)], T(1) / T(counts[size_t(h)]));
            out = out.defined() ? nn::add(out, mean) : mean;
        }
        return out;
    }

    double accuracy() const { return predictions ? double(correct) / double(predictions) : 0.0; }
};

}  // namespace wuyun::nn
