#include "wuyun/nn/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "wuyun/nn/loss.hpp"
#include "wuyun/skeleton.hpp"
#include "wuyun/synth.hpp"

namespace wuyun::nn {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x2545f4914f6cdd1dull;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 29;
    return x;
}

/// Chunked LM forward with memory carry, accumulating into `acc`.
void lm_sequence_loss(const SkeletonLm<float>& model, const Vocabulary& vocab,
                      const MeMidiSequence& seq, LossAccumulator<float>& acc,
                      std::mt19937_64& dropout_rng, bool train_mode) {
    const auto& cfg = model.config();
    const auto steps = lm_input_steps(seq.tokens, vocab, cfg.max_bar_embed);
    const auto targets = make_targets(seq.tokens, vocab);
    RunContext<float> ctx{train_mode, train_mode ? cfg.dropout_rate : 0.0, &dropout_rng};
    auto memory = model.make_memory();
    for (size_t begin = 0; begin < steps.size(); begin += size_t(cfg.context_len)) {
        const size_t end = std::min(steps.size(), begin + size_t(cfg.context_len));
        const std::vector<ModelStep> chunk(steps.begin() + long(begin), steps.begin() + long(end));
        const HeadTargets chunk_targets = targets.slice(begin, end);
        const auto logits = model.forward(chunk, chunk_targets.cond_kinds, &memory, ctx);
        acc.add(logits, chunk_targets);
    }
}

void seq2seq_pair_loss(const InpaintModel<float>& model, const Vocabulary& vocab,
                       const MeMidiSequence& skeleton, const MeMidiSequence& melody,
                       LossAccumulator<float>& acc, std::mt19937_64& dropout_rng,
                       bool train_mode) {
    const auto& cfg = model.config();
    RunContext<float> ctx{train_mode, train_mode ? cfg.dropout_rate : 0.0, &dropout_rng};
    const auto skel_steps = encode_steps(skeleton.tokens, vocab, cfg.max_bar_embed);
    const auto mel_steps = lm_input_steps(melody.tokens, vocab, cfg.max_bar_embed);
    const auto targets = make_targets(melody.tokens, vocab);
    const auto logits = model.forward(skel_steps, mel_steps, targets.cond_kinds, ctx);
    acc.add(logits, targets);
}

struct BatchPlan {
    std::vector<size_t> order;
    size_t cursor = 0;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;

    explicit BatchPlan(size_t n, std::uint64_t s) : seed(s) {
        order.resize(n);
        std::iota(order.begin(), order.end(), size_t{0});
        reshuffle();
    }
    void reshuffle() {
        std::mt19937_64 rng(mix(seed, epoch++));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
    }
    size_t next() {
        if (cursor >= order.size()) reshuffle();
        return order[cursor++];
    }
};

template <class LossFn>
TrainResult run_training(ParamStore<float>& params, size_t corpus_size, const TrainConfig& config,
                         std::ostream* csv, LossFn&& sequence_loss) {
    if (corpus_size == 0) throw ConfigError("empty training corpus");
    TrainResult result;
    Adam<float> adam(params, config.lr, config.beta1, config.beta2, config.adam_eps);
    BatchPlan plan(corpus_size, config.seed);
    if (csv) *csv << "step,loss,accuracy,tokens_per_sec\n";

    auto window_start = std::chrono::steady_clock::now();
    long window_tokens = 0;

    for (long step = 0; step < config.steps; ++step) {
        std::vector<size_t> batch;
        for (int i = 0; i < config.batch_size; ++i) batch.push_back(plan.next());

        const int workers = std::max(1, config.n_workers);
        std::vector<LossAccumulator<float>> accs(static_cast<size_t>(workers));
        auto run_shard = [&](int w) {
            for (size_t i = size_t(w); i < batch.size(); i += size_t(workers)) {
                std::mt19937_64 dropout_rng(mix(mix(config.seed, std::uint64_t(step)), i));
                sequence_loss(batch[i], accs[size_t(w)], dropout_rng);
            }
        };
        if (workers == 1) {
            run_shard(0);
        } else {
            std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    try { run_shard(w); } catch (...) { errors[size_t(w)] = std::current_exception(); }
                });
            for (auto& t : pool) t.join();
            for (const auto& e : errors)
                if (e) std::rethrow_exception(e);
        }
        // merge in fixed worker order, then a single serial backward
        LossAccumulator<float> acc;
        for (auto& a : accs) {
            for (int h = 0; h < 7; ++h) {
                if (!a.sums[size_t(h)].defined()) continue;
                acc.sums[size_t(h)] = acc.sums[size_t(h)].defined()
                                          ? add(acc.sums[size_t(h)], a.sums[size_t(h)])
                                          : a.sums[size_t(h)];
                acc.counts[size_t(h)] += a.counts[size_t(h)];
            }
            acc.correct += a.correct;
            acc.predictions += a.predictions;
            acc.tokens += a.tokens;
        }
        const Tensor<float> loss = acc.total();
        if (!loss.defined()) throw ConfigError("batch produced no active targets");
        const double loss_value = double(loss.scalar());
        if (!std::isfinite(loss_value))
            throw NonFiniteLoss("loss became " + std::to_string(loss_value) + " at step " +
                                std::to_string(step));
        params.zero_grads();
        loss.backward();
        adam.step(params);

        window_tokens += acc.tokens;
        const bool last = step + 1 == config.steps;
        if (csv && (step % std::max(1, config.log_every) == 0 || last)) {
            const auto now = std::chrono::steady_clock::now();
            const double secs = std::chrono::duration<double>(now - window_start).count();
            const double tps = secs > 0 ? double(window_tokens) / secs : 0;
            char line[128];
            std::snprintf(line, sizeof line, "%ld,%.6f,%.4f,%.0f\n", step, loss_value,
                          acc.accuracy(), tps);
            *csv << line;
            window_start = now;
            window_tokens = 0;
        }
        result.curve.push_back({step, loss_value, acc.accuracy(), 0});
        result.final_loss = loss_value;
        result.final_accuracy = acc.accuracy();
        if (config.checkpoint_hook && config.checkpoint_every > 0 &&
            (step + 1) % config.checkpoint_every == 0)
            config.checkpoint_hook(step + 1);
    }
    return result;
}

}  // namespace

TrainResult train_lm(SkeletonLm<float>& model, const std::vector<MeMidiSequence>& corpus,
                     const Vocabulary& vocab, const TrainConfig& config,
                     std::ostream* progress_csv) {
    return run_training(model.params(), corpus.size(), config, progress_csv,
                        [&](size_t idx, LossAccumulator<float>& acc, std::mt19937_64& rng) {
                            lm_sequence_loss(model, vocab, corpus[idx], acc, rng, true);
                        });
}

TrainResult train_seq2seq(InpaintModel<float>& model,
                          const std::vector<std::pair<MeMidiSequence, MeMidiSequence>>& pairs,
                          const Vocabulary& vocab, const TrainConfig& config,
                          std::ostream* progress_csv) {
    std::vector<const std::pair<MeMidiSequence, MeMidiSequence>*> usable;
    long skipped = 0;
    const int limit = model.config().context_len;
    for (const auto& p : pairs) {
        if (int(p.first.tokens.size()) > limit || int(p.second.tokens.size()) + 1 > limit)
            ++skipped;
        else
            usable.push_back(&p);
    }
    auto result = run_training(model.params(), usable.size(), config, progress_csv,
                               [&](size_t idx, LossAccumulator<float>& acc, std::mt19937_64& rng) {
                                   seq2seq_pair_loss(model, vocab, usable[idx]->first,
                                                     usable[idx]->second, acc, rng, true);
                               });
    result.skipped_too_long = skipped;
    return result;
}

namespace {

template <class Model, class LossFn>
GradCheckResult check_params(Model& model, LossFn&& loss_fn, std::uint64_t seed,
                             int sample_params) {
    // jitter every parameter: the zero-initialized output heads would
    // otherwise block all gradient flow into the transformer body
    std::mt19937_64 init_rng(mix(seed, 0x515c0));
    std::normal_distribution<double> jitter(0.0, 0.05);
    for (auto& e : model.params().entries)
        for (auto& v : e.tensor.value()) v += jitter(init_rng);

    // analytic gradients once, dropout off
    model.params().zero_grads();
    const Tensor<double> loss = loss_fn();
    loss.backward();

    struct Coord { size_t entry, index; double analytic; };
    std::vector<Coord> live, dead;
    auto& entries = model.params().entries;
    for (size_t e = 0; e < entries.size(); ++e) {
        const auto& g = entries[e].tensor.grad();
        for (size_t i = 0; i < g.size(); ++i) {
            // below ~1e-6 the comparison is limited by cancellation noise in
            // the difference quotient, not by gradient correctness
            if (std::abs(g[i]) > 1e-6) live.push_back({e, i, g[i]});
            else dead.push_back({e, i, g[i]});
        }
    }
    std::mt19937_64 rng(mix(seed, 0xabcdefull));
    std::shuffle(live.begin(), live.end(), rng);
    std::shuffle(dead.begin(), dead.end(), rng);
    std::vector<Coord> picked(live.begin(),
                              live.begin() + long(std::min(live.size(), size_t(sample_params))));
    // a few zero-gradient coordinates keep the dead paths honest
    picked.insert(picked.end(), dead.begin(),
                  dead.begin() + long(std::min(dead.size(), size_t(sample_params / 10))));

    GradCheckResult result;
    NoGradGuard guard;
    for (const auto& c : picked) {
        auto& value = entries[c.entry].tensor.value()[c.index];
        const double saved = value;
        // the fd error is U-shaped in the step size, and a ReLU kink inside
        // the probe interval spoils wide steps; probe several and keep the
        // best-resolved quotient
        double rel = 1e300;
        double best_numeric = 0;
        for (const double base : {1e-6, 1e-5, 1e-4, 1e-3}) {
            const double h = base * std::max(1.0, std::abs(saved));
            value = saved + h;
            const double up = loss_fn().scalar();
            value = saved - h;
            const double down = loss_fn().scalar();
            value = saved;
            const double numeric = (up - down) / (2 * h);
            const double r = std::abs(c.analytic - numeric) /
                             (std::abs(c.analytic) + std::abs(numeric) + 1e-12);
            if (r < rel) {
                rel = r;
                best_numeric = numeric;
            }
        }
        ++result.checked;
        // both sides at the noise floor: a dead parameter, nothing to compare
        if (std::max(std::abs(c.analytic), std::abs(best_numeric)) < 1e-8) continue;
        result.max_rel_err = std::max(result.max_rel_err, rel);
    }
    return result;
}

}  // namespace

GradCheckResult grad_check(const ModelConfig& config, std::uint64_t seed, int sample_params) {
    const Vocabulary vocab = Vocabulary::build();
    if (config.role == ModelRole::SkeletonLM) {
        SkeletonLm<double> model(config, vocab, mix(seed, 1));
        std::vector<MeMidiSequence> data;
        for (int i = 0; i < 2; ++i)
            data.push_back(tokenize(synthetic_clean_score(mix(seed, 100 + std::uint64_t(i)), 2),
                                    /*skeleton_only=*/true));
        auto loss_fn = [&] {
            LossAccumulator<double> acc;
            RunContext<double> ctx{false, 0.0, nullptr};
            for (const auto& seq : data) {
                const auto steps = lm_input_steps(seq.tokens, vocab, model.config().max_bar_embed);
                const auto targets = make_targets(seq.tokens, vocab);
                auto memory = model.make_memory();
                acc.add(model.forward(steps, targets.cond_kinds, &memory, ctx), targets);
            }
            return acc.total();
        };
        return check_params(model, loss_fn, seed, sample_params);
    }
    InpaintModel<double> model(config, vocab, mix(seed, 2));
    std::vector<std::pair<MeMidiSequence, MeMidiSequence>> data;
    for (int i = 0; i < 2; ++i) {
        const auto score = synthetic_clean_score(mix(seed, 200 + std::uint64_t(i)), 2);
        std::vector<bool> mask(score.notes.size());
        for (size_t j = 0; j < mask.size(); ++j) mask[j] = j % 2 == 0;
        data.emplace_back(tokenize(apply_mask(score, mask), true), tokenize(score, false));
    }
    auto loss_fn = [&] {
        LossAccumulator<double> acc;
        RunContext<double> ctx{false, 0.0, nullptr};
        for (const auto& [skel, mel] : data) {
            const auto skel_steps = encode_steps(skel.tokens, vocab, model.config().max_bar_embed);
            const auto mel_steps = lm_input_steps(mel.tokens, vocab, model.config().max_bar_embed);
            const auto targets = make_targets(mel.tokens, vocab);
            acc.add(model.forward(skel_steps, mel_steps, targets.cond_kinds, ctx), targets);
        }
        return acc.total();
    };
    return check_params(model, loss_fn, seed, sample_params);
}

}  // namespace wuyun::nn
