#include "wuyun/nn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "wuyun/errors.hpp"

namespace wuyun::nn {

namespace {

struct PickResult {
    int id = 0;
    bool fallback = false;
    bool in_topk = true;
};

PickResult pick(const std::vector<float>& logits, const std::vector<int>& legal,
                const SamplerConfig& cfg, std::mt19937_64& rng) {
    if (legal.empty()) throw ConstraintViolation("no grammar-legal symbol to sample");
    if (!(cfg.temperature > 0)) throw ConfigError("temperature must be > 0");
    const int k = std::min<int>(std::max(1, cfg.top_k), int(logits.size()));
    std::vector<int> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        return logits[size_t(a)] != logits[size_t(b)] ? logits[size_t(a)] > logits[size_t(b)]
                                                      : a < b;
    });
    std::vector<char> in_topk(logits.size(), 0);
    for (int i = 0; i < k; ++i) in_topk[size_t(order[size_t(i)])] = 1;

    PickResult result;
    std::vector<int> candidates;
    for (const int id : legal)
        if (in_topk[size_t(id)]) candidates.push_back(id);
    if (candidates.empty()) {
        // grammar fallback: top-k re-applied within the legal set, so k=1
        // stays greedy even when the raw argmax is illegal
        result.fallback = true;
        candidates = legal;
        const size_t keep = size_t(std::min<int>(k, int(candidates.size())));
        std::partial_sort(candidates.begin(), candidates.begin() + long(keep), candidates.end(),
                          [&](int a, int b) {
                              return logits[size_t(a)] != logits[size_t(b)]
                                         ? logits[size_t(a)] > logits[size_t(b)]
                                         : a < b;
                          });
        candidates.resize(keep);
        std::sort(candidates.begin(), candidates.end());
    }

    double mx = -1e300;
    for (const int id : candidates) mx = std::max(mx, double(logits[size_t(id)]));
    std::vector<double> weights;
    weights.reserve(candidates.size());
    double z = 0;
    for (const int id : candidates)
        z += weights.emplace_back(std::exp((double(logits[size_t(id)]) - mx) / cfg.temperature));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    double r = uniform(rng) * z;
    size_t chosen = candidates.size() - 1;
    for (size_t i = 0; i < candidates.size(); ++i) {
        r -= weights[i];
        if (r <= 0) { chosen = i; break; }
    }
    result.id = candidates[chosen];
    result.in_topk = in_topk[size_t(result.id)] != 0;
    return result;
}

/// Legality tracking mirroring the detokenize grammar.
struct GrammarState {
    enum class S { Start, AfterTempo, InBar, AfterPos, AfterChord };
    S s = S::Start;
    int bars = 0;
    int last_pos = -1;
    bool skeleton_mode = false;
    bool chords_allowed = true;
    int max_bars = 28;

    const Vocabulary* vocab = nullptr;

    bool pos_available() const {
        return s != S::Start && bars > 0 && last_pos < vocab->positions.back();
    }

    std::vector<int> legal_kinds(bool allow_eos = true) const {
        std::vector<int> out;
        switch (s) {
            case S::Start:
                out.push_back(int(TokenKind::Tempo));
                break;
            case S::AfterTempo:
                if (bars < max_bars) out.push_back(int(TokenKind::Bar));
                if (allow_eos) out.push_back(int(TokenKind::Eos));
                break;
            case S::InBar:
            case S::AfterChord:
                if (pos_available()) out.push_back(int(TokenKind::Pos));
                if (bars < max_bars) out.push_back(int(TokenKind::Bar));
                if (allow_eos) out.push_back(int(TokenKind::Eos));
                break;
            case S::AfterPos:
                if (!skeleton_mode && chords_allowed) out.push_back(int(TokenKind::Chord));
                out.push_back(int(TokenKind::Note));
                break;
        }
        return out;
    }

    std::vector<int> legal_position_ids(int below_tick = 1 << 30) const {
        std::vector<int> out;
        for (int id = 0; id < vocab->position_count(); ++id) {
            const int tick = vocab->position_at(id);
            if (tick > last_pos && tick < below_tick) out.push_back(id);
        }
        return out;
    }

    std::vector<int> legal_duration_ids(int pos_tick) const {
        const bool straight_ok = pos_tick % kStraightUnit == 0;
        const bool triplet_ok = pos_tick % kTripletUnit == 0;
        std::vector<int> out;
        for (int id = 0; id < vocab->duration_count(); ++id) {
            const int d = vocab->duration_at(id);
            const bool is_triplet = std::find(kTripletDurations.begin(), kTripletDurations.end(),
                                              d) != kTripletDurations.end();
            if ((is_triplet && triplet_ok) || (!is_triplet && straight_ok)) out.push_back(id);
        }
        return out;
    }

    void advance(const Token& t) {
        switch (t.kind) {
            case TokenKind::Bos: return;
            case TokenKind::Tempo: s = S::AfterTempo; return;
            case TokenKind::Bar: ++bars; last_pos = -1; s = S::InBar; return;
            case TokenKind::Pos: last_pos = t.pos; s = S::AfterPos; return;
            case TokenKind::Chord: s = S::AfterChord; return;
            case TokenKind::Note: s = S::InBar; return;
            default: return;
        }
    }
};

std::vector<int> all_ids(int n) {
    std::vector<int> out(static_cast<size_t>(n));
    std::iota(out.begin(), out.end(), 0);
    return out;
}

/// One model step: sample the type from the grammar-legal kinds, then the
/// active attribute heads conditioned on it.
template <class HiddenRowLogits>
Token sample_token(const HiddenRowLogits& head_logits_for, const GrammarState& gs,
                   const Vocabulary& vocab, const SamplerConfig& cfg, std::mt19937_64& rng,
                   SampleAudit* audit, const std::vector<int>& legal_kinds) {
    auto note_draw = [&](const std::vector<float>& logits, const std::vector<int>& legal) {
        const PickResult r = pick(logits, legal, cfg, rng);
        if (audit) {
            ++audit->draws;
            audit->fallbacks += r.fallback;
            audit->outside_topk += !r.in_topk;
        }
        return r.id;
    };
    const int kind = note_draw(head_logits_for(0, -1), legal_kinds);
    switch (TokenKind(kind)) {
        case TokenKind::Tempo:
            return Token::make_tempo(TempoClass(note_draw(head_logits_for(1, kind), all_ids(3))));
        case TokenKind::Bar:
            return Token::bar();
        case TokenKind::Eos:
            return Token::eos();
        case TokenKind::Pos: {
            const int id = note_draw(head_logits_for(2, kind), gs.legal_position_ids());
            return Token::make_pos(vocab.position_at(id));
        }
        case TokenKind::Chord: {
            const int id = note_draw(head_logits_for(3, kind),
                                     all_ids(Vocabulary::chord_count()));
            return Token::make_chord(id / kNumChordQualities,
                                     ChordQuality(id % kNumChordQualities));
        }
        case TokenKind::Note: {
            const int pitch = Vocabulary::pitch_at(
                note_draw(head_logits_for(4, kind), all_ids(Vocabulary::pitch_count())));
            const int velocity =
                note_draw(head_logits_for(5, kind), all_ids(Vocabulary::velocity_count()));
            const int dur_id =
                note_draw(head_logits_for(6, kind), gs.legal_duration_ids(gs.last_pos));
            return Token::make_note(pitch, velocity, vocab.duration_at(dur_id));
        }
        default:
            throw ConstraintViolation("sampled an impossible token kind");
    }
}

std::vector<float> row_of(const Tensor<float>& t, int row) {
    std::vector<float> out(size_t(t.cols()));
    std::copy_n(t.value().data() + size_t(row) * size_t(t.cols()), t.cols(), out.data());
    return out;
}

}  // namespace

std::vector<SkeletonEvent> skeleton_events(const std::vector<Token>& tokens) {
    std::vector<SkeletonEvent> out;
    int bar = -1, pos = -1;
    for (const auto& t : tokens) {
        if (t.kind == TokenKind::Bar) { ++bar; pos = -1; }
        else if (t.kind == TokenKind::Pos) pos = t.pos;
        else if (t.kind == TokenKind::Note && bar >= 0 && pos >= 0)
            out.push_back({bar, pos, t});
    }
    return out;
}

bool contains_skeleton(const MeMidiSequence& melody, const MeMidiSequence& skeleton) {
    const auto want = skeleton_events(skeleton.tokens);
    const auto have = skeleton_events(melody.tokens);
    size_t cursor = 0;
    for (const auto& ev : have) {
        if (cursor == want.size()) break;
        if (ev == want[cursor]) ++cursor;
    }
    return cursor == want.size();
}

MeMidiSequence sample_skeleton(const SkeletonLm<float>& model, const Vocabulary& vocab,
                               const std::vector<Token>& prompt, const SamplerConfig& config,
                               SampleAudit* audit) {
    NoGradGuard guard;
    RunContext<float> ctx{false, 0.0, nullptr};
    std::mt19937_64 rng(config.seed);
    const int max_bar_embed = model.config().max_bar_embed;

    GrammarState gs;
    gs.vocab = &vocab;
    gs.skeleton_mode = true;
    gs.max_bars = config.max_bars;

    MeMidiSequence out;
    out.is_skeleton = true;
    out.key_name = "C major";

    StepEncoder encoder;
    auto memory = model.make_memory();
    std::vector<ModelStep> pending;
    pending.push_back(encoder.encode(Token::bos(), vocab, max_bar_embed));
    for (const auto& t : prompt) {
        gs.advance(t);
        out.tokens.push_back(t);
        pending.push_back(encoder.encode(t, vocab, max_bar_embed));
    }

    const size_t token_cap = 16 + size_t(config.max_bars) * 300;
    Tensor<float> hidden;
    while (true) {
        // feed pending steps in context-sized chunks; memory carries context
        for (size_t at = 0; at < pending.size(); at += size_t(model.config().context_len)) {
            const size_t end =
                std::min(pending.size(), at + size_t(model.config().context_len));
            const std::vector<ModelStep> chunk(pending.begin() + long(at),
                                               pending.begin() + long(end));
            hidden = model.hidden_forward(chunk, &memory, ctx);
        }
        pending.clear();
        const int last = hidden.rows() - 1;

        auto head_logits_for = [&](int head, int cond_kind) {
            if (head == 0) {
                const auto logits = model.heads().type.forward(slice_rows(hidden, last, last + 1));
                return row_of(logits, 0);
            }
            const auto all = model.heads().forward(slice_rows(hidden, last, last + 1),
                                                   std::vector<int>{cond_kind});
            const Tensor<float>* tensors[7] = {&all.type,  &all.tempo,    &all.pos,   &all.chord,
                                               &all.pitch, &all.velocity, &all.duration};
            return row_of(*tensors[head], 0);
        };

        const Token token =
            sample_token(head_logits_for, gs, vocab, config, rng, audit, gs.legal_kinds());
        if (token.kind == TokenKind::Eos) {
            out.tokens.push_back(token);
            break;
        }
        gs.advance(token);
        out.tokens.push_back(token);
        pending.push_back(encoder.encode(token, vocab, max_bar_embed));
        if (out.tokens.size() > token_cap)
            throw ConstraintViolation("sampler exceeded the token budget");
    }
    return out;
}

MeMidiSequence inpaint(const InpaintModel<float>& model, const Vocabulary& vocab,
                       const MeMidiSequence& skeleton, const std::vector<Token>& prompt,
                       const SamplerConfig& config, SampleAudit* audit, bool sample_chords) {
    NoGradGuard guard;
    RunContext<float> ctx{false, 0.0, nullptr};
    std::mt19937_64 rng(config.seed ^ 0x777);
    const int max_bar_embed = model.config().max_bar_embed;

    const auto events = skeleton_events(skeleton.tokens);
    if (!events.empty() && events.back().bar >= config.max_bars)
        throw SkeletonOverflow("skeleton extends to bar " + std::to_string(events.back().bar + 1) +
                               " past max_bars " + std::to_string(config.max_bars));

    const auto skel_steps = encode_steps(skeleton.tokens, vocab, max_bar_embed);
    const Tensor<float> enc_out = model.encode(skel_steps, ctx);

    GrammarState gs;
    gs.vocab = &vocab;
    gs.skeleton_mode = false;
    gs.chords_allowed = sample_chords;
    gs.max_bars = config.max_bars;

    MeMidiSequence out;
    out.is_skeleton = false;
    out.key_name = skeleton.key_name;
    out.tempo_bpm = skeleton.tempo_bpm;

    size_t cursor = 0;
    StepEncoder encoder;
    auto cache = model.make_memory();
    std::vector<ModelStep> pending;
    pending.push_back(encoder.encode(Token::bos(), vocab, max_bar_embed));
    for (const auto& t : prompt) {
        gs.advance(t);
        out.tokens.push_back(t);
        pending.push_back(encoder.encode(t, vocab, max_bar_embed));
        if (cursor < events.size() && t.kind == TokenKind::Note &&
            SkeletonEvent{gs.bars - 1, gs.last_pos, t} == events[cursor])
            ++cursor;
    }
    if (cursor < events.size() && !prompt.empty()) {
        const auto& ev = events[cursor];
        // the prompt must not already be past the next pending skeleton event
        if (gs.bars - 1 > ev.bar || (gs.bars - 1 == ev.bar && gs.last_pos >= ev.pos))
            throw ConstraintViolation("prompt skipped a skeleton event without containing it");
    }

    constexpr int kCacheLimit = 1 << 20;  // whole prefix: incremental decode stays exact
    const size_t token_cap = 16 + size_t(config.max_bars) * 300;
    Tensor<float> hidden;

    auto emit = [&](const Token& t) {
        gs.advance(t);
        out.tokens.push_back(t);
        pending.push_back(encoder.encode(t, vocab, max_bar_embed));
    };

    while (true) {
        hidden = model.decode_hidden(pending, enc_out, &cache, kCacheLimit, ctx);
        pending.clear();
        const int last = hidden.rows() - 1;
        auto head_logits_for = [&](int head, int cond_kind) {
            if (head == 0) {
                const auto logits = model.heads().type.forward(slice_rows(hidden, last, last + 1));
                return row_of(logits, 0);
            }
            const auto all = model.heads().forward(slice_rows(hidden, last, last + 1),
                                                   std::vector<int>{cond_kind});
            const Tensor<float>* tensors[7] = {&all.type,  &all.tempo,    &all.pos,   &all.chord,
                                               &all.pitch, &all.velocity, &all.duration};
            return row_of(*tensors[head], 0);
        };

        const bool constrained = cursor < events.size();
        // before the skeleton is exhausted EOS would orphan events
        const Token token = sample_token(head_logits_for, gs, vocab, config, rng, audit,
                                         gs.legal_kinds(/*allow_eos=*/!constrained));

        if (constrained) {
            const auto& ev = events[cursor];
            const int current_bar = gs.bars - 1;
            const bool at_event_bar = current_bar == ev.bar;
            const bool passes =
                at_event_bar && ((token.kind == TokenKind::Pos && token.pos >= ev.pos) ||
                                 token.kind == TokenKind::Bar);
            if (passes) {
                // reached or passed the event: emit the skeleton Pos+Note verbatim
                emit(Token::make_pos(ev.pos));
                emit(ev.note);
                ++cursor;
                if (audit) ++audit->forced_events;
                if (out.tokens.size() > token_cap)
                    throw ConstraintViolation("sampler exceeded the token budget");
                continue;
            }
        }
        if (token.kind == TokenKind::Eos) {
            out.tokens.push_back(token);
            break;
        }
        emit(token);
        if (out.tokens.size() > token_cap)
            throw ConstraintViolation("sampler exceeded the token budget");
    }
    return out;
}

}  // namespace wuyun::nn
