#include <doctest.h>

#include "wuyun/errors.hpp"
#include "wuyun/nn/sampler.hpp"
#include "wuyun/nn/train.hpp"
#include "wuyun/skeleton.hpp"
#include "wuyun/synth.hpp"

using namespace wuyun;
using namespace wuyun::nn;

namespace {

ModelConfig sampler_lm() {
    ModelConfig c = ModelConfig::lm_test();
    c.n_layers = 1;
    c.d_model = 32;
    c.d_ff = 64;
    c.d_embed = 32;
    c.memory_len = 64;
    c.dropout_rate = 0;
    return c;
}

ModelConfig sampler_seq2seq() {
    ModelConfig c = ModelConfig::seq2seq_test();
    c.n_layers = 1;
    c.d_model = 32;
    c.d_ff = 64;
    c.d_embed = 32;
    c.dropout_rate = 0;
    return c;
}

/// A briefly trained LM keeps the logits structured without costing minutes.
SkeletonLm<float>& trained_lm() {
    static SkeletonLm<float> model = [] {
        const Vocabulary vocab = Vocabulary::build();
        SkeletonLm<float> m(sampler_lm(), vocab, 41);
        std::vector<MeMidiSequence> corpus;
        for (int i = 0; i < 6; ++i)
            corpus.push_back(tokenize(synthetic_clean_score(std::uint64_t(500 + i), 3), true));
        TrainConfig tc;
        tc.steps = 60;
        tc.batch_size = 4;
        tc.seed = 1;
        train_lm(m, corpus, vocab, tc);
        return m;
    }();
    return model;
}

InpaintModel<float>& trained_inpainter() {
    static InpaintModel<float> model = [] {
        const Vocabulary vocab = Vocabulary::build();
        InpaintModel<float> m(sampler_seq2seq(), vocab, 43);
        std::vector<std::pair<MeMidiSequence, MeMidiSequence>> pairs;
        for (int i = 0; i < 6; ++i) {
            const auto score = synthetic_clean_score(std::uint64_t(600 + i), 3);
            const auto ann = extract({SkeletonStrategy::Rhythm}, score);
            pairs.emplace_back(tokenize(apply_mask(score, ann.mask), true), tokenize(score));
        }
        TrainConfig tc;
        tc.steps = 60;
        tc.batch_size = 4;
        tc.seed = 2;
        train_seq2seq(m, pairs, vocab, tc);
        return m;
    }();
    return model;
}

MeMidiSequence make_skeleton(std::uint64_t seed, int bars = 3) {
    const auto score = synthetic_clean_score(seed, bars);
    const auto ann = extract({SkeletonStrategy::Rhythm}, score);
    return tokenize(apply_mask(score, ann.mask), true);
}

}  // namespace

TEST_CASE("sampled skeletons are grammatical and bounded") {
    const Vocabulary vocab = Vocabulary::build();
    SamplerConfig cfg;
    cfg.max_bars = 6;
    cfg.seed = 7;
    SampleAudit audit;
    const auto seq = sample_skeleton(trained_lm(), vocab, {}, cfg, &audit);
    CHECK(seq.is_skeleton);
    CHECK(seq.bar_count() <= 6);
    CHECK(seq.tokens.back().kind == TokenKind::Eos);
    CHECK_NOTHROW(detokenize(seq));           // grammar-masked output is parseable
    CHECK(detokenize(seq).chords.empty());    // skeletons carry no chords
    CHECK(audit.draws > 0);
}

TEST_CASE("every kept draw is inside the raw top-k unless the fallback fired") {
    const Vocabulary vocab = Vocabulary::build();
    SamplerConfig cfg;
    cfg.max_bars = 8;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        cfg.seed = seed;
        SampleAudit audit;
        (void)sample_skeleton(trained_lm(), vocab, {}, cfg, &audit);
        CAPTURE(seed);
        CHECK(audit.outside_topk <= audit.fallbacks);
        if (audit.fallbacks == 0) CHECK(audit.outside_topk == 0);
    }
}

TEST_CASE("k=1 is greedy and deterministic; low temperature converges to it") {
    const Vocabulary vocab = Vocabulary::build();
    // a jittered fresh model: exact logit ties (e.g. untouched zero biases)
    // would make the 0+ temperature limit uniform over the tied argmax set
    SkeletonLm<float> model(sampler_lm(), vocab, 47);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> jitter(0.0, 0.02);
    for (auto& e : model.params().entries)
        for (auto& v : e.tensor.value()) v += float(jitter(rng));

    SamplerConfig greedy;
    greedy.top_k = 1;
    greedy.max_bars = 4;
    greedy.seed = 3;
    const auto a = sample_skeleton(model, vocab, {}, greedy);
    SamplerConfig greedy2 = greedy;
    greedy2.seed = 99;  // greedy ignores the seed
    const auto b = sample_skeleton(model, vocab, {}, greedy2);
    CHECK(a.tokens == b.tokens);

    SamplerConfig cold;
    cold.top_k = 10;
    cold.temperature = 1e-6;
    cold.max_bars = 4;
    cold.seed = 12345;
    const auto c = sample_skeleton(model, vocab, {}, cold);
    CHECK(c.tokens == a.tokens);
}

TEST_CASE("same seed, same sample; different seed, different sample") {
    const Vocabulary vocab = Vocabulary::build();
    SamplerConfig cfg;
    cfg.max_bars = 5;
    cfg.seed = 8;
    const auto a = sample_skeleton(trained_lm(), vocab, {}, cfg);
    const auto b = sample_skeleton(trained_lm(), vocab, {}, cfg);
    CHECK(a.tokens == b.tokens);
    cfg.seed = 9;
    const auto c = sample_skeleton(trained_lm(), vocab, {}, cfg);
    CHECK(a.tokens != c.tokens);
}

TEST_CASE("a prompt is preserved as the sample prefix") {
    const Vocabulary vocab = Vocabulary::build();
    const auto skel = make_skeleton(777, 2);
    std::vector<Token> prompt(skel.tokens.begin(), skel.tokens.end() - 1);  // drop EOS
    SamplerConfig cfg;
    cfg.max_bars = 4;
    cfg.seed = 5;
    const auto out = sample_skeleton(trained_lm(), vocab, prompt, cfg);
    REQUIRE(out.tokens.size() >= prompt.size());
    for (size_t i = 0; i < prompt.size(); ++i) REQUIRE(out.tokens[i] == prompt[i]);
}

TEST_CASE("inpainting preserves every skeleton event verbatim and in order") {
    const Vocabulary vocab = Vocabulary::build();
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto skeleton = make_skeleton(1000 + seed, 3);
        SamplerConfig cfg;
        cfg.max_bars = 6;
        cfg.seed = seed;
        SampleAudit audit;
        const auto melody = inpaint(trained_inpainter(), vocab, skeleton, {}, cfg, &audit);
        CAPTURE(seed);
        REQUIRE(contains_skeleton(melody, skeleton));
        CHECK(melody.tokens.back().kind == TokenKind::Eos);
        CHECK_NOTHROW(detokenize(melody));
        CHECK(audit.forced_events <= skeleton_events(skeleton.tokens).size());
    }
}

TEST_CASE("inpainting with a melody prompt that contains the early skeleton events") {
    const Vocabulary vocab = Vocabulary::build();
    const auto score = synthetic_clean_score(4242, 4);
    const auto ann = extract({SkeletonStrategy::Rhythm}, score);
    const auto skeleton = tokenize(apply_mask(score, ann.mask), true);
    const auto full = tokenize(score);

    // first 2 bars of the full melody as the prompt
    std::vector<Token> prompt;
    int bars = 0;
    for (const auto& t : full.tokens) {
        if (t.kind == TokenKind::Bar && bars == 2) break;
        if (t.kind == TokenKind::Eos) break;
        if (t.kind == TokenKind::Bar) ++bars;
        prompt.push_back(t);
    }
    SamplerConfig cfg;
    cfg.max_bars = 8;
    cfg.seed = 31;
    const auto melody = inpaint(trained_inpainter(), vocab, skeleton, prompt, cfg);
    CHECK(contains_skeleton(melody, skeleton));
    for (size_t i = 0; i < prompt.size(); ++i) REQUIRE(melody.tokens[i] == prompt[i]);
}

TEST_CASE("an event-free skeleton imposes no constraints") {
    const Vocabulary vocab = Vocabulary::build();
    MeMidiSequence empty_skeleton;
    empty_skeleton.is_skeleton = true;
    empty_skeleton.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::eos()};
    SamplerConfig cfg;
    cfg.max_bars = 3;
    cfg.seed = 2;
    const auto melody = inpaint(trained_inpainter(), vocab, empty_skeleton, {}, cfg);
    CHECK(melody.tokens.back().kind == TokenKind::Eos);
    CHECK(contains_skeleton(melody, empty_skeleton));  // vacuously
}

TEST_CASE("a skeleton past max_bars overflows") {
    const Vocabulary vocab = Vocabulary::build();
    const auto skeleton = make_skeleton(55, 6);
    SamplerConfig cfg;
    cfg.max_bars = 2;
    CHECK_THROWS_AS(inpaint(trained_inpainter(), vocab, skeleton, {}, cfg), SkeletonOverflow);
}

TEST_CASE("generation never exceeds max_bars") {
    const Vocabulary vocab = Vocabulary::build();
    for (std::uint64_t seed = 20; seed < 26; ++seed) {
        SamplerConfig cfg;
        cfg.max_bars = 3;
        cfg.seed = seed;
        const auto skel = sample_skeleton(trained_lm(), vocab, {}, cfg);
        CHECK(skel.bar_count() <= 3);
        const auto melody = inpaint(trained_inpainter(), vocab, skel, {}, cfg);
        CHECK(melody.bar_count() <= 3);
    }
}

TEST_CASE("skeleton_events extracts (bar, pos, note) triples") {
    MeMidiSequence seq;
    seq.tokens = {Token::make_tempo(TempoClass::Medium),
                  Token::bar(),
                  Token::make_pos(0),
                  Token::make_note(60, 80, 480),
                  Token::bar(),
                  Token::make_pos(960),
                  Token::make_note(64, 90, 240),
                  Token::eos()};
    const auto events = skeleton_events(seq.tokens);
    REQUIRE(events.size() == 2);
    CHECK(events[0].bar == 0);
    CHECK(events[0].pos == 0);
    CHECK(events[1].bar == 1);
    CHECK(events[1].pos == 960);
    CHECK(events[1].note.pitch == 64);
}

TEST_CASE("contains_skeleton demands order and exact fields") {
    MeMidiSequence melody;
    melody.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(),
                     Token::make_pos(0),   Token::make_note(60, 80, 480),
                     Token::make_pos(480), Token::make_note(62, 80, 480),
                     Token::eos()};
    MeMidiSequence skel;
    skel.is_skeleton = true;
    skel.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::make_pos(480),
                   Token::make_note(62, 80, 480), Token::eos()};
    CHECK(contains_skeleton(melody, skel));

    skel.tokens[3] = Token::make_note(62, 81, 480);  // velocity differs
    CHECK(!contains_skeleton(melody, skel));

    // order violation: skeleton wants 62 before 60
    skel.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(),
                   Token::make_pos(480), Token::make_note(62, 80, 480),
                   Token::make_pos(960), Token::make_note(60, 80, 480),
                   Token::eos()};
    CHECK(!contains_skeleton(melody, skel));
}
