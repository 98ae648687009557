#include <doctest.h>

#include "wuyun/errors.hpp"
#include "wuyun/memidi.hpp"
#include "wuyun/skeleton.hpp"
#include "wuyun/synth.hpp"

using namespace wuyun;

TEST_CASE("vocabulary constants match the symbol inventory") {
    const Vocabulary v = Vocabulary::build();
    CHECK(v.position_count() == 96);
    CHECK(v.duration_count() == 69);
    CHECK(Vocabulary::pitch_count() == 36);
    CHECK(Vocabulary::chord_count() == 156);
    CHECK(Vocabulary::tempo_count() == 3);
    CHECK(Vocabulary::velocity_count() == 128);

    SUBCASE("position set arithmetic: 64 + 48 - 16 = 96") {
        int straight = 0, triplet = 0, shared = 0;
        for (const int t : v.positions) {
            const bool s = t % 30 == 0, tr = t % 40 == 0;
            straight += s;
            triplet += tr;
            shared += s && tr;
        }
        CHECK(straight == 64);
        CHECK(triplet == 48);
        CHECK(shared == 16);
    }
    SUBCASE("duration set is the union of the straight and triplet sets") {
        CHECK(v.durations.front() == 30);
        CHECK(v.durations.back() == 1920);
        int triplet_only = 0;
        for (const int d : v.durations) triplet_only += d % 30 != 0;
        CHECK(triplet_only == 5);
    }
    SUBCASE("lookups are bijective and range-checked") {
        for (int i = 0; i < v.position_count(); ++i) CHECK(v.position_id(v.position_at(i)) == i);
        for (int i = 0; i < v.duration_count(); ++i) CHECK(v.duration_id(v.duration_at(i)) == i);
        CHECK_THROWS_AS(v.position_id(35), VocabViolation);
        CHECK_THROWS_AS(v.duration_id(50), VocabViolation);
        CHECK_THROWS_AS(Vocabulary::pitch_id(47), VocabViolation);
        CHECK_THROWS_AS(Vocabulary::pitch_id(84), VocabViolation);
    }
    SUBCASE("hash is stable and sensitive") {
        CHECK(v.hash() == Vocabulary::build().hash());
        CHECK(v.report().find("positions 96") != std::string::npos);
    }
}

TEST_CASE("tempo classes split at 90 and 160") {
    CHECK(tempo_class(89.9) == TempoClass::Low);
    CHECK(tempo_class(90) == TempoClass::Medium);
    CHECK(tempo_class(160) == TempoClass::Medium);
    CHECK(tempo_class(160.1) == TempoClass::High);
}

TEST_CASE("tokenize walks the grammar") {
    SUBCASE("empty one-bar score is Tempo Bar EOS") {
        CleanScore empty;
        empty.tempo_bpm = 120;
        const auto seq = tokenize(empty);
        REQUIRE(seq.tokens.size() == 3);
        CHECK(seq.tokens[0] == Token::make_tempo(TempoClass::Medium));
        CHECK(seq.tokens[1] == Token::bar());
        CHECK(seq.tokens[2] == Token::eos());
    }
    SUBCASE("chord and note share a Pos, chord first") {
        CleanScore s;
        s.tempo_bpm = 120;
        s.notes = {{0, 480, 60, 80}};
        s.chords = {{0, 0, ChordQuality::Maj}};
        const auto seq = tokenize(s);
        REQUIRE(seq.tokens.size() == 6);
        CHECK(seq.tokens[0].kind == TokenKind::Tempo);
        CHECK(seq.tokens[1].kind == TokenKind::Bar);
        CHECK(seq.tokens[2] == Token::make_pos(0));
        CHECK(seq.tokens[3] == Token::make_chord(0, ChordQuality::Maj));
        CHECK(seq.tokens[4] == Token::make_note(60, 80, 480));
        CHECK(seq.tokens[5].kind == TokenKind::Eos);
    }
    SUBCASE("skeleton tokenization drops chords and flags itself") {
        CleanScore s;
        s.tempo_bpm = 120;
        s.notes = {{0, 480, 60, 80}};
        s.chords = {{0, 0, ChordQuality::Maj}};
        const auto seq = tokenize(s, true);
        REQUIRE(seq.tokens.size() == 5);
        CHECK(seq.is_skeleton);
        for (const auto& t : seq.tokens) CHECK(t.kind != TokenKind::Chord);
    }
    SUBCASE("bars without events still emit Bar") {
        CleanScore s;
        s.tempo_bpm = 120;
        s.notes = {{0, 480, 60, 80}, {3 * 1920, 480, 62, 80}};  // bars 1 and 2 empty
        const auto seq = tokenize(s);
        CHECK(seq.bar_count() == 4);
    }
    SUBCASE("positions strictly increase within each bar") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto seq = tokenize(synthetic_clean_score(seed, 6));
            int last = -1;
            for (const auto& t : seq.tokens) {
                if (t.kind == TokenKind::Bar) last = -1;
                if (t.kind == TokenKind::Pos) {
                    CHECK(t.pos > last);
                    last = t.pos;
                }
            }
        }
    }
    SUBCASE("skeleton token stream is never longer than the full stream") {
        for (std::uint64_t seed = 40; seed < 60; ++seed) {
            const auto score = synthetic_clean_score(seed, 6);
            const auto full = tokenize(score);
            const auto ann = extract({SkeletonStrategy::Rhythm}, score);
            const auto skel = tokenize(apply_mask(score, ann.mask), true);
            CHECK(skel.tokens.size() <= full.tokens.size());
        }
    }
}

TEST_CASE("detokenize inverts tokenize on 1000 random scores") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto score = synthetic_clean_score(seed, 2 + int(seed % 7), seed % 3 != 0);
        CAPTURE(seed);
        REQUIRE(detokenize(tokenize(score)) == score);
        if (seed % 5 == 0) {
            const auto ann = extract({SkeletonStrategy::Rhythm}, score);
            const auto masked = apply_mask(score, ann.mask);
            REQUIRE(detokenize(tokenize(masked, true)) == masked);
        }
    }
}

TEST_CASE("detokenize reports grammar violations with the token index") {
    MeMidiSequence bad;
    SUBCASE("note without position") {
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::make_note(60, 80, 480)};
        try {
            detokenize(bad);
            FAIL("expected GrammarError");
        } catch (const GrammarError& e) {
            CHECK(e.token_index == 1);
        }
    }
    SUBCASE("missing tempo head") {
        bad.tokens = {Token::bar(), Token::eos()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
    SUBCASE("position not in the 96-value set") {
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::make_pos(35),
                      Token::make_note(60, 80, 480), Token::eos()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
    SUBCASE("positions must increase") {
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(),  Token::make_pos(480),
                      Token::make_note(60, 80, 240),         Token::make_pos(480),
                      Token::make_note(62, 80, 240),         Token::eos()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
    SUBCASE("chord inside a skeleton sequence") {
        bad.is_skeleton = true;
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::make_pos(0),
                      Token::make_chord(0, ChordQuality::Maj), Token::make_note(60, 80, 480),
                      Token::eos()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
    SUBCASE("missing EOS") {
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
    SUBCASE("tokens after EOS") {
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::eos(),
                      Token::bar()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
    SUBCASE("empty position") {
        bad.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::make_pos(0),
                      Token::make_pos(30), Token::make_note(60, 80, 480), Token::eos()};
        CHECK_THROWS_AS(detokenize(bad), GrammarError);
    }
}

TEST_CASE("lint flags mixed-grid onset/duration pairs") {
    MeMidiSequence seq;
    seq.tokens = {Token::make_tempo(TempoClass::Medium), Token::bar(), Token::make_pos(30),
                  Token::make_note(60, 80, 40), Token::eos()};
    const auto warnings = lint(seq);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].token_index == 3);

    // grammar accepts it regardless
    CHECK_NOTHROW(detokenize(seq));

    SUBCASE("aligned grids stay quiet") {
        seq.tokens[2] = Token::make_pos(40);
        CHECK(lint(seq).empty());
        seq.tokens[2] = Token::make_pos(120);  // shared grid point
        CHECK(lint(seq).empty());
    }
}

TEST_CASE("token text forms parse back") {
    const Token samples[] = {Token::pad(),
                             Token::bos(),
                             Token::eos(),
                             Token::bar(),
                             Token::make_tempo(TempoClass::High),
                             Token::make_pos(1890),
                             Token::make_chord(6, ChordQuality::HalfDim7),
                             Token::make_note(48, 127, 640)};
    for (const auto& t : samples) {
        const auto back = Token::parse(t.text());
        REQUIRE(back.has_value());
        CHECK(*back == t);
    }
    CHECK(Token::parse("CHORD_F#_%7")->chord_root == 6);
    CHECK(!Token::parse("NOTE_60_80").has_value());
    CHECK(!Token::parse("garbage").has_value());
}

TEST_CASE("text and binary serialization round trip") {
    const Vocabulary vocab = Vocabulary::build();
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto score = synthetic_clean_score(seed, 4);
        const auto seq = tokenize(score);
        CAPTURE(seed);
        REQUIRE(sequence_from_text(sequence_to_text(seq)) == seq);
        REQUIRE(sequence_from_binary(sequence_to_binary(seq, vocab), vocab) == seq);
    }
    SUBCASE("binary format rejects a foreign vocabulary hash") {
        const auto seq = tokenize(synthetic_clean_score(3, 2));
        auto bytes = sequence_to_binary(seq, vocab);
        bytes[9] ^= 0xff;  // corrupt the stored hash
        CHECK_THROWS_AS(sequence_from_binary(bytes, vocab), VocabMismatch);
    }
}

TEST_CASE("encode_steps threads bar/pos/tempo context deterministically") {
    const Vocabulary vocab = Vocabulary::build();
    CleanScore s;
    s.tempo_bpm = 180;  // High
    s.notes = {{480, 240, 60, 90}, {1920, 480, 62, 90}};
    s.chords = {};
    const auto seq = tokenize(s);
    const auto steps = encode_steps(seq.tokens, vocab, 8);
    REQUIRE(steps.size() == seq.tokens.size());
    // Tempo step: context not yet in a bar
    CHECK(steps[0].bar_ctx == 0);
    CHECK(steps[0].tempo == int(TempoClass::High));
    for (const auto& st : steps) CHECK(st.tempo_ctx == int(TempoClass::High));
    // the second note sits in bar 2 at position 0
    const auto& note2 = steps.back();  // EOS carries the final context
    CHECK(note2.bar_ctx == 2);

    // incremental encoding matches the batch encoding
    StepEncoder enc;
    for (size_t i = 0; i < seq.tokens.size(); ++i) {
        const auto step = enc.encode(seq.tokens[i], vocab, 8);
        CHECK(step.kind == steps[i].kind);
        CHECK(step.bar_ctx == steps[i].bar_ctx);
        CHECK(step.pos_ctx == steps[i].pos_ctx);
        CHECK(step.tempo_ctx == steps[i].tempo_ctx);
    }
}

TEST_CASE("detokenize restores monophony from overrunning sampled durations") {
    MeMidiSequence seq;
    seq.tokens = {Token::make_tempo(TempoClass::Medium),
                  Token::bar(),
                  Token::make_pos(0),
                  Token::make_note(60, 80, 960),  // overruns the next onset
                  Token::make_pos(480),
                  Token::make_note(62, 80, 480),
                  Token::eos()};
    const auto score = detokenize(seq);
    REQUIRE(score.notes.size() == 2);
    CHECK(score.notes[0].duration == 480);
    score.validate();
}
