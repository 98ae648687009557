#include "wuyun/memidi.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "wuyun/errors.hpp"

namespace wuyun {

TempoClass tempo_class(double bpm) {
    if (bpm < 90) return TempoClass::Low;
    if (bpm <= 160) return TempoClass::Medium;
    return TempoClass::High;
}

double tempo_class_bpm(TempoClass c) {
    switch (c) {
        case TempoClass::Low: return 70;
        case TempoClass::Medium: return 120;
        case TempoClass::High: return 180;
    }
    return 120;
}

std::string Token::text() const {
    char buf[48];
    switch (kind) {
        case TokenKind::Pad: return "PAD";
        case TokenKind::Bos: return "BOS";
        case TokenKind::Eos: return "EOS";
        case TokenKind::Bar: return "BAR";
        case TokenKind::Tempo: {
            static const char* names[] = {"LOW", "MED", "HIGH"};
            return std::string("TEMPO_") + names[tempo];
        }
        case TokenKind::Pos:
            std::snprintf(buf, sizeof buf, "POS_%d", pos);
            return buf;
        case TokenKind::Chord:
            return std::string("CHORD_") + chord_root_name(chord_root) + "_" +
                   chord_quality_name(ChordQuality(chord_quality));
        case TokenKind::Note:
            std::snprintf(buf, sizeof buf, "NOTE_%d_%d_%d", pitch, velocity, duration);
            return buf;
    }
    return "PAD";
}

std::optional<Token> Token::parse(std::string_view text) {
    if (text == "PAD") return pad();
    if (text == "BOS") return bos();
    if (text == "EOS") return eos();
    if (text == "BAR") return bar();
    if (text == "TEMPO_LOW") return make_tempo(TempoClass::Low);
    if (text == "TEMPO_MED") return make_tempo(TempoClass::Medium);
    if (text == "TEMPO_HIGH") return make_tempo(TempoClass::High);
    auto parse_int = [](std::string_view s, int& out) {
        try {
            size_t used = 0;
            out = std::stoi(std::string(s), &used);
            return used == s.size();
        } catch (const std::exception&) {
            return false;
        }
    };
    if (text.starts_with("POS_")) {
        int tick;
        if (parse_int(text.substr(4), tick)) return make_pos(tick);
        return std::nullopt;
    }
    if (text.starts_with("NOTE_")) {
        std::string_view rest = text.substr(5);
        int fields[3];
        for (int i = 0; i < 3; ++i) {
            const size_t sep = rest.find('_');
            const std::string_view part = i < 2 ? rest.substr(0, sep) : rest;
            if ((i < 2 && sep == std::string_view::npos) || !parse_int(part, fields[i]))
                return std::nullopt;
            if (i < 2) rest = rest.substr(sep + 1);
        }
        return make_note(fields[0], fields[1], fields[2]);
    }
    if (text.starts_with("CHORD_")) {
        if (auto chord = ChordAnnotation::from_label(0, text.substr(6)))
            return make_chord(chord->root, chord->quality);
        return std::nullopt;
    }
    return std::nullopt;
}

size_t MeMidiSequence::bar_count() const {
    return size_t(std::count_if(tokens.begin(), tokens.end(),
                                [](const Token& t) { return t.kind == TokenKind::Bar; }));
}

Vocabulary Vocabulary::build() {
    Vocabulary v;
    std::set<int> pos;
    for (int t = 0; t < kBarTicks; t += kStraightUnit) pos.insert(t);
    const size_t straight = pos.size();
    std::set<int> triplet_only;
    for (int t = 0; t < kBarTicks; t += kTripletUnit) triplet_only.insert(t);
    const size_t triplet = triplet_only.size();
    size_t overlap = 0;
    for (int t : triplet_only) overlap += pos.count(t);
    pos.insert(triplet_only.begin(), triplet_only.end());
    // 64 straight + 48 triplet - 16 shared = 96
    if (straight != 64 || triplet != 48 || overlap != 16 || pos.size() != 96)
        throw VocabViolation("position set arithmetic violated");
    v.positions.assign(pos.begin(), pos.end());

    std::set<int> dur;
    for (int t = kStraightUnit; t <= kMaxDuration; t += kStraightUnit) dur.insert(t);
    for (int t : kTripletDurations) dur.insert(t);
    if (dur.size() != 69) throw VocabViolation("duration set arithmetic violated");
    v.durations.assign(dur.begin(), dur.end());
    return v;
}

Vocabulary build_vocab() { return Vocabulary::build(); }

namespace {

int index_of(const std::vector<int>& values, int value, const char* what) {
    const auto it = std::lower_bound(values.begin(), values.end(), value);
    if (it == values.end() || *it != value)
        throw VocabViolation(std::string(what) + " " + std::to_string(value) +
                             " is not in the vocabulary");
    return int(it - values.begin());
}

}  // namespace

int Vocabulary::position_id(int tick) const { return index_of(positions, tick, "position"); }
int Vocabulary::duration_id(int ticks) const { return index_of(durations, ticks, "duration"); }

int Vocabulary::pitch_id(int pitch) {
    if (pitch < kPitchLow || pitch > kPitchHigh)
        throw VocabViolation("pitch " + std::to_string(pitch) + " outside [48,83]");
    return pitch - kPitchLow;
}

std::string Vocabulary::report() const {
    std::ostringstream out;
    out << "wuyun-memidi vocabulary\n";
    out << "kinds " << kind_count() << ": PAD BOS EOS TEMPO BAR POS CHORD NOTE\n";
    out << "positions " << position_count() << ":";
    for (int t : positions) out << ' ' << t;
    out << "\ndurations " << duration_count() << ":";
    for (int t : durations) out << ' ' << t;
    out << "\npitches " << pitch_count() << ": " << kPitchLow << ".." << kPitchHigh << "\n";
    out << "velocities " << velocity_count() << ": 0..127\n";
    out << "tempo classes " << tempo_count() << ": LOW MED HIGH\n";
    out << "chords " << chord_count() << ":";
    for (int r = 0; r < kNumChordRoots; ++r)
        for (int q = 0; q < kNumChordQualities; ++q)
            out << ' ' << chord_root_name(r) << '_' << chord_quality_name(ChordQuality(q));
    out << "\n";
    return out.str();
}

std::uint64_t Vocabulary::hash() const {
    // FNV-1a over the canonical inventory listing
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : report()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

MeMidiSequence tokenize(const CleanScore& score, bool skeleton_only) {
    score.validate();
    static const Vocabulary vocab = Vocabulary::build();

    MeMidiSequence seq;
    seq.is_skeleton = skeleton_only;
    seq.tempo_bpm = score.tempo_bpm;
    seq.key_name = score.key.name();
    seq.source_id = score.source_id;
    seq.tokens.push_back(Token::make_tempo(tempo_class(score.tempo_bpm)));

    const int bars = score.bar_count();
    size_t note_at = 0, chord_at = 0;
    for (int bar = 0; bar < bars; ++bar) {
        const int bar_start = bar * kBarTicks;
        const int bar_end = bar_start + kBarTicks;
        seq.tokens.push_back(Token::bar());
        while (true) {
            const bool chord_ok = !skeleton_only && chord_at < score.chords.size() &&
                                  score.chords[chord_at].onset < bar_end;
            const bool note_ok = note_at < score.notes.size() &&
                                 score.notes[note_at].onset < bar_end;
            if (!chord_ok && !note_ok) break;
            const int chord_tick = chord_ok ? score.chords[chord_at].onset : INT32_MAX;
            const int note_tick = note_ok ? score.notes[note_at].onset : INT32_MAX;
            const int tick = std::min(chord_tick, note_tick);
            const int in_bar = tick - bar_start;
            (void)vocab.position_id(in_bar);  // throws VocabViolation when off-grid
            seq.tokens.push_back(Token::make_pos(in_bar));
            if (chord_tick == tick) {
                const auto& c = score.chords[chord_at++];
                seq.tokens.push_back(Token::make_chord(c.root, c.quality));
            }
            if (note_tick == tick) {
                const auto& n = score.notes[note_at++];
                (void)vocab.duration_id(n.duration);
                (void)Vocabulary::pitch_id(n.pitch);
                if (n.velocity < 0 || n.velocity > 127) throw VocabViolation("velocity out of range");
                seq.tokens.push_back(Token::make_note(n.pitch, n.velocity, n.duration));
            }
        }
        if (skeleton_only) {  // chords are skipped, keep the cursor moving
            while (chord_at < score.chords.size() && score.chords[chord_at].onset < bar_end)
                ++chord_at;
        }
    }
    seq.tokens.push_back(Token::eos());
    return seq;
}

namespace {

int clip_to_grid(int limit, GridClass grid) {
    if (grid == GridClass::Straight) return std::min(limit / kStraightUnit * kStraightUnit, kMaxDuration);
    int best = 0;
    for (int d : kTripletDurations)
        if (d <= limit) best = d;
    return best;
}

bool is_triplet_duration(int d) {
    return std::find(kTripletDurations.begin(), kTripletDurations.end(), d) !=
           kTripletDurations.end();
}

}  // namespace

CleanScore detokenize(const MeMidiSequence& seq) {
    static const Vocabulary vocab = Vocabulary::build();
    CleanScore score;
    score.source_id = seq.source_id;
    const auto key = Key::parse(seq.key_name);
    if (!key || !key->known) throw InvalidField("sequence has no usable key: " + seq.key_name);
    score.key = *key;

    enum class State { Start, AfterTempo, InBar, AfterPos, AfterChord, Done };
    State state = State::Start;
    int bar = -1;
    int last_pos = -1;
    int tempo_idx = 0;

    for (size_t i = 0; i < seq.tokens.size(); ++i) {
        const Token& t = seq.tokens[i];
        switch (t.kind) {
            case TokenKind::Bos:
                if (i != 0) throw GrammarError(i, "BOS not at sequence head");
                break;
            case TokenKind::Pad:
                throw GrammarError(i, "PAD inside a sequence");
            case TokenKind::Tempo:
                if (state != State::Start) throw GrammarError(i, "Tempo after sequence head");
                if (t.tempo < 0 || t.tempo > 2) throw GrammarError(i, "bad tempo class");
                tempo_idx = t.tempo;
                state = State::AfterTempo;
                break;
            case TokenKind::Bar:
                if (state == State::Start || state == State::AfterPos || state == State::Done)
                    throw GrammarError(i, "Bar not allowed here");
                ++bar;
                last_pos = -1;
                state = State::InBar;
                break;
            case TokenKind::Pos: {
                if (state == State::AfterPos) throw GrammarError(i, "empty position");
                if (state != State::InBar && state != State::AfterChord)
                    throw GrammarError(i, "Pos outside a bar");
                try {
                    (void)vocab.position_id(t.pos);
                } catch (const VocabViolation&) {
                    throw GrammarError(i, "position tick " + std::to_string(t.pos) +
                                              " not in the 96-value set");
                }
                if (t.pos <= last_pos)
                    throw GrammarError(i, "positions must strictly increase within a bar");
                last_pos = t.pos;
                state = State::AfterPos;
                break;
            }
            case TokenKind::Chord: {
                if (seq.is_skeleton) throw GrammarError(i, "Chord in a skeleton sequence");
                if (state != State::AfterPos) throw GrammarError(i, "Chord without a fresh Pos");
                if (t.chord_root < 0 || t.chord_root >= kNumChordRoots || t.chord_quality < 0 ||
                    t.chord_quality >= kNumChordQualities)
                    throw GrammarError(i, "chord outside the 156-event dictionary");
                score.chords.push_back(
                    {bar * kBarTicks + last_pos, t.chord_root, ChordQuality(t.chord_quality)});
                state = State::AfterChord;
                break;
            }
            case TokenKind::Note: {
                if (state != State::AfterPos && state != State::AfterChord)
                    throw GrammarError(i, "Note without a preceding Pos");
                try {
                    (void)Vocabulary::pitch_id(t.pitch);
                    (void)vocab.duration_id(t.duration);
                } catch (const VocabViolation& e) {
                    throw GrammarError(i, e.what());
                }
                if (t.velocity < 0 || t.velocity > 127) throw GrammarError(i, "bad velocity");
                score.notes.push_back({bar * kBarTicks + last_pos, t.duration, t.pitch, t.velocity,
                                       is_triplet_duration(t.duration) ? GridClass::Triplet
                                                                       : GridClass::Straight});
                state = State::InBar;
                break;
            }
            case TokenKind::Eos:
                if (state == State::Start || state == State::AfterPos)
                    throw GrammarError(i, "EOS not allowed here");
                if (i + 1 != seq.tokens.size()) throw GrammarError(i + 1, "tokens after EOS");
                state = State::Done;
                break;
        }
    }
    if (state != State::Done) throw GrammarError(seq.tokens.size(), "missing EOS");

    score.tempo_bpm = seq.tempo_bpm > 0 ? seq.tempo_bpm : tempo_class_bpm(TempoClass(tempo_idx));

    // restore monophony if a sampled duration overran the next onset
    std::vector<QuantizedNote> kept;
    kept.reserve(score.notes.size());
    for (const auto& n : score.notes) {
        while (!kept.empty() && kept.back().offset() > n.onset) {
            const int dur = clip_to_grid(n.onset - kept.back().onset, kept.back().grid);
            if (dur == 0) kept.pop_back();
            else { kept.back().duration = dur; break; }
        }
        kept.push_back(n);
    }
    score.notes = std::move(kept);
    return score;
}

std::vector<LintWarning> lint(const MeMidiSequence& seq) {
    std::vector<LintWarning> warnings;
    int last_pos = -1;
    for (size_t i = 0; i < seq.tokens.size(); ++i) {
        const Token& t = seq.tokens[i];
        if (t.kind == TokenKind::Bar) last_pos = -1;
        if (t.kind == TokenKind::Pos) last_pos = t.pos;
        if (t.kind != TokenKind::Note || last_pos < 0) continue;
        const bool pos_straight = last_pos % kStraightUnit == 0;
        const bool pos_triplet = last_pos % kTripletUnit == 0;
        const bool dur_triplet = is_triplet_duration(t.duration);
        if (dur_triplet && !pos_triplet)
            warnings.push_back({i, "triplet duration on a straight-only onset " +
                                       std::to_string(last_pos)});
        if (!dur_triplet && !pos_straight)
            warnings.push_back({i, "straight duration on a triplet-only onset " +
                                       std::to_string(last_pos)});
    }
    return warnings;
}

std::string sequence_to_text(const MeMidiSequence& seq) {
    std::ostringstream out;
    char bpm[40];
    std::snprintf(bpm, sizeof bpm, "%.17g", seq.tempo_bpm);  // exact double round trip
    out << "# wuyun-memidi/1\tskeleton=" << (seq.is_skeleton ? 1 : 0) << "\ttempo_bpm=" << bpm
        << "\tkey=" << seq.key_name << "\tsource=" << seq.source_id << "\n";
    for (const auto& t : seq.tokens) out << t.text() << "\n";
    return out.str();
}

MeMidiSequence sequence_from_text(const std::string& text) {
    MeMidiSequence seq;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream header(line.substr(1));
            std::string field;
            while (std::getline(header, field, '\t')) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string name = field.substr(0, eq), value = field.substr(eq + 1);
                if (name == "skeleton") seq.is_skeleton = value == "1";
                else if (name == "tempo_bpm") seq.tempo_bpm = std::atof(value.c_str());
                else if (name == "key") seq.key_name = value;
                else if (name == "source") seq.source_id = value;
            }
            continue;
        }
        const auto token = Token::parse(line);
        if (!token) throw InvalidField("line " + std::to_string(lineno) + ": bad token " + line);
        seq.tokens.push_back(*token);
    }
    return seq;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, int v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t((v >> 8) & 0xff));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, std::uint32_t(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct BinReader {
    std::span<const std::uint8_t> data;
    size_t pos = 0;
    std::uint8_t u8() {
        if (pos >= data.size()) throw InvalidField("truncated token file");
        return data[pos++];
    }
    int u16() { const int lo = u8(); return lo | (u8() << 8); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
        return v;
    }
    std::string str() {
        const auto n = u32();
        std::string s;
        for (std::uint32_t i = 0; i < n; ++i) s.push_back(char(u8()));
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> sequence_to_binary(const MeMidiSequence& seq, const Vocabulary& vocab) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'W', 'Y', 'T', 'K'});
    put_u32(out, 1);
    put_u64(out, vocab.hash());
    out.push_back(seq.is_skeleton ? 1 : 0);
    std::uint64_t bpm_bits;
    std::memcpy(&bpm_bits, &seq.tempo_bpm, 8);
    put_u64(out, bpm_bits);
    put_str(out, seq.key_name);
    put_str(out, seq.source_id);
    put_u32(out, std::uint32_t(seq.tokens.size()));
    for (const auto& t : seq.tokens) {
        out.push_back(std::uint8_t(t.kind));
        put_u16(out, t.tempo);
        put_u16(out, t.pos);
        put_u16(out, t.chord_root);
        put_u16(out, t.chord_quality);
        put_u16(out, t.pitch);
        put_u16(out, t.velocity);
        put_u16(out, t.duration);
    }
    return out;
}

MeMidiSequence sequence_from_binary(std::span<const std::uint8_t> bytes, const Vocabulary& vocab) {
    BinReader r{bytes};
    if (r.u8() != 'W' || r.u8() != 'Y' || r.u8() != 'T' || r.u8() != 'K')
        throw InvalidField("not a wuyun token file");
    if (r.u32() != 1) throw InvalidField("unsupported token file version");
    const std::uint64_t hash = r.u64();
    if (hash != vocab.hash())
        throw VocabMismatch("token file was produced with a different vocabulary");
    MeMidiSequence seq;
    seq.is_skeleton = r.u8() != 0;
    const std::uint64_t bpm_bits = r.u64();
    std::memcpy(&seq.tempo_bpm, &bpm_bits, 8);
    seq.key_name = r.str();
    seq.source_id = r.str();
    const auto count = r.u32();
    seq.tokens.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Token t;
        t.kind = TokenKind(r.u8());
        t.tempo = r.u16();
        t.pos = r.u16();
        t.chord_root = r.u16();
        t.chord_quality = r.u16();
        t.pitch = r.u16();
        t.velocity = r.u16();
        t.duration = r.u16();
        seq.tokens.push_back(t);
    }
    return seq;
}

void save_sequence(const MeMidiSequence& seq, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifact("cannot write " + path.string());
    if (path.extension() == ".bin") {
        const auto bytes = sequence_to_binary(seq, Vocabulary::build());
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    } else {
        out << sequence_to_text(seq);
    }
}

MeMidiSequence load_sequence(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (path.extension() == ".bin")
        return sequence_from_binary(bytes, Vocabulary::build());
    return sequence_from_text(std::string(bytes.begin(), bytes.end()));
}

ModelStep StepEncoder::encode(const Token& t, const Vocabulary& vocab, int max_bar_embed) {
    ModelStep s;
    s.kind = int(t.kind);
    switch (t.kind) {
        case TokenKind::Tempo:
            s.tempo = t.tempo;
            tempo_ctx = t.tempo;
            break;
        case TokenKind::Bar:
            ++bars_seen;
            pos_ctx = 0;
            break;
        case TokenKind::Pos:
            s.pos = vocab.position_id(t.pos);
            pos_ctx = s.pos;
            break;
        case TokenKind::Chord:
            s.chord = Vocabulary::chord_id(t.chord_root, t.chord_quality);
            break;
        case TokenKind::Note:
            s.pitch = Vocabulary::pitch_id(t.pitch);
            s.velocity = t.velocity;
            s.duration = vocab.duration_id(t.duration);
            break;
        default:
            break;
    }
    s.bar_ctx = std::min(bars_seen, max_bar_embed - 1);
    s.pos_ctx = pos_ctx;
    s.tempo_ctx = tempo_ctx;
    return s;
}

std::vector<ModelStep> encode_steps(const std::vector<Token>& tokens, const Vocabulary& vocab,
                                    int max_bar_embed) {
    std::vector<ModelStep> steps;
    steps.reserve(tokens.size());
    StepEncoder enc;
    for (const auto& t : tokens) steps.push_back(enc.encode(t, vocab, max_bar_embed));
    return steps;
}

}  // namespace wuyun
