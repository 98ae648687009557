#include "wuyun/score.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "wuyun/errors.hpp"

namespace wuyun {

namespace {

constexpr std::array<const char*, 12> kChordRootNames = {
    "C", "Db", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"};

constexpr std::array<const char*, 13> kChordQualityNames = {
    "M", "m", "o", "+", "MM7", "Mm7", "mM7", "mm7", "o7", "%7", "+7", "+M7", "Sus"};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

const char* chord_root_name(int root) { return kChordRootNames.at(static_cast<size_t>(root)); }

const char* chord_quality_name(ChordQuality q) {
    return kChordQualityNames.at(static_cast<size_t>(q));
}

std::optional<int> parse_chord_root(std::string_view name) {
    for (int i = 0; i < kNumChordRoots; ++i)
        if (name == kChordRootNames[static_cast<size_t>(i)]) return i;
    return std::nullopt;
}

std::optional<ChordQuality> parse_chord_quality(std::string_view name) {
    for (int i = 0; i < kNumChordQualities; ++i)
        if (name == kChordQualityNames[static_cast<size_t>(i)]) return static_cast<ChordQuality>(i);
    return std::nullopt;
}

std::string ChordAnnotation::label() const {
    return std::string(chord_root_name(root)) + "_" + chord_quality_name(quality);
}

std::optional<ChordAnnotation> ChordAnnotation::from_label(int onset, std::string_view label) {
    const auto sep = label.find('_');
    if (sep == std::string_view::npos) return std::nullopt;
    const auto root = parse_chord_root(label.substr(0, sep));
    const auto quality = parse_chord_quality(label.substr(sep + 1));
    if (!root || !quality) return std::nullopt;
    return ChordAnnotation{onset, *root, *quality};
}

std::string Key::name() const {
    if (!known) return "unknown";
    return std::string(chord_root_name(tonic_pc)) + (mode == Mode::Major ? " major" : " minor");
}

std::optional<Key> Key::parse(std::string_view text) {
    const std::string s = lower(text);
    if (s.empty() || s == "unknown" || s == "none") return Key::unknown();

    size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) return Key::unknown();

    static constexpr std::array<int, 7> letter_pc = {9, 11, 0, 2, 4, 5, 7};  // a..g
    const char letter = s[i];
    if (letter < 'a' || letter > 'g') return std::nullopt;
    int pc = letter_pc[static_cast<size_t>(letter - 'a')];
    ++i;
    if (i < s.size() && (s[i] == '#' || s[i] == 's')) { pc = (pc + 1) % 12; ++i; }
    else if (i < s.size() && s[i] == 'b') { pc = (pc + 11) % 12; ++i; }

    std::string rest = s.substr(i);
    rest.erase(std::remove_if(rest.begin(), rest.end(),
                              [](unsigned char c) { return std::isspace(c) || c == '-'; }),
               rest.end());
    Mode mode = Mode::Major;
    if (rest.empty() || rest == "maj" || rest == "major") mode = Mode::Major;
    else if (rest == "m" || rest == "min" || rest == "minor") mode = Mode::Minor;
    else return std::nullopt;
    return Key{true, pc, mode};
}

int Score::end_tick() const {
    int end = 0;
    for (const auto& n : notes) end = std::max(end, n.offset());
    for (const auto& c : chords) end = std::max(end, c.onset + 1);
    return end;
}

void Score::validate() const {
    if (ticks_per_quarter != kTicksPerQuarter)
        throw InvalidField("ticks_per_quarter must be 480, got " + std::to_string(ticks_per_quarter));
    if (time_sigs.empty() || time_sigs.front().onset != 0)
        throw InvalidField("score needs a time signature at tick 0");
    for (const auto& ts : time_sigs) {
        if (ts.numerator < 1 || ts.denominator < 1 || (ts.denominator & (ts.denominator - 1)) != 0)
            throw InvalidField("bad time signature " + std::to_string(ts.numerator) + "/" +
                               std::to_string(ts.denominator));
    }
    if (!(tempo_bpm > 0)) throw InvalidField("tempo_bpm must be > 0");
    const Note* prev = nullptr;
    for (const auto& n : notes) {
        if (n.duration <= 0) throw InvalidField("note duration must be > 0");
        if (n.pitch < 0 || n.pitch > 127) throw InvalidField("pitch out of range 0..127");
        if (n.velocity < 0 || n.velocity > 127) throw InvalidField("velocity out of range 0..127");
        if (n.onset < 0) throw InvalidField("negative onset");
        if (prev && prev->offset() > n.onset)
            throw InvalidField("melody not monophonic at tick " + std::to_string(n.onset));
        prev = &n;
    }
    const ChordAnnotation* prev_chord = nullptr;
    for (const auto& c : chords) {
        if (c.onset < 0) throw InvalidField("negative chord onset");
        if (c.root < 0 || c.root >= kNumChordRoots) throw InvalidField("chord root out of range");
        if (prev_chord && prev_chord->onset > c.onset)
            throw InvalidField("chords not sorted by onset");
        prev_chord = &c;
    }
}

void enforce_monophony(std::vector<Note>& notes) {
    std::stable_sort(notes.begin(), notes.end(),
                     [](const Note& a, const Note& b) { return a.onset < b.onset; });
    std::vector<Note> kept;
    kept.reserve(notes.size());
    for (const auto& n : notes) {
        while (!kept.empty() && kept.back().offset() > n.onset) {
            kept.back().duration = n.onset - kept.back().onset;
            if (kept.back().duration <= 0) kept.pop_back();
            else break;
        }
        kept.push_back(n);
    }
    notes = std::move(kept);
}

}  // namespace wuyun
