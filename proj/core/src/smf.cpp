#include "wuyun/smf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "wuyun/errors.hpp"

namespace wuyun {

namespace {

constexpr int kDrumChannel = 9;

struct Cursor {
    std::span<const std::uint8_t> data;
    size_t pos = 0;

    bool done() const { return pos >= data.size(); }
    size_t remaining() const { return data.size() - pos; }

    std::uint8_t u8() {
        if (done()) throw MalformedFile("unexpected end of data");
        return data[pos++];
    }
    std::uint32_t be(int nbytes) {
        std::uint32_t v = 0;
        for (int i = 0; i < nbytes; ++i) v = (v << 8) | u8();
        return v;
    }
    std::uint32_t varint() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8();
            v = (v << 7) | (b & 0x7f);
            if (!(b & 0x80)) return v;
        }
        throw MalformedFile("variable-length quantity longer than 4 bytes");
    }
    std::span<const std::uint8_t> take(size_t n) {
        if (remaining() < n) throw MalformedFile("chunk truncated");
        auto s = data.subspan(pos, n);
        pos += n;
        return s;
    }
    void expect_tag(const char* tag) {
        auto s = take(4);
        if (std::memcmp(s.data(), tag, 4) != 0)
            throw MalformedFile(std::string("expected chunk tag ") + tag);
    }
};

struct RawNote {
    long onset, offset;
    int pitch, velocity, channel;
};

struct RawTrack {
    std::vector<RawNote> notes;
    int melodic_note_count = 0;  // note-ons outside the drum channel
    std::string name;
};

struct RawFile {
    int division = 480;
    std::vector<RawTrack> tracks;
    std::optional<double> tempo_bpm;
    std::vector<std::pair<long, std::pair<int, int>>> time_sigs;  // tick -> (num, den)
    std::optional<Key> key;
    std::vector<std::pair<long, std::string>> markers;
};

void parse_track(Cursor trk, RawFile& file, RawTrack& out) {
    long tick = 0;
    std::uint8_t running = 0;
    // FIFO of open note-ons per (channel, pitch)
    std::map<std::pair<int, int>, std::deque<std::pair<long, int>>> open;

    auto close_note = [&](int channel, int pitch, long off_tick) {
        auto it = open.find({channel, pitch});
        if (it == open.end() || it->second.empty()) return;
        auto [on_tick, velocity] = it->second.front();
        it->second.pop_front();
        out.notes.push_back({on_tick, off_tick, pitch, velocity, channel});
    };

    while (!trk.done()) {
        tick += trk.varint();
        std::uint8_t status = trk.u8();
        if (status < 0x80) {
            if (running < 0x80) throw MalformedFile("data byte without running status");
            --trk.pos;
            status = running;
        }
        if (status == 0xff) {
            const std::uint8_t type = trk.u8();
            const std::uint32_t len = trk.varint();
            auto payload = trk.take(len);
            switch (type) {
                case 0x2f:  // end of track
                    trk.pos = trk.data.size();
                    break;
                case 0x51:
                    if (len != 3) throw MalformedFile("bad tempo event length");
                    if (!file.tempo_bpm) {
                        const double usec = static_cast<double>((payload[0] << 16) |
                                                                (payload[1] << 8) | payload[2]);
                        if (usec > 0) file.tempo_bpm = 60e6 / usec;
                    }
                    break;
                case 0x58:
                    if (len < 2) throw MalformedFile("bad time signature length");
                    file.time_sigs.emplace_back(tick, std::make_pair(int(payload[0]), 1 << payload[1]));
                    break;
                case 0x59: {
                    if (len != 2) throw MalformedFile("bad key signature length");
                    if (!file.key) {
                        const int sf = static_cast<std::int8_t>(payload[0]);
                        const bool minor = payload[1] != 0;
                        const int major_pc = ((7 * sf) % 12 + 12) % 12;
                        file.key = Key{true, minor ? (major_pc + 9) % 12 : major_pc,
                                       minor ? Mode::Minor : Mode::Major};
                    }
                    break;
                }
                case 0x06:
                    file.markers.emplace_back(tick, std::string(payload.begin(), payload.end()));
                    break;
                case 0x03:
                    if (out.name.empty()) out.name.assign(payload.begin(), payload.end());
                    break;
                default:
                    break;
            }
            continue;
        }
        if (status == 0xf0 || status == 0xf7) {
            const std::uint32_t len = trk.varint();
            trk.take(len);
            continue;
        }
        running = status;
        const int kind = status >> 4;
        const int channel = status & 0x0f;
        switch (kind) {
            case 0x8: {
                const int pitch = trk.u8() & 0x7f;
                trk.u8();
                close_note(channel, pitch, tick);
                break;
            }
            case 0x9: {
                const int pitch = trk.u8() & 0x7f;
                const int velocity = trk.u8() & 0x7f;
                if (velocity == 0) {
                    close_note(channel, pitch, tick);
                } else {
                    open[{channel, pitch}].emplace_back(tick, velocity);
                    if (channel != kDrumChannel) ++out.melodic_note_count;
                }
                break;
            }
            case 0xa: case 0xb: case 0xe:
                trk.u8(); trk.u8();
                break;
            case 0xc: case 0xd:
                trk.u8();
                break;
            default:
                throw MalformedFile("unknown event status");
        }
    }
    // dangling note-ons are closed at the last tick seen
    for (auto& [key_, queue] : open)
        while (!queue.empty()) close_note(key_.first, key_.second, tick);
}

int rescale(long tick, int src_division) {
    return static_cast<int>(
        std::llround(static_cast<double>(tick) * kTicksPerQuarter / src_division));
}

}  // namespace

Score read_smf(std::span<const std::uint8_t> bytes) {
    Cursor cur{bytes};
    cur.expect_tag("MThd");
    const std::uint32_t header_len = cur.be(4);
    if (header_len < 6) throw MalformedFile("header chunk too short");
    const int format = static_cast<int>(cur.be(2));
    const int ntrks = static_cast<int>(cur.be(2));
    const std::uint32_t division = cur.be(2);
    cur.take(header_len - 6);
    if (format == 2) throw UnsupportedFormat("SMF type 2 is not supported");
    if (format != 0 && format != 1) throw MalformedFile("unknown SMF format");
    if (division & 0x8000) throw UnsupportedFormat("SMPTE time division is not supported");
    if (division == 0) throw MalformedFile("zero time division");

    RawFile file;
    file.division = static_cast<int>(division);
    for (int t = 0; t < ntrks; ++t) {
        cur.expect_tag("MTrk");
        const std::uint32_t len = cur.be(4);
        RawTrack track;
        parse_track(Cursor{cur.take(len)}, file, track);
        file.tracks.push_back(std::move(track));
    }

    int best = -1;
    for (size_t t = 0; t < file.tracks.size(); ++t)
        if (best < 0 || file.tracks[t].melodic_note_count > file.tracks[size_t(best)].melodic_note_count)
            best = static_cast<int>(t);
    if (best < 0 || file.tracks[size_t(best)].melodic_note_count == 0)
        throw NoNotes("no note events in any non-drum track");

    Score score;
    const RawTrack& melody = file.tracks[size_t(best)];
    score.source_id = melody.name;
    if (score.source_id.empty())
        for (const auto& t : file.tracks)
            if (!t.name.empty()) { score.source_id = t.name; break; }
    score.tempo_bpm = file.tempo_bpm.value_or(120.0);
    score.key = file.key.value_or(Key::unknown());

    for (const auto& n : melody.notes) {
        if (n.channel == kDrumChannel) continue;
        Note note{rescale(n.onset, file.division), 0, n.pitch, n.velocity};
        note.duration = rescale(n.offset, file.division) - note.onset;
        if (note.duration > 0) score.notes.push_back(note);
    }
    enforce_monophony(score.notes);
    if (score.notes.empty()) throw NoNotes("melody track has no playable notes");

    for (const auto& [tick, text] : file.markers)
        if (auto chord = ChordAnnotation::from_label(rescale(tick, file.division), text))
            score.chords.push_back(*chord);
    std::stable_sort(score.chords.begin(), score.chords.end(),
                     [](const auto& a, const auto& b) { return a.onset < b.onset; });

    std::sort(file.time_sigs.begin(), file.time_sigs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    score.time_sigs.clear();
    for (const auto& [tick, sig] : file.time_sigs) {
        TimeSignature ts{rescale(tick, file.division), sig.first, sig.second};
        if (!score.time_sigs.empty() && score.time_sigs.back().onset == ts.onset)
            score.time_sigs.back() = ts;
        else
            score.time_sigs.push_back(ts);
    }
    if (score.time_sigs.empty() || score.time_sigs.front().onset != 0)
        score.time_sigs.insert(score.time_sigs.begin(), TimeSignature{0, 4, 4});

    score.validate();
    return score;
}

namespace {

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int nbytes) {
    for (int i = nbytes - 1; i >= 0; --i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_varint(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t stack[5];
    int n = 0;
    do {
        stack[n++] = v & 0x7f;
        v >>= 7;
    } while (v);
    while (n > 1) out.push_back(stack[--n] | 0x80);
    out.push_back(stack[0]);
}

struct TrackEvent {
    long tick;
    int order;  // stable ordering within a tick: meta < note-off < note-on
    std::vector<std::uint8_t> bytes;
};

int key_sf(const Key& key) {
    const int major_pc = key.mode == Mode::Major ? key.tonic_pc : (key.tonic_pc + 3) % 12;
    int k = (7 * major_pc) % 12;  // inverse of pc = 7*sf mod 12
    if (k > 6) k -= 12;
    return k;
}

}  // namespace

std::vector<std::uint8_t> write_smf(const Score& score) {
    score.validate();
    std::vector<TrackEvent> events;
    auto meta = [&](long tick, std::uint8_t type, std::vector<std::uint8_t> payload, int order = 0) {
        std::vector<std::uint8_t> b{0xff, type};
        put_varint(b, static_cast<std::uint32_t>(payload.size()));
        b.insert(b.end(), payload.begin(), payload.end());
        events.push_back({tick, order, std::move(b)});
    };

    if (!score.source_id.empty())
        meta(0, 0x03, {score.source_id.begin(), score.source_id.end()});
    {
        const auto usec = static_cast<std::uint32_t>(std::llround(60e6 / score.tempo_bpm));
        meta(0, 0x51, {std::uint8_t(usec >> 16), std::uint8_t(usec >> 8), std::uint8_t(usec)});
    }
    for (const auto& ts : score.time_sigs) {
        std::uint8_t dd = 0;
        while ((1 << dd) < ts.denominator) ++dd;
        meta(ts.onset, 0x58, {std::uint8_t(ts.numerator), dd, 24, 8});
    }
    if (score.key.known) {
        meta(0, 0x59, {static_cast<std::uint8_t>(static_cast<std::int8_t>(key_sf(score.key))),
                       std::uint8_t(score.key.mode == Mode::Minor ? 1 : 0)});
    }
    for (const auto& chord : score.chords) {
        const std::string label = chord.label();
        meta(chord.onset, 0x06, {label.begin(), label.end()});
    }
    for (const auto& n : score.notes) {
        events.push_back({n.onset, 2,
                          {std::uint8_t(0x90), std::uint8_t(n.pitch), std::uint8_t(n.velocity)}});
        events.push_back({n.offset(), 1, {std::uint8_t(0x80), std::uint8_t(n.pitch), 0}});
    }

    std::stable_sort(events.begin(), events.end(), [](const TrackEvent& a, const TrackEvent& b) {
        return a.tick != b.tick ? a.tick < b.tick : a.order < b.order;
    });

    std::vector<std::uint8_t> track;
    long tick = 0;
    for (const auto& ev : events) {
        put_varint(track, static_cast<std::uint32_t>(ev.tick - tick));
        tick = ev.tick;
        track.insert(track.end(), ev.bytes.begin(), ev.bytes.end());
    }
    put_varint(track, 0);
    track.insert(track.end(), {0xff, 0x2f, 0x00});

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    put_be(out, 6, 4);
    put_be(out, 0, 2);  // type 0
    put_be(out, 1, 2);
    put_be(out, kTicksPerQuarter, 2);
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    put_be(out, static_cast<std::uint32_t>(track.size()), 4);
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

Score read_smf_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return read_smf(bytes);
}

void write_smf_file(const Score& score, const std::filesystem::path& path) {
    const auto bytes = write_smf(score);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifact("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace wuyun
