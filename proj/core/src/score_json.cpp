#include "wuyun/score_json.hpp"

#include <json.hpp>

#include "wuyun/errors.hpp"

namespace wuyun {

using nlohmann::json;

std::string score_to_json(const Score& score) {
    score.validate();
    json j;
    j["schema"] = kScoreSchema;
    j["source_id"] = score.source_id;
    j["ticks_per_quarter"] = score.ticks_per_quarter;
    j["time_signature"] = {score.time_signature().numerator, score.time_signature().denominator};
    if (score.time_sigs.size() > 1) {
        json changes = json::array();
        for (size_t i = 1; i < score.time_sigs.size(); ++i) {
            const auto& ts = score.time_sigs[i];
            changes.push_back({ts.onset, ts.numerator, ts.denominator});
        }
        j["time_signature_changes"] = changes;
    }
    j["tempo_bpm"] = score.tempo_bpm;
    j["key"] = score.key.name();
    json notes = json::array();
    for (const auto& n : score.notes) notes.push_back({n.onset, n.duration, n.pitch, n.velocity});
    j["notes"] = notes;
    json chords = json::array();
    for (const auto& c : score.chords)
        chords.push_back({c.onset, chord_root_name(c.root), chord_quality_name(c.quality)});
    j["chords"] = chords;
    return j.dump(2) + "\n";
}

Score score_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidField(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
        throw SchemaMismatch("missing schema tag");
    if (j["schema"].get<std::string>() != kScoreSchema)
        throw SchemaMismatch("expected " + std::string(kScoreSchema) + ", got " +
                             j["schema"].get<std::string>());
    Score score;
    try {
        score.source_id = j.value("source_id", std::string{});
        score.ticks_per_quarter = j.value("ticks_per_quarter", kTicksPerQuarter);
        score.time_sigs.clear();
        const auto& ts = j.at("time_signature");
        score.time_sigs.push_back({0, ts.at(0).get<int>(), ts.at(1).get<int>()});
        if (j.contains("time_signature_changes"))
            for (const auto& c : j["time_signature_changes"])
                score.time_sigs.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()});
        score.tempo_bpm = j.at("tempo_bpm").get<double>();
        const auto key_name = j.at("key").get<std::string>();
        const auto key = Key::parse(key_name);
        if (!key) throw InvalidField("unparseable key name: " + key_name);
        score.key = *key;
        for (const auto& n : j.at("notes")) {
            if (!n.is_array() || n.size() != 4) throw InvalidField("note must be [onset,duration,pitch,velocity]");
            for (const auto& field : n)
                if (!field.is_number_integer()) throw InvalidField("note fields must be tick integers");
            score.notes.push_back({n[0].get<int>(), n[1].get<int>(), n[2].get<int>(), n[3].get<int>()});
        }
        for (const auto& c : j.at("chords")) {
            if (!c.is_array() || c.size() != 3) throw InvalidField("chord must be [onset,root,quality]");
            const auto root = parse_chord_root(c[1].get<std::string>());
            const auto quality = parse_chord_quality(c[2].get<std::string>());
            if (!root) throw InvalidField("unknown chord root " + c[1].get<std::string>());
            if (!quality) throw InvalidField("unknown chord quality " + c[2].get<std::string>());
            score.chords.push_back({c[0].get<int>(), *root, *quality});
        }
    } catch (const json::exception& e) {
        throw InvalidField(std::string("bad score JSON: ") + e.what());
    }
    score.validate();
    return score;
}

}  // namespace wuyun
