#include "wuyun/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "wuyun/errors.hpp"

namespace wuyun {

std::string StrategySpec::text() const {
    switch (kind) {
        case SkeletonStrategy::Downbeat: return "downbeat";
        case SkeletonStrategy::LongNote: return "longnote";
        case SkeletonStrategy::Rhythm: return "rhythm";
        case SkeletonStrategy::Tonic: return "tonic";
        case SkeletonStrategy::Intersection: return "intersection";
        case SkeletonStrategy::Union: return "union";
        case SkeletonStrategy::Random: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "random:%g", p);
            return buf;
        }
    }
    return "rhythm";
}

std::optional<StrategySpec> StrategySpec::parse(std::string_view text) {
    if (text == "downbeat") return StrategySpec{SkeletonStrategy::Downbeat};
    if (text == "longnote") return StrategySpec{SkeletonStrategy::LongNote};
    if (text == "rhythm") return StrategySpec{SkeletonStrategy::Rhythm};
    if (text == "tonic") return StrategySpec{SkeletonStrategy::Tonic};
    if (text == "intersection") return StrategySpec{SkeletonStrategy::Intersection};
    if (text == "union") return StrategySpec{SkeletonStrategy::Union};
    if (text.starts_with("random:")) {
        try {
            return StrategySpec{SkeletonStrategy::Random, std::stod(std::string(text.substr(7)))};
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

double SkeletonAnnotation::proportion() const {
    return mask.empty() ? 0.0 : double(selected()) / double(mask.size());
}

size_t SkeletonAnnotation::selected() const {
    return size_t(std::count(mask.begin(), mask.end(), true));
}

namespace {

int next_strong_beat(int onset, int bar_ticks) {
    const int half = bar_ticks / 2;
    const int in_bar = onset % bar_ticks;
    const int bar_start = onset - in_bar;
    return in_bar < half ? bar_start + half : bar_start + bar_ticks;
}

}  // namespace

std::vector<AccentLabel> label_accents(const std::vector<QuantizedNote>& notes, int bar_ticks) {
    std::vector<AccentLabel> out(notes.size());
    for (size_t i = 0; i < notes.size(); ++i) {
        const auto& n = notes[i];
        AccentLabel& label = out[i];
        const int in_bar = n.onset % bar_ticks;
        label.metrical = in_bar == 0 || in_bar == bar_ticks / 2;
        label.syncopation = !label.metrical && n.offset() > next_strong_beat(n.onset, bar_ticks);
        const bool longer_than_prev = i == 0 || n.duration > notes[i - 1].duration;
        const bool longer_than_next = i + 1 == notes.size() || n.duration > notes[i + 1].duration;
        label.agogic = notes.size() > 1 && longer_than_prev && longer_than_next;
    }
    return out;
}

namespace {

// accent intensity for run pruning; 0 = not a candidate
int intensity(const AccentLabel& label) {
    if (label.agogic && label.metrical) return 3;
    if (label.agogic && label.syncopation) return 2;
    if (label.metrical) return 1;
    return 0;
}

}  // namespace

std::vector<bool> rhythmic_skeleton(const std::vector<QuantizedNote>& notes,
                                    const std::vector<AccentLabel>& labels) {
    if (notes.size() != labels.size()) throw InvalidField("labels do not match note count");
    std::vector<bool> mask(notes.size(), false);
    size_t i = 0;
    while (i < notes.size()) {
        if (intensity(labels[i]) == 0) { ++i; continue; }
        size_t run_end = i;
        while (run_end + 1 < notes.size() && intensity(labels[run_end + 1]) > 0) ++run_end;
        size_t best = i;
        for (size_t j = i; j <= run_end; ++j)
            if (intensity(labels[j]) > intensity(labels[best])) best = j;
        mask[best] = true;
        i = run_end + 1;
    }
    return mask;
}

int choose_cell_size(const std::vector<int>& durations) {
    auto top_ngram_count = [&](size_t n) {
        std::map<std::vector<int>, int> counts;
        int best = 0;
        if (durations.size() < n) return 0;
        for (size_t i = 0; i + n <= durations.size(); ++i) {
            std::vector<int> gram(durations.begin() + long(i), durations.begin() + long(i + n));
            best = std::max(best, ++counts[gram]);
        }
        return best;
    };
    // frequencies are per n-gram window; a raw-count comparison could never
    // pick 3 since a trigram's count is bounded by its prefix bigram's
    const long best2 = top_ngram_count(2), best3 = top_ngram_count(3);
    const long n = long(durations.size());
    if (n < 3) return 2;
    return best3 * (n - 1) > best2 * (n - 2) ? 3 : 2;
}

std::vector<int> cell_partition(int segment_length, int cell_size) {
    std::vector<int> cells;
    if (segment_length <= 0) return cells;
    if (segment_length == 1) return {1};
    // whole cells of the chosen size; the remainder becomes cells of the
    // other size at the tail so no cell falls below 2 notes
    if (cell_size == 2) {
        const int rem = segment_length % 2;
        cells.assign(size_t((segment_length - 3 * rem) / 2), 2);
        if (rem) cells.push_back(3);
    } else {
        const int rem = segment_length % 3;
        if (rem == 0) {
            cells.assign(size_t(segment_length / 3), 3);
        } else if (rem == 2) {
            cells.assign(size_t(segment_length / 3), 3);
            cells.push_back(2);
        } else {  // rem == 1, peel (3,1) -> (2,2)
            cells.assign(size_t(segment_length / 3 - 1), 3);
            cells.push_back(2);
            cells.push_back(2);
        }
    }
    return cells;
}

std::vector<bool> tonal_skeleton(const std::vector<QuantizedNote>& notes,
                                 const std::vector<bool>& rhythmic_mask,
                                 const std::vector<double>& tension) {
    if (notes.size() != rhythmic_mask.size() || notes.size() != tension.size())
        throw InvalidField("mask/tension do not match note count");
    std::vector<bool> mask(notes.size(), false);
    std::vector<int> durations;
    durations.reserve(notes.size());
    for (const auto& n : notes) durations.push_back(n.duration);
    const int cell_size = choose_cell_size(durations);

    auto select_in_segment = [&](size_t begin, size_t end) {  // [begin, end)
        const auto cells = cell_partition(int(end - begin), cell_size);
        size_t at = begin;
        for (const int cell : cells) {
            size_t best = at;
            for (size_t j = at; j < at + size_t(cell); ++j)
                if (tension[j] < tension[best]) best = j;
            mask[best] = true;
            at += size_t(cell);
        }
    };

    size_t segment_start = 0;  // leading notes before the first skeleton note
    for (size_t i = 0; i < notes.size(); ++i) {
        if (!rhythmic_mask[i]) continue;
        select_in_segment(segment_start, i);
        segment_start = i;  // each skeleton note opens the segment it bounds
    }
    select_in_segment(segment_start, notes.size());
    return mask;
}

namespace {

std::vector<bool> mask_and(const std::vector<bool>& a, const std::vector<bool>& b) {
    std::vector<bool> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
    return out;
}

std::vector<bool> mask_or(const std::vector<bool>& a, const std::vector<bool>& b) {
    std::vector<bool> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] || b[i];
    return out;
}

std::vector<bool> random_mask(size_t n, double p, std::uint64_t seed) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidP("random proportion must lie in (0,1)");
    const auto take = size_t(std::ceil(p * double(n)));
    std::vector<size_t> indices(n);
    std::iota(indices.begin(), indices.end(), size_t{0});
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < take && i + 1 < n; ++i) {
        std::uniform_int_distribution<size_t> pick(i, n - 1);
        std::swap(indices[i], indices[pick(rng)]);
    }
    std::vector<bool> mask(n, false);
    for (size_t i = 0; i < take && i < n; ++i) mask[indices[i]] = true;
    return mask;
}

}  // namespace

SkeletonAnnotation extract(const StrategySpec& strategy, const CleanScore& score,
                           std::uint64_t seed, const SpiralParams& params) {
    const auto& notes = score.notes;
    const auto labels = label_accents(notes);
    SkeletonAnnotation out;
    out.strategy = strategy;
    switch (strategy.kind) {
        case SkeletonStrategy::Downbeat:
            out.mask.resize(notes.size());
            for (size_t i = 0; i < notes.size(); ++i) out.mask[i] = labels[i].metrical;
            break;
        case SkeletonStrategy::LongNote:
            out.mask.resize(notes.size());
            for (size_t i = 0; i < notes.size(); ++i) out.mask[i] = labels[i].agogic;
            break;
        case SkeletonStrategy::Rhythm:
            out.mask = rhythmic_skeleton(notes, labels);
            break;
        case SkeletonStrategy::Tonic: {
            const auto rhythm = rhythmic_skeleton(notes, labels);
            out.mask = tonal_skeleton(notes, rhythm, tension_profile(notes, score.key, params));
            break;
        }
        case SkeletonStrategy::Intersection: {
            const auto rhythm = rhythmic_skeleton(notes, labels);
            const auto tonal =
                tonal_skeleton(notes, rhythm, tension_profile(notes, score.key, params));
            out.mask = mask_and(rhythm, tonal);
            break;
        }
        case SkeletonStrategy::Union: {
            const auto rhythm = rhythmic_skeleton(notes, labels);
            const auto tonal =
                tonal_skeleton(notes, rhythm, tension_profile(notes, score.key, params));
            out.mask = mask_or(rhythm, tonal);
            break;
        }
        case SkeletonStrategy::Random:
            out.mask = random_mask(notes.size(), strategy.p, seed);
            break;
    }
    return out;
}

CleanScore apply_mask(const CleanScore& score, const std::vector<bool>& mask) {
    if (mask.size() != score.notes.size()) throw InvalidField("mask does not match note count");
    CleanScore out;
    out.tempo_bpm = score.tempo_bpm;
    out.key = score.key;
    out.source_id = score.source_id;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.notes.push_back(score.notes[i]);
    return out;
}

using nlohmann::json;

std::string skeleton_to_json(const SkeletonAnnotation& annotation, const std::string& source_id) {
    json j;
    j["schema"] = kSkeletonSchema;
    j["source_id"] = source_id;
    j["strategy"] = annotation.strategy.text();
    json mask = json::array();
    for (const bool b : annotation.mask) mask.push_back(b ? 1 : 0);
    j["mask"] = mask;
    j["proportion"] = annotation.proportion();
    return j.dump(2) + "\n";
}

std::pair<SkeletonAnnotation, std::string> skeleton_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidField(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("schema", std::string{}) != kSkeletonSchema)
        throw SchemaMismatch("expected " + std::string(kSkeletonSchema));
    SkeletonAnnotation out;
    const auto strategy = StrategySpec::parse(j.at("strategy").get<std::string>());
    if (!strategy) throw InvalidField("unknown strategy " + j.at("strategy").get<std::string>());
    out.strategy = *strategy;
    for (const auto& bit : j.at("mask")) {
        const int v = bit.get<int>();
        if (v != 0 && v != 1) throw InvalidField("mask entries must be 0/1");
        out.mask.push_back(v == 1);
    }
    return {out, j.value("source_id", std::string{})};
}

}  // namespace wuyun
