#include "wuyun/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "wuyun/errors.hpp"
#include "wuyun/memidi.hpp"

namespace wuyun {

const char* feature_name(Feature f) {
    switch (f) {
        case Feature::PitchClass: return "pitch_class";
        case Feature::NoteDuration: return "note_duration";
        case Feature::OnsetPosition: return "onset_position";
        case Feature::IntervalSize: return "interval_size";
    }
    return "?";
}

int feature_bin_count(Feature f) {
    switch (f) {
        case Feature::PitchClass: return 12;
        case Feature::NoteDuration: return 69;
        case Feature::OnsetPosition: return 96;
        case Feature::IntervalSize: return 49;  // [-24, 24]
    }
    return 0;
}

void FeatureHistogram::validate() const {
    if (int(mass.size()) != feature_bin_count(feature))
        throw BinningMismatch("histogram has wrong bin count for its feature");
    double total = 0;
    for (const double m : mass) {
        if (m < 0) throw InvalidField("negative histogram mass");
        total += m;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidField("histogram mass must sum to 1");
}

FeatureHistogram feature_histogram(std::span<const CleanScore> corpus, Feature f) {
    static const Vocabulary vocab = Vocabulary::build();
    FeatureHistogram h;
    h.feature = f;
    h.mass.assign(size_t(feature_bin_count(f)), 0.0);
    double total = 0;
    for (const auto& piece : corpus) {
        for (size_t i = 0; i < piece.notes.size(); ++i) {
            const auto& n = piece.notes[i];
            int bin = -1;
            switch (f) {
                case Feature::PitchClass: bin = ((n.pitch % 12) + 12) % 12; break;
                case Feature::NoteDuration: bin = vocab.duration_id(n.duration); break;
                case Feature::OnsetPosition: bin = vocab.position_id(n.onset % kBarTicks); break;
                case Feature::IntervalSize: {
                    if (i == 0) continue;
                    const int interval =
                        std::clamp(n.pitch - piece.notes[i - 1].pitch, -24, 24);
                    bin = interval + 24;
                    break;
                }
            }
            if (bin >= 0) {
                h.mass[size_t(bin)] += 1.0;
                total += 1.0;
            }
        }
    }
    if (total > 0)
        for (auto& m : h.mass) m /= total;
    return h;
}

double overlapped_area(const FeatureHistogram& p, const FeatureHistogram& q) {
    if (p.feature != q.feature || p.mass.size() != q.mass.size())
        throw BinningMismatch("overlapped_area needs identical features and binning");
    p.validate();
    q.validate();
    double oa = 0;
    for (size_t i = 0; i < p.mass.size(); ++i) oa += std::min(p.mass[i], q.mass[i]);
    return oa;
}

SkeletonStats skeleton_stats(std::span<const CleanScore> corpus, const StrategySpec& strategy,
                             std::uint64_t seed) {
    SkeletonStats stats;
    stats.strategy = strategy;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& piece = corpus[i];
        const auto annotation = extract(strategy, piece, seed + i);
        stats.per_piece_proportion.push_back(annotation.proportion());
        const auto labels = label_accents(piece.notes);
        for (const auto& l : labels) {
            stats.metrical_notes += l.metrical;
            stats.agogic_notes += l.agogic;
            stats.syncopated_notes += l.syncopation;
        }
        stats.total_notes += long(piece.notes.size());
    }
    if (!stats.per_piece_proportion.empty()) {
        double sum = 0;
        for (const double p : stats.per_piece_proportion) sum += p;
        stats.mean_proportion = sum / double(stats.per_piece_proportion.size());
    }
    return stats;
}

namespace {

// Lentz's continued fraction for the incomplete beta function.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16, kTiny = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1) / (a + b + 2)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = dof / (dof + t * t);
    const double tail = 0.5 * incomplete_beta(dof / 2, 0.5, x);
    return t >= 0 ? 1.0 - tail : tail;
}

double student_t_sf(double t, double dof) {
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const double x = dof / (dof + t * t);
    const double tail = 0.5 * incomplete_beta(dof / 2, 0.5, x);
    return t >= 0 ? tail : 1.0 - tail;
}

namespace {

std::pair<double, double> mean_and_variance(std::span<const double> xs) {
    const double n = double(xs.size());
    double mean = 0;
    for (const double x : xs) mean += x;
    mean /= n;
    double var = 0;
    for (const double x : xs) var += (x - mean) * (x - mean);
    var /= (n - 1);
    return {mean, var};
}

}  // namespace

TTestResult one_tailed_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw TooFewSamples("each group needs at least 2 samples");
    const auto [ma, va] = mean_and_variance(a);
    const auto [mb, vb] = mean_and_variance(b);
    const double na = double(a.size()), nb = double(b.size());
    const double se2 = va / na + vb / nb;
    TTestResult r;
    if (se2 == 0) {
        // degenerate: constant samples
        r.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity() * (ma > mb ? 1 : -1);
        r.dof = na + nb - 2;
        r.p = ma == mb ? 0.5 : (ma > mb ? 0.0 : 1.0);
        return r;
    }
    r.t = (ma - mb) / std::sqrt(se2);
    r.dof = se2 * se2 /
            ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
    r.p = student_t_sf(r.t, r.dof);
    return r;
}

TTestResult one_tailed_t_paired(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw TooFewSamples("paired test needs equal-length groups");
    if (a.size() < 2) throw TooFewSamples("paired test needs at least 2 pairs");
    std::vector<double> diff(a.size());
    for (size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const auto [mean, var] = mean_and_variance(diff);
    TTestResult r;
    r.dof = double(a.size() - 1);
    if (var == 0) {
        r.t = mean == 0 ? 0.0 : std::numeric_limits<double>::infinity() * (mean > 0 ? 1 : -1);
        r.p = mean == 0 ? 0.5 : (mean > 0 ? 0.0 : 1.0);
        return r;
    }
    r.t = mean / std::sqrt(var / double(a.size()));
    r.p = student_t_sf(r.t, r.dof);
    return r;
}

std::vector<Rating> read_ratings_csv(const std::string& text) {
    std::vector<Rating> out;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::string piece, system, metric, score, rater;
        if (!std::getline(row, piece, ',') || !std::getline(row, system, ',') ||
            !std::getline(row, metric, ',') || !std::getline(row, score, ',') ||
            !std::getline(row, rater))
            throw InvalidField("ratings line " + std::to_string(lineno) +
                               ": expected piece,system,metric,score,rater");
        if (lineno == 1 && (piece == "piece" || score == "score")) continue;  // header
        Rating r{piece, system, metric, 0, rater};
        try {
            r.score = std::stod(score);
        } catch (const std::exception&) {
            throw InvalidField("ratings line " + std::to_string(lineno) + ": bad score " + score);
        }
        if (r.score < 1 || r.score > 5)
            throw InvalidField("ratings line " + std::to_string(lineno) +
                               ": score outside the 1..5 Likert range");
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace wuyun
