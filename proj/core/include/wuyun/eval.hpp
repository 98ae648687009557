#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wuyun/preprocess.hpp"
#include "wuyun/skeleton.hpp"

namespace wuyun {

enum class Feature { PitchClass, NoteDuration, OnsetPosition, IntervalSize };

const char* feature_name(Feature f);
int feature_bin_count(Feature f);  // 12 / 69 / 96 / 49

/// Normalized feature distribution over fixed, versioned bins.
struct FeatureHistogram {
    Feature feature = Feature::PitchClass;
    std::vector<double> mass;  // non-negative, sums to 1 within 1e-9

    void validate() const;
};

FeatureHistogram feature_histogram(std::span<const CleanScore> corpus, Feature f);

/// Overlapped area OA = sum_b min(p_b, q_b) in [0,1].
/// Throws BinningMismatch when the histograms disagree on feature/binning.
double overlapped_area(const FeatureHistogram& p, const FeatureHistogram& q);

struct SkeletonStats {
    StrategySpec strategy;
    std::vector<double> per_piece_proportion;
    double mean_proportion = 0;
    long metrical_notes = 0, agogic_notes = 0, syncopated_notes = 0, total_notes = 0;
};

SkeletonStats skeleton_stats(std::span<const CleanScore> corpus, const StrategySpec& strategy,
                             std::uint64_t seed = 0);

struct TTestResult {
    double t = 0;
    double dof = 0;
    double p = 0;  // one-tailed, direction mean(a) > mean(b)
};

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom; one-tailed p from the Student-t CDF. TooFewSamples when either
/// group has n < 2.
TTestResult one_tailed_t(std::span<const double> a, std::span<const double> b);

/// Paired variant for same-rater designs: one-sample t on the differences.
TTestResult one_tailed_t_paired(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
/// Student-t CDF at `t` with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);
/// Upper-tail survival P(T > t), exact in the far tail (no 1-cdf cancellation).
double student_t_sf(double t, double dof);

/// One (piece, system, metric, score, rater) rating row.
struct Rating {
    std::string piece, system, metric;
    double score = 0;
    std::string rater;
};

/// Reads RatingsTable CSV: header then piece,system,metric,score,rater.
/// Scores outside [1,5] raise InvalidField.
std::vector<Rating> read_ratings_csv(const std::string& text);

}  // namespace wuyun
