#pragma once

#include <span>
#include <vector>

#include "absnav/episode.hpp"
#include "absnav/world.hpp"

namespace absnav {

/// Throws EmptySet on no records.
double success_rate(std::span<const EpisodeRecord> records);

/// Mean of S * l / max(p, l). Throws InvalidRecord when some l <= 0.
double spl(std::span<const EpisodeRecord> records);

/// Mean of max(0, 1 - d_T / d_init) * l / max(p, l). Throws InvalidRecord
/// when some d_init <= 0.
double soft_spl(std::span<const EpisodeRecord> records);

/// Mean of max(final_distance - d, 0); 0 for no records.
double dts(std::span<const EpisodeRecord> records, double d = 1.0);

/// Fraction of records that relocated; 0 for no records.
double relocation_rate(std::span<const EpisodeRecord> records);

/// Trailing mean over [k - window + 1, k], truncated at the start.
std::vector<double> moving_average(std::span<const double> values, std::size_t window = 5);

/// per_env[e][k] is the success (0/1) of episode k in environment e. The
/// per-index mean across environments is smoothed with moving_average.
std::vector<double> moving_avg_success(const std::vector<std::vector<double>>& per_env, std::size_t window = 5);

/// Least-squares slope of values against their index.
double ls_slope(std::span<const double> values);

/// Decision order LastMile, Hallucination, Detection, Exploration, Misc.
/// Throws NotApplicable for successful or non-relocated records.
FailureClass classify_failure(const EpisodeRecord& record, const Scene& scene);

}  // namespace absnav
