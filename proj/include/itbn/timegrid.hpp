#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "itbn/decimal.hpp"
#include "itbn/errors.hpp"
#include "itbn/random.hpp"

namespace itbn {

// A strictly increasing sequence of observation time-points for one entity.
// Times are exact multiples of the declared resolution and are stored as
// signed tick counts, so gap gcds are number-theoretically exact. Floating
// point gcd is never attempted.
class Timeline {
public:
    Timeline(std::string entity, std::vector<std::int64_t> ticks,
             Resolution resolution = Resolution{})
        : entity_(std::move(entity)),
          ticks_(std::move(ticks)),
          resolution_(resolution) {
        if (ticks_.empty()) throw_data("timeline '" + entity_ + "' is empty");
        for (std::size_t i = 1; i < ticks_.size(); ++i) {
            if (ticks_[i] <= ticks_[i - 1])
                throw_data("timeline '" + entity_ + "' is not strictly increasing");
        }
    }

    // Convenience constructor for times already known to sit on the grid;
    // each value must round-trip through the resolution within 1e-9.
    static Timeline from_times(std::string entity, std::span<const double> times,
                               Resolution resolution = Resolution{}) {
        std::vector<std::int64_t> ticks;
        ticks.reserve(times.size());
        const double step = resolution.value();
        for (double t : times) {
            if (!std::isfinite(t)) throw_data("non-finite time in timeline '" + entity + "'");
            const double scaled = t / step;
            if (std::abs(scaled) >= 9.0e15)
                throw_data("time out of exact range in timeline '" + entity + "'");
            const auto tick = static_cast<std::int64_t>(std::llround(scaled));
            if (std::abs(t - static_cast<double>(tick) * step) >
                1e-9 * std::max(1.0, std::abs(t)))
                throw_data("time " + std::to_string(t) + " in timeline '" + entity +
                           "' is not a multiple of the resolution " + resolution.step.to_string());
            ticks.push_back(tick);
        }
        return Timeline(std::move(entity), std::move(ticks), resolution);
    }

    const std::string& entity() const { return entity_; }
    const Resolution& resolution() const { return resolution_; }
    std::size_t size() const { return ticks_.size(); }
    std::int64_t tick(std::size_t i) const { return ticks_[i]; }
    const std::vector<std::int64_t>& ticks() const { return ticks_; }

    double time(std::size_t i) const {
        return static_cast<double>(ticks_[i]) * resolution_.value();
    }

    std::vector<double> times() const {
        std::vector<double> out(ticks_.size());
        for (std::size_t i = 0; i < ticks_.size(); ++i) out[i] = time(i);
        return out;
    }

    // Sorted union with another timeline of the same entity; duplicate
    // time-points collapse (processes observed at the same instant share a
    // slice).
    Timeline merged_with(const Timeline& other) const {
        if (resolution_ != other.resolution_)
            throw_data("cannot merge timelines with different resolutions");
        std::vector<std::int64_t> merged;
        merged.reserve(ticks_.size() + other.ticks_.size());
        std::merge(ticks_.begin(), ticks_.end(), other.ticks_.begin(), other.ticks_.end(),
                   std::back_inserter(merged));
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        return Timeline(entity_, std::move(merged), resolution_);
    }

    Timeline with_appended(std::int64_t extra_tick) const {
        std::vector<std::int64_t> ticks = ticks_;
        ticks.push_back(extra_tick);
        return Timeline(entity_, std::move(ticks), resolution_);
    }

    Timeline prefix(std::size_t count) const {
        if (count == 0 || count > ticks_.size())
            throw_usage("invalid timeline prefix length");
        return Timeline(entity_, std::vector<std::int64_t>(ticks_.begin(), ticks_.begin() + count),
                        resolution_);
    }

private:
    std::string entity_;
    std::vector<std::int64_t> ticks_;
    Resolution resolution_;
};

// Consecutive time differences of a timeline and their exact gcd, both kept
// in resolution ticks.
struct GapSet {
    std::vector<std::int64_t> gap_ticks;
    std::int64_t granularity_ticks = 0;
    Resolution resolution;

    std::size_t size() const { return gap_ticks.size(); }

    std::vector<double> gaps() const {
        std::vector<double> out(gap_ticks.size());
        const double step = resolution.value();
        for (std::size_t i = 0; i < gap_ticks.size(); ++i)
            out[i] = static_cast<double>(gap_ticks[i]) * step;
        return out;
    }

    double granularity() const {
        return static_cast<double>(granularity_ticks) * resolution.value();
    }
};

inline GapSet gaps(const Timeline& timeline) {
    if (timeline.size() < 2)
        throw_data("timeline '" + timeline.entity() + "' has no gaps (single time-point)");
    GapSet out;
    out.resolution = timeline.resolution();
    out.gap_ticks.reserve(timeline.size() - 1);
    std::int64_t g = 0;
    for (std::size_t i = 1; i < timeline.size(); ++i) {
        const std::int64_t gap = timeline.tick(i) - timeline.tick(i - 1);
        out.gap_ticks.push_back(gap);
        g = std::gcd(g, gap);
    }
    out.granularity_ticks = g;
    return out;
}

// Number of slices a discrete-time model at granularity gcd(gaps) needs to
// cover [min(T), max(T)] inclusive.
inline std::int64_t discrete_expansion_size(const Timeline& timeline) {
    const GapSet g = gaps(timeline);
    return (timeline.tick(timeline.size() - 1) - timeline.tick(0)) / g.granularity_ticks + 1;
}

inline double compression_ratio(const Timeline& timeline) {
    return static_cast<double>(discrete_expansion_size(timeline)) /
           static_cast<double>(timeline.size());
}

// Timeline with T_1 = 0 and i.i.d. geometric gaps on {1, 2, ...} (time units).
// The resolution must divide one time unit exactly.
inline Timeline simulate_geometric_timeline(std::size_t n, double p, RandomStream& rng,
                                            std::string entity = "sim",
                                            Resolution resolution = Resolution::unit()) {
    if (n < 1) throw_usage("timeline length must be at least 1");
    if (!(p > 0.0) || p > 1.0) throw_usage("geometric success probability must lie in (0, 1]");
    const auto per_unit = exact_ratio(Decimal{1, 0}, resolution.step);
    if (!per_unit || *per_unit <= 0)
        throw_usage("resolution must divide one time unit for geometric simulation");
    std::vector<std::int64_t> ticks;
    ticks.reserve(n);
    std::int64_t t = 0;
    ticks.push_back(t);
    for (std::size_t i = 1; i < n; ++i) {
        t += rng.geometric(p) * *per_unit;
        ticks.push_back(t);
    }
    return Timeline(std::move(entity), std::move(ticks), resolution);
}

} // namespace itbn
