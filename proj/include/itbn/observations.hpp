#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "itbn/errors.hpp"
#include "itbn/timegrid.hpp"

namespace itbn {

// Irregular observations for a set of entities: per entity a timeline plus a
// (process x slice) grid of optionally observed values. Missing observations
// are simply absent.
class ObservationSet {
public:
    using ValueGrid = std::vector<std::vector<std::optional<double>>>;

    struct Entity {
        Timeline timeline;
        ValueGrid values; // values[process][slice]

        std::optional<double> value(int process, int slice) const {
            return values[static_cast<std::size_t>(process)][static_cast<std::size_t>(slice)];
        }
    };

    explicit ObservationSet(std::vector<std::string> processes)
        : processes_(std::move(processes)) {}

    const std::vector<std::string>& processes() const { return processes_; }
    int process_count() const { return static_cast<int>(processes_.size()); }

    void add_entity(Timeline timeline, ValueGrid values) {
        if (values.size() != processes_.size())
            throw_data("observation grid does not match the declared processes");
        for (const auto& row : values)
            if (row.size() != timeline.size())
                throw_data("observation grid does not match the timeline length");
        const std::string id = timeline.entity();
        if (entities_.count(id)) throw_data("duplicate entity '" + id + "'");
        entities_.emplace(id, Entity{std::move(timeline), std::move(values)});
    }

    // Fully observed entity from a dense (process x slice) value matrix.
    void add_entity_full(Timeline timeline, const Eigen::MatrixXd& values) {
        ValueGrid grid(processes_.size());
        if (values.rows() != static_cast<Eigen::Index>(processes_.size()) ||
            values.cols() != static_cast<Eigen::Index>(timeline.size()))
            throw_data("value matrix does not match processes x slices");
        for (std::size_t p = 0; p < processes_.size(); ++p) {
            grid[p].resize(timeline.size());
            for (std::size_t j = 0; j < timeline.size(); ++j)
                grid[p][j] = values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j));
        }
        add_entity(std::move(timeline), std::move(grid));
    }

    bool has_entity(const std::string& id) const { return entities_.count(id) > 0; }

    const Entity& entity(const std::string& id) const {
        auto it = entities_.find(id);
        if (it == entities_.end()) throw_data("unknown entity '" + id + "'");
        return it->second;
    }

    std::vector<std::string> entity_ids() const {
        std::vector<std::string> out;
        out.reserve(entities_.size());
        for (const auto& [id, e] : entities_) out.push_back(id);
        return out;
    }

    std::size_t entity_count() const { return entities_.size(); }
    bool empty() const { return entities_.empty(); }

    bool slice_complete(const Entity& entity, int slice) const {
        for (std::size_t p = 0; p < processes_.size(); ++p)
            if (!entity.values[p][static_cast<std::size_t>(slice)]) return false;
        return true;
    }

    // Def 7: a prefix of slices where every process is observed and nothing
    // after.
    bool is_irregularly_complete(const Entity& entity, std::string* violation = nullptr) const {
        const std::size_t n = entity.timeline.size();
        std::size_t prefix = 0;
        while (prefix < n && slice_complete(entity, static_cast<int>(prefix))) ++prefix;
        for (std::size_t j = prefix; j < n; ++j) {
            for (std::size_t p = 0; p < processes_.size(); ++p) {
                if (entity.values[p][j]) {
                    if (violation)
                        *violation = processes_[p] + "@" + std::to_string(j) + " of entity '" +
                                     entity.timeline.entity() +
                                     "' is observed after an incomplete slice " +
                                     std::to_string(prefix);
                    return false;
                }
            }
        }
        return true;
    }

    // Value of a process at an arbitrary time: exact observation when one
    // exists, otherwise linear interpolation between the neighbouring
    // observations; nullopt outside the observed range.
    std::optional<double> interpolate(const Entity& entity, int process, double time) const {
        const auto& row = entity.values[static_cast<std::size_t>(process)];
        double left_t = 0.0, right_t = 0.0;
        std::optional<double> left_v, right_v;
        for (std::size_t j = 0; j < entity.timeline.size(); ++j) {
            if (!row[j]) continue;
            const double t = entity.timeline.time(j);
            if (std::abs(t - time) <= 1e-9) return row[j];
            if (t < time) {
                left_t = t;
                left_v = row[j];
            } else {
                right_t = t;
                right_v = row[j];
                break;
            }
        }
        if (!left_v || !right_v) return std::nullopt;
        const double w = (time - left_t) / (right_t - left_t);
        return *left_v + w * (*right_v - *left_v);
    }

    std::size_t total_observations() const {
        std::size_t count = 0;
        for (const auto& [id, e] : entities_)
            for (const auto& row : e.values)
                for (const auto& v : row)
                    if (v) ++count;
        return count;
    }

private:
    std::vector<std::string> processes_;
    std::map<std::string, Entity> entities_; // ordered for determinism
};

} // namespace itbn
