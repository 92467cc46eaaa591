#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace esapiens::retrieval {

struct HnswParams {
    std::size_t M = 16;
    std::size_t ef_construction = 200;
    std::size_t ef_search = 100;
    std::uint64_t seed = 42;
};

/// Hierarchical navigable small-world graph over unit vectors, cosine
/// distance (1 - dot). Insertion is single-writer; once built, `search` is
/// const and safe to call from any number of threads.
///
/// Neighbour lists are pruned with the diversity heuristic: a candidate is
/// kept only if it is closer to the base node than to every neighbour
/// already kept. Layer 0 keeps up to 2*M links, upper layers M.
template <typename Scalar = double>
class HnswIndex {
public:
    using Id = std::uint32_t;
    using Scored = std::pair<Scalar, Id>;  // (distance, id); lexicographic order

    HnswIndex(std::size_t dimension, HnswParams params)
        : dim_(dimension), params_(params), rng_(params.seed),
          level_mult_(1.0 / std::log(static_cast<double>(std::max<std::size_t>(params.M, 2)))) {
        if (dim_ == 0) throw std::invalid_argument("hnsw: dimension must be positive");
        if (params_.M < 2) throw std::invalid_argument("hnsw: M must be >= 2");
    }

    [[nodiscard]] std::size_t size() const { return levels_.size(); }
    [[nodiscard]] std::size_t dimension() const { return dim_; }
    [[nodiscard]] const HnswParams& params() const { return params_; }

    [[nodiscard]] std::span<const Scalar> vector(Id id) const {
        return {data_.data() + static_cast<std::size_t>(id) * dim_, dim_};
    }

    [[nodiscard]] Scalar distance(std::span<const Scalar> a, std::span<const Scalar> b) const {
        Scalar dot = 0;
        for (std::size_t i = 0; i < dim_; ++i) dot += a[i] * b[i];
        return Scalar(1) - dot;
    }

    Id add(std::span<const Scalar> v) {
        if (v.size() != dim_) throw std::invalid_argument("hnsw: dimension mismatch");
        const Id id = static_cast<Id>(levels_.size());
        data_.insert(data_.end(), v.begin(), v.end());
        const int level = draw_level();
        levels_.push_back(level);
        links_.emplace_back(static_cast<std::size_t>(level) + 1);

        if (id == 0) {
            entry_ = 0;
            max_level_ = level;
            return id;
        }

        const auto q = vector(id);
        Id ep = entry_;
        Scalar ep_dist = distance(q, vector(ep));
        for (int lc = max_level_; lc > level; --lc) greedy_step(q, lc, ep, ep_dist);

        std::vector<Scored> entry_points{{ep_dist, ep}};
        for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
            auto found = search_layer(q, entry_points, params_.ef_construction, lc);
            auto neighbours = select_neighbours(found, params_.M);
            auto& mine = links_[id][static_cast<std::size_t>(lc)];
            for (const auto& [d, n] : neighbours) mine.push_back(n);
            for (const auto& [d, n] : neighbours) connect_back(n, id, lc);
            entry_points = std::move(found);
        }
        if (level > max_level_) {
            max_level_ = level;
            entry_ = id;
        }
        return id;
    }

    /// k nearest by cosine distance, ascending; ties broken by id.
    [[nodiscard]] std::vector<Scored> search(std::span<const Scalar> q, std::size_t k,
                                             std::size_t ef = 0) const {
        if (levels_.empty() || k == 0) return {};
        if (q.size() != dim_) throw std::invalid_argument("hnsw: query dimension mismatch");
        ef = std::max({ef == 0 ? params_.ef_search : ef, k});
        Id ep = entry_;
        Scalar ep_dist = distance(q, vector(ep));
        for (int lc = max_level_; lc > 0; --lc) greedy_step(q, lc, ep, ep_dist);
        auto found = search_layer(q, {{ep_dist, ep}}, ef, 0);
        if (found.size() > k) found.resize(k);
        return found;
    }

    [[nodiscard]] const std::vector<Id>& neighbours(Id id, int level) const {
        return links_[id][static_cast<std::size_t>(level)];
    }
    [[nodiscard]] int level_of(Id id) const { return levels_[id]; }
    [[nodiscard]] int max_level() const { return max_level_; }

private:
    [[nodiscard]] std::size_t max_links(int level) const {
        return level == 0 ? 2 * params_.M : params_.M;
    }

    int draw_level() {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        double u = uni(rng_);
        if (u <= 0.0) u = 1e-12;
        return static_cast<int>(std::floor(-std::log(u) * level_mult_));
    }

    void greedy_step(std::span<const Scalar> q, int level, Id& ep, Scalar& ep_dist) const {
        bool improved = true;
        while (improved) {
            improved = false;
            for (Id n : links_[ep][static_cast<std::size_t>(level)]) {
                const Scalar d = distance(q, vector(n));
                if (d < ep_dist || (d == ep_dist && n < ep)) {
                    ep = n;
                    ep_dist = d;
                    improved = true;
                }
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` results sorted ascending.
    std::vector<Scored> search_layer(std::span<const Scalar> q, const std::vector<Scored>& entry,
                                     std::size_t ef, int level) const {
        std::vector<char> visited(levels_.size(), 0);
        std::priority_queue<Scored, std::vector<Scored>, std::greater<>> candidates;
        std::priority_queue<Scored> best;  // max-heap: worst on top
        for (const auto& e : entry) {
            if (visited[e.second]) continue;
            visited[e.second] = 1;
            candidates.push(e);
            best.push(e);
        }
        while (best.size() > ef) best.pop();

        while (!candidates.empty()) {
            const auto current = candidates.top();
            candidates.pop();
            if (best.size() >= ef && current > best.top()) break;
            for (Id n : links_[current.second][static_cast<std::size_t>(level)]) {
                if (visited[n]) continue;
                visited[n] = 1;
                const Scored s{distance(q, vector(n)), n};
                if (best.size() < ef || s < best.top()) {
                    candidates.push(s);
                    best.push(s);
                    if (best.size() > ef) best.pop();
                }
            }
        }
        std::vector<Scored> out;
        out.reserve(best.size());
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    /// `sorted` ascending by distance to the base node.
    std::vector<Scored> select_neighbours(const std::vector<Scored>& sorted, std::size_t m) const {
        std::vector<Scored> kept;
        kept.reserve(m);
        for (const auto& cand : sorted) {
            if (kept.size() >= m) break;
            bool diverse = true;
            for (const auto& k : kept) {
                if (distance(vector(cand.second), vector(k.second)) < cand.first) {
                    diverse = false;
                    break;
                }
            }
            if (diverse) kept.push_back(cand);
        }
        return kept;
    }

    void connect_back(Id node, Id new_id, int level) {
        auto& list = links_[node][static_cast<std::size_t>(level)];
        list.push_back(new_id);
        const std::size_t cap = max_links(level);
        if (list.size() <= cap) return;
        const auto base = vector(node);
        std::vector<Scored> scored;
        scored.reserve(list.size());
        for (Id n : list) scored.emplace_back(distance(base, vector(n)), n);
        std::sort(scored.begin(), scored.end());
        const auto kept = select_neighbours(scored, cap);
        list.clear();
        for (const auto& [d, n] : kept) list.push_back(n);
    }

    std::size_t dim_;
    HnswParams params_;
    std::mt19937_64 rng_;
    double level_mult_;
    std::vector<Scalar> data_;
    std::vector<int> levels_;
    std::vector<std::vector<std::vector<Id>>> links_;
    Id entry_ = 0;
    int max_level_ = 0;
};

}  // namespace esapiens::retrieval
