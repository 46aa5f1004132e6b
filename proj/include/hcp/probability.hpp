#pragma once

// Per-instance class distributions over a hierarchy. A ProbabilityView owns
// the K leaf masses, the eagerly computed node masses, and the canonical
// sorted class order (mass descending, ties by ascending class id). Views are
// immutable after construction and safe for concurrent reads.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hcp/errors.hpp"
#include "hcp/hierarchy.hpp"

namespace hcp {

// Tolerance for all normalization checks (mass sums, branch sums).
inline constexpr double kMassEpsilon = 1e-9;

class ProbabilityView {
public:
    ProbabilityView(const Hierarchy& h, std::vector<double> leaf_mass)
        : h_(&h), leaf_mass_(std::move(leaf_mass)) {
        const int k = h.num_classes();
        if (static_cast<int>(leaf_mass_.size()) != k)
            throw data_error("probability row has " + std::to_string(leaf_mass_.size()) +
                             " entries, hierarchy has " + std::to_string(k) + " classes");
        double total = 0.0;
        for (double m : leaf_mass_) {
            if (!(m >= 0.0))
                throw numeric_error("negative or non-finite class probability");
            total += m;
        }
        if (std::abs(total - 1.0) > kMassEpsilon)
            throw numeric_error("class probabilities sum to " + std::to_string(total) +
                                ", expected 1 within 1e-9");

        // Node masses bottom-up; preorder ids guarantee children follow parents.
        node_mass_.assign(static_cast<std::size_t>(h.num_nodes()), 0.0);
        for (int v = h.num_nodes() - 1; v >= 0; --v) {
            const HierarchyNode& n = h.node(v);
            if (n.children.empty()) {
                node_mass_[static_cast<std::size_t>(v)] =
                    leaf_mass_[static_cast<std::size_t>(n.class_begin)];
            } else {
                double s = 0.0;
                for (int c : n.children) s += node_mass_[static_cast<std::size_t>(c)];
                node_mass_[static_cast<std::size_t>(v)] = s;
            }
        }
        // The root's mass is 1 by normalization (already validated above);
        // pinning it keeps the top of every nested family at threshold 1
        // instead of drifting by accumulated rounding.
        node_mass_[0] = 1.0;

        order_.resize(static_cast<std::size_t>(k));
        std::iota(order_.begin(), order_.end(), 0);
        std::sort(order_.begin(), order_.end(), [&](int a, int b) {
            const double ma = leaf_mass_[static_cast<std::size_t>(a)];
            const double mb = leaf_mass_[static_cast<std::size_t>(b)];
            if (ma != mb) return ma > mb;
            return a < b;
        });
        rank_.resize(static_cast<std::size_t>(k));
        for (int r = 0; r < k; ++r) rank_[static_cast<std::size_t>(order_[static_cast<std::size_t>(r)])] = r;
    }

    const Hierarchy& hierarchy() const { return *h_; }
    int num_classes() const { return static_cast<int>(leaf_mass_.size()); }

    double leaf_mass(int c) const {
        if (c < 0 || c >= num_classes())
            throw usage_error("invalid class id " + std::to_string(c));
        return leaf_mass_[static_cast<std::size_t>(c)];
    }
    std::span<const double> leaf_masses() const { return leaf_mass_; }

    double node_mass(int v) const {
        if (v < 0 || v >= static_cast<int>(node_mass_.size()))
            throw usage_error("invalid node id " + std::to_string(v));
        return node_mass_[static_cast<std::size_t>(v)];
    }

    // Classes by descending mass, ties by ascending class id.
    std::span<const int> order() const { return order_; }
    int class_at_rank(int r) const { return order_[static_cast<std::size_t>(r)]; }
    int rank_of(int c) const {
        leaf_mass(c);  // bounds check
        return rank_[static_cast<std::size_t>(c)];
    }

private:
    const Hierarchy* h_;
    std::vector<double> leaf_mass_;
    std::vector<double> node_mass_;
    std::vector<int> order_;
    std::vector<int> rank_;
};

// Probability mass of a node: sum of its leaf masses.
inline double node_mass(const Hierarchy& h, const ProbabilityView& p, int v) {
    h.node(v);
    return p.node_mass(v);
}

// Highest-probability class (first element of the canonical order).
inline int mode(const ProbabilityView& p) { return p.class_at_rank(0); }

// Conditional mass of each node given its parent; entry for the root is 1.
using BranchTable = std::vector<double>;

inline BranchTable to_branch_table(const Hierarchy& h, const ProbabilityView& p) {
    BranchTable branch(static_cast<std::size_t>(h.num_nodes()), 1.0);
    for (int v = 0; v < h.num_nodes(); ++v) {
        const HierarchyNode& n = h.node(v);
        if (n.children.empty()) continue;
        const double pm = p.node_mass(v);
        for (int c : n.children) {
            branch[static_cast<std::size_t>(c)] =
                pm > 0.0 ? p.node_mass(c) / pm : 1.0 / static_cast<double>(n.children.size());
        }
    }
    return branch;
}

inline ProbabilityView from_branch_table(const Hierarchy& h, const BranchTable& branch) {
    if (static_cast<int>(branch.size()) != h.num_nodes())
        throw data_error("branch table size does not match hierarchy");
    if (std::abs(branch[0] - 1.0) > kMassEpsilon)
        throw numeric_error("root branch probability must be 1");
    for (int v = 0; v < h.num_nodes(); ++v) {
        const HierarchyNode& n = h.node(v);
        if (n.children.empty()) continue;
        double s = 0.0;
        for (int c : n.children) s += branch[static_cast<std::size_t>(c)];
        if (std::abs(s - 1.0) > kMassEpsilon)
            throw numeric_error("branch probabilities of node '" + n.name + "' sum to " +
                                std::to_string(s) + ", expected 1 within 1e-9");
    }

    // Leaf mass = product of branch probabilities along the path to the root.
    std::vector<double> leaf_mass(static_cast<std::size_t>(h.num_classes()), 0.0);
    std::vector<std::pair<int, double>> stack{{Hierarchy::root(), 1.0}};
    while (!stack.empty()) {
        auto [v, prod] = stack.back();
        stack.pop_back();
        const HierarchyNode& n = h.node(v);
        if (n.children.empty()) {
            leaf_mass[static_cast<std::size_t>(n.class_begin)] = prod;
            continue;
        }
        for (int c : n.children)
            stack.emplace_back(c, prod * branch[static_cast<std::size_t>(c)]);
    }
    return ProbabilityView(h, std::move(leaf_mass));
}

}  // namespace hcp
