#pragma once

// Bounded-representation-complexity common-ancestor solver.
//
// Given a class set omega (a rank prefix of the sorted class order), the
// solver finds the class set Y* minimizing |Y*| - mass(Y*) among sets that
// contain omega and can be written as a union of at most r pairwise-disjoint
// hierarchy nodes. The search runs as a bottom-up dynamic program: each node
// with marked (= omega-intersecting) descendants stores, per budget b, the
// best cover of its marked classes using at most b nodes of its subtree.
// Internal nodes combine children by enumerating integer compositions of the
// budget onto their marked children, each part at least 1.
//
// Two observations keep the enumeration small:
//   * if a node has more marked children than budget, the only feasible
//     answer below that budget is the node itself;
//   * once the budget reaches the minimal-cover size of the marked classes
//     under a node, the exact marked set is optimal and larger budgets
//     cannot improve it, so per-node tables are capped there.
//
// The table updates incrementally: adding one class to omega only touches
// the nodes on that leaf's path to the root, which is what makes walking the
// whole nested-ancestor sequence affordable.

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hcp/errors.hpp"
#include "hcp/hierarchy.hpp"
#include "hcp/probability.hpp"

namespace hcp {

// Costs this close are treated as exact ties and resolved by the
// lexicographically smallest class set, keeping results deterministic and
// independent of floating-point summation order.
inline constexpr double kCostTieTolerance = 1e-12;

// Classes at least as probable as y: the prefix of the canonical order up to
// and including y, returned as a sorted class-id set.
inline std::vector<int> omega_set(const ProbabilityView& p, int y) {
    const int r = p.rank_of(y);
    const auto order = p.order();
    std::vector<int> omega(order.begin(), order.begin() + r + 1);
    std::sort(omega.begin(), omega.end());
    return omega;
}

struct AncestorSolution {
    std::vector<int> classes;  // sorted class ids
    NodeSet cover;             // minimal disjoint node cover of `classes`
    double mass = 0.0;
    double cost = 0.0;  // |classes| - mass
};

class AncestorTable {
public:
    AncestorTable(const Hierarchy& h, int budget) : h_(&h) {
        if (budget < 1) throw usage_error("ancestor budget must be >= 1");
        // Budgets beyond K never help: any class set is a union of K leaves.
        budget_ = std::min(budget, h.num_classes());
        state_.resize(static_cast<std::size_t>(h.num_nodes()));
        in_omega_.assign(static_cast<std::size_t>(h.num_classes()), 0);
    }

    int budget() const { return budget_; }

    // Rebind to a view and clear all marks; keeps allocated storage.
    void reset(const ProbabilityView& p) {
        p_ = &p;
        for (int v : touched_) {
            NodeState& s = state_[static_cast<std::size_t>(v)];
            s.omega_count = 0;
            s.omega_mass = 0.0;
            s.min_cover = 0;
            s.cap = 0;
        }
        touched_.clear();
        for (int c : omega_) in_omega_[static_cast<std::size_t>(c)] = 0;
        omega_.clear();
    }

    int omega_size() const { return static_cast<int>(omega_.size()); }

    // Extends omega with one class and refreshes the tables along the leaf's
    // path to the root; no other node can change.
    void add_class(int c) {
        if (p_ == nullptr) throw usage_error("AncestorTable: reset() before add_class()");
        if (c < 0 || c >= h_->num_classes())
            throw usage_error("invalid class id " + std::to_string(c));
        if (in_omega_[static_cast<std::size_t>(c)]) return;
        in_omega_[static_cast<std::size_t>(c)] = 1;
        omega_.push_back(c);
        const double mass = p_->leaf_mass(c);
        // Bottom-up: the on-path child is recomputed before its parent.
        for (int v = h_->leaf_of_class(c); v != -1; v = h_->parent(v)) {
            NodeState& s = state_[static_cast<std::size_t>(v)];
            if (s.omega_count == 0) touched_.push_back(v);
            s.omega_count += 1;
            s.omega_mass += mass;
            recompute(v);
        }
    }

    // Best solution at the root for the full budget.
    int solution_size() const { return root_entry().size; }
    double solution_mass() const { return root_entry().mass; }
    double solution_cost() const { return root_entry().cost; }
    void materialize_solution(std::vector<int>& out) const {
        out.clear();
        materialize(Hierarchy::root(), budget_, out);
    }

private:
    struct Entry {
        double cost = 0.0;
        double mass = 0.0;
        int size = 0;
        enum Kind : std::uint8_t {
            kLeaf,        // the leaf's own class
            kCollapse,    // the node's full class range
            kOmegaExact,  // exactly the marked classes under the node
            kSplit        // union of child solutions, per `parts`
        } kind = kLeaf;
        std::vector<std::pair<int, int>> parts;  // (child node, child budget)
    };

    struct NodeState {
        int omega_count = 0;    // |omega ∩ classes(v)|
        double omega_mass = 0;  // mass of omega ∩ classes(v)
        int min_cover = 0;      // R_T(omega ∩ classes(v)); 0 while unmarked
        int cap = 0;            // stored budgets are 1..cap
        std::vector<Entry> best;
    };

    const Entry& entry(int v, int b) const {
        const NodeState& s = state_[static_cast<std::size_t>(v)];
        const int idx = std::min(b, s.cap) - 1;
        return s.best[static_cast<std::size_t>(idx)];
    }

    const Entry& root_entry() const {
        if (omega_.empty()) throw usage_error("AncestorTable: omega is empty");
        return entry(Hierarchy::root(), budget_);
    }

    void materialize(int v, int b, std::vector<int>& out) const {
        const Entry& e = entry(v, b);
        switch (e.kind) {
            case Entry::kLeaf:
                out.push_back(h_->class_begin(v));
                break;
            case Entry::kCollapse:
                for (int c = h_->class_begin(v); c < h_->class_end(v); ++c) out.push_back(c);
                break;
            case Entry::kOmegaExact:
                for (int c = h_->class_begin(v); c < h_->class_end(v); ++c)
                    if (in_omega_[static_cast<std::size_t>(c)]) out.push_back(c);
                break;
            case Entry::kSplit:
                for (auto [child, part] : e.parts) materialize(child, part, out);
                break;
        }
    }

    void recompute(int v) {
        NodeState& s = state_[static_cast<std::size_t>(v)];
        const HierarchyNode& n = h_->node(v);

        if (n.children.empty()) {
            s.min_cover = 1;
            s.cap = 1;
            if (s.best.empty()) s.best.emplace_back();
            Entry& e = s.best[0];
            e.mass = s.omega_mass;
            e.size = 1;
            e.cost = 1.0 - e.mass;
            e.kind = Entry::kLeaf;
            return;
        }

        marked_children_.clear();
        for (int c : n.children)
            if (state_[static_cast<std::size_t>(c)].omega_count > 0) marked_children_.push_back(c);
        const int m = static_cast<int>(marked_children_.size());

        if (s.omega_count == h_->class_count(v)) {
            s.min_cover = 1;  // the whole node is marked
        } else {
            int mc = 0;
            for (int c : marked_children_) mc += state_[static_cast<std::size_t>(c)].min_cover;
            s.min_cover = mc;
        }
        s.cap = std::min(budget_, s.min_cover);
        while (static_cast<int>(s.best.size()) < s.cap) s.best.emplace_back();

        for (int b = 1; b <= s.cap; ++b) {
            Entry& e = s.best[static_cast<std::size_t>(b - 1)];
            if (b == s.min_cover) {
                // Saturated: the marked classes themselves are representable
                // within b nodes, and any superset only adds cost.
                e.mass = s.omega_mass;
                e.size = s.omega_count;
                e.cost = static_cast<double>(e.size) - e.mass;
                e.kind = s.omega_count == h_->class_count(v) ? Entry::kCollapse
                                                             : Entry::kOmegaExact;
                e.parts.clear();
                continue;
            }
            if (m > b) {
                // Any cover strictly below v needs one node per marked child.
                fill_collapse(v, e);
                continue;
            }
            best_from_compositions(v, b, e);
        }
    }

    void fill_collapse(int v, Entry& e) {
        e.mass = p_->node_mass(v);
        e.size = h_->class_count(v);
        e.cost = static_cast<double>(e.size) - e.mass;
        e.kind = Entry::kCollapse;
        e.parts.clear();
    }

    // Minimizes over all compositions of b onto the marked children (every
    // marked child gets >= 1, capped by its own table); the collapsed node is
    // kept as a candidate so exact cost ties still resolve lexicographically.
    void best_from_compositions(int v, int b, Entry& out) {
        const int m = static_cast<int>(marked_children_.size());
        caps_.resize(static_cast<std::size_t>(m));
        suffix_caps_.assign(static_cast<std::size_t>(m) + 1, 0);
        for (int i = m - 1; i >= 0; --i) {
            caps_[static_cast<std::size_t>(i)] =
                state_[static_cast<std::size_t>(marked_children_[static_cast<std::size_t>(i)])].cap;
            suffix_caps_[static_cast<std::size_t>(i)] =
                suffix_caps_[static_cast<std::size_t>(i) + 1] + caps_[static_cast<std::size_t>(i)];
        }

        bool have_best = false;
        double best_cost = 0.0;
        parts_.assign(static_cast<std::size_t>(m), 0);
        best_parts_.clear();

        auto consider = [&](bool collapse_candidate) {
            double cost;
            if (collapse_candidate) {
                cost = static_cast<double>(h_->class_count(v)) - p_->node_mass(v);
            } else {
                cost = 0.0;
                for (int i = 0; i < m; ++i)
                    cost += entry(marked_children_[static_cast<std::size_t>(i)],
                                  parts_[static_cast<std::size_t>(i)])
                                .cost;
            }
            if (have_best && cost > best_cost + kCostTieTolerance) return;
            bool take = !have_best || cost < best_cost - kCostTieTolerance;
            if (!take) {
                // Exact tie: keep the lexicographically smaller class set.
                materialize_candidate(v, collapse_candidate, scratch_a_);
                materialize_best(v, scratch_b_);
                take = std::lexicographical_compare(scratch_a_.begin(), scratch_a_.end(),
                                                    scratch_b_.begin(), scratch_b_.end());
            }
            if (take) {
                have_best = true;
                best_cost = cost;
                best_is_collapse_ = collapse_candidate;
                best_parts_.assign(parts_.begin(), parts_.end());
            }
        };

        // Assign parts left to right; prune by what the remaining children
        // can still absorb.
        auto assign = [&](auto&& self, int i, int remaining) -> void {
            if (i == m - 1) {
                if (remaining >= 1 && remaining <= caps_[static_cast<std::size_t>(i)]) {
                    parts_[static_cast<std::size_t>(i)] = remaining;
                    consider(false);
                }
                return;
            }
            const int tail = suffix_caps_[static_cast<std::size_t>(i) + 1];
            const int lo = std::max(1, remaining - tail);
            const int hi = std::min(caps_[static_cast<std::size_t>(i)], remaining - (m - 1 - i));
            for (int part = lo; part <= hi; ++part) {
                parts_[static_cast<std::size_t>(i)] = part;
                self(self, i + 1, remaining - part);
            }
        };
        assign(assign, 0, b);
        consider(true);

        if (best_is_collapse_) {
            fill_collapse(v, out);
            return;
        }
        out.kind = Entry::kSplit;
        out.parts.clear();
        out.mass = 0.0;
        out.size = 0;
        for (int i = 0; i < m; ++i) {
            const int child = marked_children_[static_cast<std::size_t>(i)];
            const int part = best_parts_[static_cast<std::size_t>(i)];
            out.parts.emplace_back(child, part);
            const Entry& ce = entry(child, part);
            out.mass += ce.mass;
            out.size += ce.size;
        }
        out.cost = static_cast<double>(out.size) - out.mass;
    }

    void materialize_candidate(int v, bool collapse_candidate, std::vector<int>& out) {
        out.clear();
        if (collapse_candidate) {
            for (int c = h_->class_begin(v); c < h_->class_end(v); ++c) out.push_back(c);
            return;
        }
        const int m = static_cast<int>(marked_children_.size());
        for (int i = 0; i < m; ++i)
            materialize(marked_children_[static_cast<std::size_t>(i)],
                        parts_[static_cast<std::size_t>(i)], out);
    }

    void materialize_best(int v, std::vector<int>& out) {
        out.clear();
        if (best_is_collapse_) {
            for (int c = h_->class_begin(v); c < h_->class_end(v); ++c) out.push_back(c);
            return;
        }
        const int m = static_cast<int>(marked_children_.size());
        for (int i = 0; i < m; ++i)
            materialize(marked_children_[static_cast<std::size_t>(i)],
                        best_parts_[static_cast<std::size_t>(i)], out);
    }

    const Hierarchy* h_;
    const ProbabilityView* p_ = nullptr;
    int budget_ = 1;
    std::vector<NodeState> state_;
    std::vector<int> touched_;
    std::vector<std::uint8_t> in_omega_;
    std::vector<int> omega_;

    // Scratch reused across recompute() calls.
    std::vector<int> marked_children_;
    std::vector<int> caps_;
    std::vector<int> suffix_caps_;
    std::vector<int> parts_;
    std::vector<int> best_parts_;
    bool best_is_collapse_ = false;
    std::vector<int> scratch_a_;
    std::vector<int> scratch_b_;
};

// Exact minimizer of |Y| - mass(Y) over class sets Y ⊇ omega with
// representation complexity at most `budget`; ties by lexicographically
// smallest class set.
inline AncestorSolution solve_ancestors(const Hierarchy& h, const ProbabilityView& p,
                                        std::span<const int> omega, int budget) {
    if (omega.empty()) throw usage_error("solve_ancestors: omega must be non-empty");
    std::vector<int> sorted(omega.begin(), omega.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    AncestorTable table(h, budget);
    table.reset(p);
    for (int c : sorted) table.add_class(c);

    AncestorSolution sol;
    table.materialize_solution(sol.classes);
    sol.mass = table.solution_mass();
    sol.cost = table.solution_cost();
    sol.cover = minimal_cover(h, sol.classes);
    return sol;
}

// Independent oracle: enumerates every subset of at most `budget` pairwise-
// disjoint nodes whose union contains omega. Guarded to small hierarchies.
inline AncestorSolution bruteforce_ancestors(const Hierarchy& h, const ProbabilityView& p,
                                             std::span<const int> omega, int budget) {
    if (omega.empty()) throw usage_error("bruteforce_ancestors: omega must be non-empty");
    if (budget < 1) throw usage_error("bruteforce_ancestors: budget must be >= 1");
    if (h.num_nodes() > 25)
        throw usage_error("bruteforce_ancestors: hierarchy too large (" +
                          std::to_string(h.num_nodes()) + " nodes, guard is 25)");

    std::vector<std::uint8_t> needed(static_cast<std::size_t>(h.num_classes()), 0);
    for (int c : omega) {
        if (c < 0 || c >= h.num_classes()) throw usage_error("invalid class id");
        needed[static_cast<std::size_t>(c)] = 1;
    }

    const int max_nodes = std::min(budget, h.num_classes());
    std::vector<int> chosen;
    std::vector<int> classes;
    bool have_best = false;
    AncestorSolution best;

    auto evaluate = [&]() {
        classes.clear();
        for (int v : chosen)
            for (int c = h.class_begin(v); c < h.class_end(v); ++c) classes.push_back(c);
        std::sort(classes.begin(), classes.end());
        for (int c = 0; c < h.num_classes(); ++c)
            if (needed[static_cast<std::size_t>(c)] &&
                !std::binary_search(classes.begin(), classes.end(), c))
                return;
        double mass = 0.0;
        for (int c : classes) mass += p.leaf_mass(c);
        const double cost = static_cast<double>(classes.size()) - mass;
        bool take = !have_best || cost < best.cost - kCostTieTolerance;
        if (!take && have_best && cost <= best.cost + kCostTieTolerance)
            take = std::lexicographical_compare(classes.begin(), classes.end(),
                                                best.classes.begin(), best.classes.end());
        if (take) {
            have_best = true;
            best.classes = classes;
            best.mass = mass;
            best.cost = cost;
        }
    };

    auto disjoint_with_chosen = [&](int v) {
        for (int u : chosen) {
            const bool apart =
                h.class_end(u) <= h.class_begin(v) || h.class_end(v) <= h.class_begin(u);
            if (!apart) return false;
        }
        return true;
    };

    auto search = [&](auto&& self, int next) -> void {
        evaluate();
        if (static_cast<int>(chosen.size()) == max_nodes) return;
        for (int v = next; v < h.num_nodes(); ++v) {
            if (!disjoint_with_chosen(v)) continue;
            chosen.push_back(v);
            self(self, v + 1);
            chosen.pop_back();
        }
    };
    search(search, 0);

    if (!have_best)
        throw usage_error("bruteforce_ancestors: no feasible cover");  // cannot happen: root covers all
    best.cover = minimal_cover(h, best.classes);
    return best;
}

struct SequenceEntry {
    std::vector<int> classes;
    double mass = 0.0;
};

// Lazily walks the ordered sequence of unique bounded common ancestors for
// one instance: rank by rank, extend omega, solve, and append whenever the
// optimal set's cardinality grew. Entries are nested and strictly growing;
// the final entry is always the full class set.
class SequenceWalker {
public:
    SequenceWalker(const Hierarchy& h, int budget) : h_(&h), table_(h, budget) {
        in_entry_.assign(static_cast<std::size_t>(h.num_classes()), 0);
    }

    void reset(const ProbabilityView& p) {
        p_ = &p;
        table_.reset(p);
        std::fill(in_entry_.begin(), in_entry_.end(), 0);
        classes_.clear();
        prev_classes_.clear();
        next_rank_ = 0;
        mass_ = prev_mass_ = 0.0;
        size_ = prev_size_ = 0;
        entry_count_ = 0;
        done_ = false;
    }

    // Advances to the next unique entry; false once the sequence is finished.
    bool advance() {
        if (p_ == nullptr) throw usage_error("SequenceWalker: reset() before advance()");
        if (done_) return false;
        const int k = h_->num_classes();
        while (next_rank_ < k) {
            const int y = p_->class_at_rank(next_rank_);
            table_.add_class(y);
            ++next_rank_;
            if (in_entry_[static_cast<std::size_t>(y)]) continue;
            if (table_.solution_size() == size_) continue;  // same cardinality: not unique
            table_.materialize_solution(scratch_);
            // The predictor requires a nested family. On rare instances the
            // per-rank optimum does not contain the previous entry (budget
            // can migrate between branches); such candidates are skipped and
            // their classes enter through a later, larger entry.
            if (!std::includes(scratch_.begin(), scratch_.end(), classes_.begin(),
                               classes_.end()))
                continue;
            prev_mass_ = mass_;
            prev_size_ = size_;
            prev_classes_.swap(classes_);
            classes_.swap(scratch_);
            mass_ = table_.solution_mass();
            size_ = table_.solution_size();
            for (int c : prev_classes_) in_entry_[static_cast<std::size_t>(c)] = 0;
            for (int c : classes_) in_entry_[static_cast<std::size_t>(c)] = 1;
            ++entry_count_;
            if (size_ == k) done_ = true;
            return true;
        }
        // Exhausted the order without reaching the full set (possible only
        // under exact-tie skips): close the sequence with Y itself.
        if (size_ < k) {
            prev_mass_ = mass_;
            prev_size_ = size_;
            classes_.resize(static_cast<std::size_t>(k));
            for (int c = 0; c < k; ++c) {
                classes_[static_cast<std::size_t>(c)] = c;
                in_entry_[static_cast<std::size_t>(c)] = 1;
            }
            mass_ = p_->node_mass(Hierarchy::root());
            size_ = k;
            ++entry_count_;
            done_ = true;
            return true;
        }
        done_ = true;
        return false;
    }

    const std::vector<int>& classes() const { return classes_; }
    double mass() const { return mass_; }
    int size() const { return size_; }
    double prev_mass() const { return prev_mass_; }
    int prev_size() const { return prev_size_; }
    int entry_count() const { return entry_count_; }
    bool contains(int c) const { return in_entry_[static_cast<std::size_t>(c)] != 0; }

private:
    const Hierarchy* h_;
    const ProbabilityView* p_ = nullptr;
    AncestorTable table_;
    std::vector<std::uint8_t> in_entry_;
    std::vector<int> classes_;
    std::vector<int> prev_classes_;
    std::vector<int> scratch_;
    int next_rank_ = 0;
    double mass_ = 0.0, prev_mass_ = 0.0;
    int size_ = 0, prev_size_ = 0;
    int entry_count_ = 0;
    bool done_ = false;
};

inline std::vector<SequenceEntry> ancestor_sequence(const Hierarchy& h, const ProbabilityView& p,
                                                    int budget) {
    SequenceWalker walker(h, budget);
    walker.reset(p);
    std::vector<SequenceEntry> entries;
    while (walker.advance()) entries.push_back({walker.classes(), walker.mass()});
    return entries;
}

}  // namespace hcp
