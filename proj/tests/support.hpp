#pragma once

// Shared fixtures for the test suites.
//
// The "demo" fixture is the standard 8-class two-level binary tree used
// throughout: internal nodes v1..v7, leaves named "1".."8" (class ids 0..7 in
// leaf order), with the instance distribution
//   .15 .13 .08 .125 | .14 .125 .125 .125
// Node mass checkpoints: v2 = .485, v3 = .515, v4 = .28, v5 = .205,
// v6 = .265, v7 = .25.

#include <string>
#include <vector>

#include "hcp/ancestors.hpp"
#include "hcp/conformal.hpp"
#include "hcp/hierarchy.hpp"
#include "hcp/probability.hpp"
#include "hcp/random.hpp"

namespace hcptest {

inline const char* kDemoHierarchyJson = R"({
  "name": "v1",
  "children": [
    {"name": "v2", "children": [
      {"name": "v4", "children": [{"name": "1"}, {"name": "2"}]},
      {"name": "v5", "children": [{"name": "3"}, {"name": "4"}]}
    ]},
    {"name": "v3", "children": [
      {"name": "v6", "children": [{"name": "5"}, {"name": "6"}]},
      {"name": "v7", "children": [{"name": "7"}, {"name": "8"}]}
    ]}
  ]
})";

inline hcp::Hierarchy demo_hierarchy() { return hcp::parse_hierarchy(kDemoHierarchyJson); }

inline std::vector<double> demo_masses() {
    return {0.15, 0.13, 0.08, 0.125, 0.14, 0.125, 0.125, 0.125};
}

inline hcp::ProbabilityView demo_view(const hcp::Hierarchy& h) {
    return hcp::ProbabilityView(h, demo_masses());
}

// Node id by name; the demo tree is small enough for a linear scan.
inline int node_by_name(const hcp::Hierarchy& h, const std::string& name) {
    for (int v = 0; v < h.num_nodes(); ++v)
        if (h.node_name(v) == name) return v;
    throw std::runtime_error("no node named " + name);
}

// Classes by their demo leaf names ("1".."8") so tests read like the tree.
inline std::vector<int> classes_named(const hcp::Hierarchy& h,
                                      const std::vector<std::string>& names) {
    std::vector<int> ids;
    for (const std::string& n : names) ids.push_back(h.class_id(n));
    return ids;
}

// Random tree with mixed arity in [2, max_arity] over exactly k leaves.
inline hcp::Hierarchy random_tree(int k, int max_arity, std::uint64_t key) {
    hcp::rng::Substream s(key);
    int internal_counter = 0;
    int leaf_counter = 0;
    auto build = [&](auto&& self, int n) -> hcp::NodeSpec {
        if (n == 1) return {"c" + std::to_string(leaf_counter++), {}};
        const int arity =
            std::min(n, 2 + static_cast<int>(s.next_open_unit() * (max_arity - 1)));
        hcp::NodeSpec spec{"n" + std::to_string(internal_counter++), {}};
        int remaining = n;
        for (int i = 0; i < arity && remaining > 0; ++i) {
            int take = remaining;
            if (i != arity - 1) {
                const int max_take = remaining - (arity - 1 - i);
                take = std::min(1 + static_cast<int>(s.next_open_unit() * max_take), max_take);
            }
            spec.children.push_back(self(self, take));
            remaining -= take;
        }
        return spec;
    };
    if (k == 1) {
        hcp::NodeSpec root{"n0", {}};
        root.children.push_back({"c0", {}});
        return hcp::build_hierarchy(root);
    }
    return hcp::build_hierarchy(build(build, k));
}

inline hcp::ProbabilityView random_view(const hcp::Hierarchy& h, std::uint64_t key,
                                        double concentration = 1.0) {
    return hcp::ProbabilityView(
        h, hcp::rng::dirichlet_row(h.num_classes(), concentration, key));
}

// Test-side enumeration of every pairwise-disjoint node subset, independent
// of the library's cover and solver code paths. Calls visit(subset) for each
// subset (including the empty one).
template <typename Visit>
void enumerate_disjoint_node_sets(const hcp::Hierarchy& h, int max_size, Visit&& visit) {
    std::vector<int> chosen;
    auto disjoint = [&](int v) {
        for (int u : chosen) {
            const bool apart = h.class_end(u) <= h.class_begin(v) ||
                               h.class_end(v) <= h.class_begin(u);
            if (!apart) return false;
        }
        return true;
    };
    auto rec = [&](auto&& self, int next) -> void {
        visit(static_cast<const std::vector<int>&>(chosen));
        if (static_cast<int>(chosen.size()) == max_size) return;
        for (int v = next; v < h.num_nodes(); ++v) {
            if (!disjoint(v)) continue;
            chosen.push_back(v);
            self(self, v + 1);
            chosen.pop_back();
        }
    };
    rec(rec, 0);
}

inline std::vector<int> classes_of_node_set(const hcp::Hierarchy& h,
                                            const std::vector<int>& nodes) {
    std::vector<int> out;
    for (int v : nodes)
        for (int c = h.class_begin(v); c < h.class_end(v); ++c) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

// Per-method dispatch over the public single-instance APIs.
inline double score_for(const hcp::Hierarchy& h, const hcp::ProbabilityView& p,
                        hcp::Method method, int r, int y, double u) {
    switch (method) {
        case hcp::Method::kCrsvp: return hcp::crsvp_score(h, p, y, u);
        case hcp::Method::kCrsvpR: return hcp::crsvpr_score(h, p, y, r, u);
        case hcp::Method::kAps: return hcp::aps_score(p, y, u);
        case hcp::Method::kLac: return hcp::lac_score(p, y);
    }
    throw std::runtime_error("unknown method");
}

inline hcp::Prediction predict_for(const hcp::Hierarchy& h, const hcp::ProbabilityView& p,
                                   const hcp::CalibratedPredictor& predictor, double u) {
    switch (predictor.config.method) {
        case hcp::Method::kCrsvp: return hcp::crsvp_predict(h, p, predictor, u);
        case hcp::Method::kCrsvpR: return hcp::crsvpr_predict(h, p, predictor, u);
        case hcp::Method::kAps: return hcp::aps_predict(h, p, predictor, u);
        case hcp::Method::kLac: return hcp::lac_predict(h, p, predictor, u);
    }
    throw std::runtime_error("unknown method");
}

}  // namespace hcptest
