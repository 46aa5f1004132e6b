#pragma once

// Rooted class hierarchy over K classes. Nodes are dense 0-based ids assigned
// in depth-first preorder (root = 0), classes are dense 0-based ids assigned
// in depth-first leaf order. Every node therefore owns a contiguous class-id
// range, which keeps cover computations and disjointness tests cheap.
// A Hierarchy is immutable after construction and safe to share across threads.

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hcp/errors.hpp"

namespace hcp {

// Sorted node ids with pairwise-disjoint class sets.
using NodeSet = std::vector<int>;

// Recursive build description; a node without children is a leaf.
struct NodeSpec {
    std::string name;
    std::vector<NodeSpec> children;
};

struct HierarchyNode {
    int parent = -1;  // -1 for the root
    std::vector<int> children;
    int class_begin = 0;  // classes of this node are [class_begin, class_end)
    int class_end = 0;
    int depth = 0;
    std::string name;
};

class Hierarchy {
public:
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_classes() const { return num_classes_; }
    static constexpr int root() { return 0; }

    const HierarchyNode& node(int v) const {
        check_node(v);
        return nodes_[v];
    }
    bool is_leaf(int v) const { return node(v).children.empty(); }
    int parent(int v) const { return node(v).parent; }
    int class_begin(int v) const { return node(v).class_begin; }
    int class_end(int v) const { return node(v).class_end; }
    int class_count(int v) const {
        const HierarchyNode& n = node(v);
        return n.class_end - n.class_begin;
    }
    bool node_contains_class(int v, int c) const {
        const HierarchyNode& n = node(v);
        return c >= n.class_begin && c < n.class_end;
    }

    int leaf_of_class(int c) const {
        if (c < 0 || c >= num_classes_)
            throw usage_error("invalid class id " + std::to_string(c));
        return leaf_of_class_[c];
    }
    const std::string& class_name(int c) const {
        leaf_of_class(c);  // bounds check
        return nodes_[leaf_of_class_[c]].name;
    }
    const std::string& node_name(int v) const { return node(v).name; }

    // Class id for a leaf name; throws data_error for unknown names.
    int class_id(std::string_view name) const {
        auto it = class_by_name_.find(std::string(name));
        if (it == class_by_name_.end())
            throw data_error("unknown class name '" + std::string(name) + "'");
        return it->second;
    }
    bool has_class_name(std::string_view name) const {
        return class_by_name_.count(std::string(name)) > 0;
    }

    int max_depth() const { return max_depth_; }

    friend Hierarchy build_hierarchy(const NodeSpec& root_spec,
                                     std::vector<std::string>* warnings);

private:
    void check_node(int v) const {
        if (v < 0 || v >= static_cast<int>(nodes_.size()))
            throw usage_error("invalid node id " + std::to_string(v));
    }

    std::vector<HierarchyNode> nodes_;
    std::vector<int> leaf_of_class_;
    std::unordered_map<std::string, int> class_by_name_;
    int num_classes_ = 0;
    int max_depth_ = 0;
};

// Builds a validated hierarchy from a nested description. Class ids follow
// depth-first leaf order. Single-child internal nodes are legal but reported
// through `warnings` since they duplicate class sets along a path.
inline Hierarchy build_hierarchy(const NodeSpec& root_spec,
                                 std::vector<std::string>* warnings = nullptr) {
    Hierarchy h;
    std::vector<std::string> path;

    auto path_str = [&path]() {
        std::string s;
        for (const std::string& part : path) {
            s += '/';
            s += part;
        }
        return s.empty() ? std::string("/") : s;
    };

    // Recursive preorder construction; returns the node id.
    auto build = [&](auto&& self, const NodeSpec& spec, int parent, int depth) -> int {
        path.push_back(spec.name);
        const int v = h.num_nodes();
        h.nodes_.push_back({});
        h.nodes_[v].parent = parent;
        h.nodes_[v].depth = depth;
        h.nodes_[v].name = spec.name;
        h.max_depth_ = std::max(h.max_depth_, depth);
        if (spec.children.empty()) {
            const int c = h.num_classes_++;
            if (!h.class_by_name_.emplace(spec.name, c).second)
                throw data_error("duplicate leaf name '" + spec.name + "' at " + path_str());
            h.leaf_of_class_.push_back(v);
            h.nodes_[v].class_begin = c;
            h.nodes_[v].class_end = c + 1;
        } else {
            if (spec.children.size() == 1 && warnings)
                warnings->push_back("single-child internal node at " + path_str());
            h.nodes_[v].class_begin = h.num_classes_;
            for (const NodeSpec& child : spec.children) {
                const int cv = self(self, child, v, depth + 1);
                h.nodes_[v].children.push_back(cv);
            }
            h.nodes_[v].class_end = h.num_classes_;
        }
        path.pop_back();
        return v;
    };
    build(build, root_spec, -1, 0);
    return h;
}

// Parses the hierarchy file format: recursive JSON objects
// {"name": str, "children": [...]}; a node without "children" is a leaf.
inline Hierarchy parse_hierarchy(std::string_view json_text,
                                 std::vector<std::string>* warnings = nullptr) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error(std::string("hierarchy JSON: ") + e.what());
    }

    std::vector<std::string> path;
    auto path_str = [&path]() {
        std::string s;
        for (const std::string& part : path) {
            s += '/';
            s += part;
        }
        return s.empty() ? std::string("/") : s;
    };

    auto to_spec = [&](auto&& self, const nlohmann::json& j) -> NodeSpec {
        if (!j.is_object())
            throw data_error("hierarchy JSON: expected object at " + path_str());
        if (!j.contains("name") || !j["name"].is_string())
            throw data_error("hierarchy JSON: missing \"name\" at " + path_str());
        NodeSpec spec;
        spec.name = j["name"].get<std::string>();
        path.push_back(spec.name);
        if (j.contains("children")) {
            if (!j["children"].is_array())
                throw data_error("hierarchy JSON: \"children\" is not an array at " + path_str());
            if (j["children"].empty())
                throw data_error("hierarchy JSON: empty internal node at " + path_str());
            for (const nlohmann::json& child : j["children"])
                spec.children.push_back(self(self, child));
        }
        path.pop_back();
        return spec;
    };
    return build_hierarchy(to_spec(to_spec, doc), warnings);
}

// Path from v to the root, starting at v, consecutive entries child -> parent.
inline std::vector<int> path_to_root(const Hierarchy& h, int v) {
    h.node(v);  // validate id
    std::vector<int> path;
    for (int cur = v; cur != -1; cur = h.parent(cur)) path.push_back(cur);
    return path;
}

// Unique minimum-cardinality set of disjoint nodes whose class sets union to
// exactly `classes`: a node belongs to the cover iff its class set is
// contained in `classes` and its parent's is not. Empty input -> empty cover.
inline NodeSet minimal_cover(const Hierarchy& h, std::span<const int> classes) {
    if (classes.empty()) return {};
    std::vector<int> sorted(classes.begin(), classes.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.front() < 0 || sorted.back() >= h.num_classes())
        throw usage_error("minimal_cover: class id out of range");

    NodeSet cover;
    // Preorder scan; skipping subtrees of covered nodes keeps members maximal.
    std::vector<int> stack{Hierarchy::root()};
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        auto lo = std::lower_bound(sorted.begin(), sorted.end(), h.class_begin(v));
        auto hi = std::lower_bound(sorted.begin(), sorted.end(), h.class_end(v));
        if (lo == hi) continue;  // no requested class below v
        if (static_cast<int>(hi - lo) == h.class_count(v)) {
            // every class of v's contiguous range is requested
            cover.push_back(v);
            continue;
        }
        const auto& children = h.node(v).children;
        for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(*it);
    }
    std::sort(cover.begin(), cover.end());
    return cover;
}

// R_T of a class set: size of the minimal cover, 0 for the empty set.
inline int representation_complexity(const Hierarchy& h, std::span<const int> classes) {
    return static_cast<int>(minimal_cover(h, classes).size());
}

inline bool is_disjoint_node_set(const Hierarchy& h, std::span<const int> nodes) {
    std::vector<std::pair<int, int>> ranges;
    ranges.reserve(nodes.size());
    for (int v : nodes) ranges.emplace_back(h.class_begin(v), h.class_end(v));
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i)
        if (ranges[i].first < ranges[i - 1].second) return false;
    return true;
}

}  // namespace hcp
