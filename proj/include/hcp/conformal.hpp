#pragma once

// Split conformal calibration and nested set-valued inference.
//
// All methods share one score convention: walking a nested family
// S_0 ⊂ S_1 ⊂ ..., the score of the step into S_k is
//     mass(S_{k-1}) + u * (mass(S_k) - mass(S_{k-1})),
// with u ~ U(0,1); naive variants pin u instead of drawing it (see naive_u).
// The same convention is used in calibration and inference, so membership in
// the predicted set is exactly equivalent to the score being below the
// threshold, which is what makes the calibrated quantile valid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcp/ancestors.hpp"
#include "hcp/errors.hpp"
#include "hcp/hierarchy.hpp"
#include "hcp/parallel.hpp"
#include "hcp/probability.hpp"
#include "hcp/random.hpp"

namespace hcp {

enum class Method { kCrsvp, kCrsvpR, kLac, kAps };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::kCrsvp: return "crsvp";
        case Method::kCrsvpR: return "crsvp-r";
        case Method::kLac: return "lac";
        case Method::kAps: return "aps";
    }
    throw usage_error("unknown method");
}

inline Method method_from_name(std::string_view name) {
    if (name == "crsvp") return Method::kCrsvp;
    if (name == "crsvp-r") return Method::kCrsvpR;
    if (name == "lac") return Method::kLac;
    if (name == "aps") return Method::kAps;
    throw data_error("unknown method '" + std::string(name) + "'");
}

struct ConformalConfig {
    Method method = Method::kCrsvp;
    double alpha = 0.1;       // miscoverage level in (0, 1)
    int r = 1;                // representation-complexity budget (crsvp-r)
    bool randomized = true;   // false = naive variant, u pinned (see naive_u)
    bool allow_empty = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw usage_error("alpha must be in (0, 1)");
        if (method == Method::kCrsvpR && r < 1)
            throw usage_error("r must be >= 1 for crsvp-r");
    }
};

struct CalibratedPredictor {
    ConformalConfig config;
    double tau_star = 0.0;  // +inf sentinel when ceil((1-alpha)(N+1)) > N
    int n_cal = 0;
};

struct Prediction {
    std::vector<int> classes;  // sorted class ids
    NodeSet cover;             // minimal disjoint node cover
    int size = 0;
    int repr_complexity = 0;
    double u = 0.0;  // the uniform draw used
};

// Rank m = ceil((1-alpha)(N+1)) computed robustly against floating rounding.
inline int calibration_rank(int n, double alpha) {
    const long double target = (1.0L - static_cast<long double>(alpha)) *
                               static_cast<long double>(n + 1);
    return static_cast<int>(std::ceil(static_cast<double>(target) - 1e-12));
}

inline constexpr double kTauSentinel = std::numeric_limits<double>::infinity();

// Smallest threshold covering at least ceil((1-alpha)(N+1)) calibration
// scores: the m-th smallest score, or the +inf sentinel when m exceeds N
// (prediction is then the full class set).
inline double conformal_quantile(std::vector<double> scores, double alpha) {
    if (scores.empty()) throw usage_error("conformal_quantile: empty score list");
    const int n = static_cast<int>(scores.size());
    const int m = calibration_rank(n, alpha);
    if (m > n) return kTauSentinel;
    std::sort(scores.begin(), scores.end());
    return scores[static_cast<std::size_t>(m - 1)];
}

// ---------------------------------------------------------------------------
// CRSVP: sets restricted to the path from the mode's leaf to the root.

inline double crsvp_score(const Hierarchy& h, const ProbabilityView& p, int y, double u) {
    p.leaf_mass(y);  // bounds check
    int v = h.leaf_of_class(mode(p));
    double prev_mass = 0.0;
    while (!h.node_contains_class(v, y)) {
        prev_mass = p.node_mass(v);
        v = h.parent(v);
    }
    return prev_mass + u * (p.node_mass(v) - prev_mass);
}

inline Prediction crsvp_predict(const Hierarchy& h, const ProbabilityView& p,
                                const CalibratedPredictor& predictor, double u) {
    Prediction out;
    out.u = u;
    const int leaf = h.leaf_of_class(mode(p));
    int best = -1;
    double prev_mass = 0.0;
    for (int v = leaf; v != -1; v = h.parent(v)) {
        const double mass = p.node_mass(v);
        const double score = prev_mass + u * (mass - prev_mass);
        if (score > predictor.tau_star) break;  // scores grow towards the root
        best = v;
        prev_mass = mass;
    }
    if (best == -1 && !predictor.config.allow_empty) best = leaf;
    if (best != -1) {
        for (int c = h.class_begin(best); c < h.class_end(best); ++c) out.classes.push_back(c);
        out.cover = {best};
        out.size = static_cast<int>(out.classes.size());
        out.repr_complexity = 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CRSVP-r: sets taken from the ordered sequence of unique bounded ancestors.

inline double crsvpr_walker_score(SequenceWalker& walker, const ProbabilityView& p, int y,
                                  double u) {
    walker.reset(p);
    while (walker.advance()) {
        if (walker.contains(y))
            return walker.prev_mass() + u * (walker.mass() - walker.prev_mass());
    }
    throw usage_error("crsvpr score: sequence ended before covering the label");
}

inline double crsvpr_score(const Hierarchy& h, const ProbabilityView& p, int y, int r, double u) {
    p.leaf_mass(y);
    SequenceWalker walker(h, r);
    return crsvpr_walker_score(walker, p, y, u);
}

inline Prediction crsvpr_walker_predict(SequenceWalker& walker, const Hierarchy& h,
                                        const ProbabilityView& p,
                                        const CalibratedPredictor& predictor, double u) {
    Prediction out;
    out.u = u;
    walker.reset(p);
    bool any = false;
    while (walker.advance()) {
        const double score = walker.prev_mass() + u * (walker.mass() - walker.prev_mass());
        if (score <= predictor.tau_star) {
            any = true;
            out.classes = walker.classes();
        } else {
            // Entry scores are non-decreasing along the sequence, so the
            // first failure ends the scan; when nothing qualified the first
            // entry stands in if empty predictions are disallowed.
            if (!any && !predictor.config.allow_empty) out.classes = walker.classes();
            break;
        }
    }
    if (!out.classes.empty()) {
        out.cover = minimal_cover(h, out.classes);
        out.size = static_cast<int>(out.classes.size());
        out.repr_complexity = static_cast<int>(out.cover.size());
    }
    return out;
}

inline Prediction crsvpr_predict(const Hierarchy& h, const ProbabilityView& p,
                                 const CalibratedPredictor& predictor, double u) {
    SequenceWalker walker(h, predictor.config.r);
    return crsvpr_walker_predict(walker, h, p, predictor, u);
}

// ---------------------------------------------------------------------------
// Flat baselines: APS (NPS when u = 0) and LAC.

// rho(y) + u * P(y): cumulative mass of classes ranked strictly before y.
inline double aps_score(const ProbabilityView& p, int y, double u) {
    const int rank = p.rank_of(y);
    double rho = 0.0;
    for (int i = 0; i < rank; ++i) rho += p.leaf_mass(p.class_at_rank(i));
    return rho + u * p.leaf_mass(y);
}

inline Prediction aps_predict(const Hierarchy& h, const ProbabilityView& p,
                              const CalibratedPredictor& predictor, double u) {
    Prediction out;
    out.u = u;
    double rho = 0.0;
    for (int i = 0; i < p.num_classes(); ++i) {
        const int y = p.class_at_rank(i);
        const double m = p.leaf_mass(y);
        if (rho + u * m <= predictor.tau_star) out.classes.push_back(y);
        rho += m;
    }
    if (out.classes.empty() && !predictor.config.allow_empty)
        out.classes.push_back(mode(p));
    std::sort(out.classes.begin(), out.classes.end());
    out.cover = minimal_cover(h, out.classes);
    out.size = static_cast<int>(out.classes.size());
    out.repr_complexity = static_cast<int>(out.cover.size());
    return out;
}

inline double lac_score(const ProbabilityView& p, int y) { return 1.0 - p.leaf_mass(y); }

inline Prediction lac_predict(const Hierarchy& h, const ProbabilityView& p,
                              const CalibratedPredictor& predictor, double u) {
    Prediction out;
    out.u = u;
    for (int c = 0; c < p.num_classes(); ++c)
        if (1.0 - p.leaf_mass(c) <= predictor.tau_star) out.classes.push_back(c);
    if (out.classes.empty() && !predictor.config.allow_empty)
        out.classes.push_back(mode(p));
    out.cover = minimal_cover(h, out.classes);
    out.size = static_cast<int>(out.classes.size());
    out.repr_complexity = static_cast<int>(out.cover.size());
    return out;
}

// ---------------------------------------------------------------------------
// Batch calibration and prediction.

namespace detail {

// Per-worker scratch; the walker is only built for crsvp-r.
struct MethodState {
    std::optional<SequenceWalker> walker;
};

inline MethodState make_state(const Hierarchy& h, const ConformalConfig& config) {
    MethodState s;
    if (config.method == Method::kCrsvpR) s.walker.emplace(h, config.r);
    return s;
}

inline double score_one(MethodState& state, const Hierarchy& h, const ProbabilityView& view,
                        int label, const ConformalConfig& config, double u) {
    switch (config.method) {
        case Method::kCrsvp: return crsvp_score(h, view, label, u);
        case Method::kCrsvpR: return crsvpr_walker_score(*state.walker, view, label, u);
        case Method::kLac: return lac_score(view, label);
        case Method::kAps: return aps_score(view, label, u);
    }
    throw usage_error("unknown method");
}

inline Prediction predict_one(MethodState& state, const Hierarchy& h,
                              const ProbabilityView& view, const CalibratedPredictor& predictor,
                              double u) {
    switch (predictor.config.method) {
        case Method::kCrsvp: return crsvp_predict(h, view, predictor, u);
        case Method::kCrsvpR:
            return crsvpr_walker_predict(*state.walker, h, view, predictor, u);
        case Method::kLac: return lac_predict(h, view, predictor, u);
        case Method::kAps: return aps_predict(h, view, predictor, u);
    }
    throw usage_error("unknown method");
}

// The naive variants pin the randomizer instead of drawing it. In the
// mass(prev) + u * delta convention used throughout, the hierarchical
// methods' non-randomized score is the covering node/entry mass itself
// (u = 1: the conservative end of the bracket), while naive aps drops the
// randomization term from its score (u = 0), leaving the plain cumulative
// mass rho.
inline double naive_u(Method method) { return method == Method::kAps ? 0.0 : 1.0; }

inline double draw_u(const ConformalConfig& config, std::uint64_t stream, std::size_t index,
                     const std::optional<double>& fixed_u) {
    if (fixed_u) return *fixed_u;
    if (!config.randomized) return naive_u(config.method);
    return rng::uniform(config.seed, stream, index);
}

}  // namespace detail

// Calibrates on prebuilt views; scores are aggregated deterministically
// (sorted before the quantile), so any parallel schedule gives the same
// threshold.
inline CalibratedPredictor calibrate_views(const Hierarchy& h,
                                           std::span<const ProbabilityView> views,
                                           std::span<const int> labels,
                                           const ConformalConfig& config,
                                           std::optional<double> fixed_u = std::nullopt) {
    config.validate();
    if (views.size() != labels.size())
        throw data_error("label/probability row count mismatch: " +
                         std::to_string(labels.size()) + " labels, " +
                         std::to_string(views.size()) + " rows");
    if (views.empty()) throw data_error("calibration set is empty");
    for (int y : labels)
        if (y < 0 || y >= h.num_classes()) throw data_error("label out of range");

    std::vector<double> scores(views.size());
    parallel_for_with(
        views.size(), [&] { return detail::make_state(h, config); },
        [&](detail::MethodState& state, std::size_t i) {
            const double u = detail::draw_u(config, rng::kCalibrationStream, i, fixed_u);
            scores[i] = detail::score_one(state, h, views[i], labels[i], config, u);
        });

    CalibratedPredictor predictor;
    predictor.config = config;
    predictor.n_cal = static_cast<int>(views.size());
    predictor.tau_star = conformal_quantile(std::move(scores), config.alpha);
    return predictor;
}

inline CalibratedPredictor calibrate(const Hierarchy& h,
                                     const std::vector<std::vector<double>>& rows,
                                     std::span<const int> labels, const ConformalConfig& config,
                                     std::optional<double> fixed_u = std::nullopt) {
    std::vector<ProbabilityView> views;
    views.reserve(rows.size());
    for (const auto& row : rows) views.emplace_back(h, row);
    return calibrate_views(h, views, labels, config, fixed_u);
}

inline std::vector<Prediction> predict_views(const Hierarchy& h,
                                             std::span<const ProbabilityView> views,
                                             const CalibratedPredictor& predictor,
                                             std::optional<double> fixed_u = std::nullopt) {
    predictor.config.validate();
    std::vector<Prediction> out(views.size());
    parallel_for_with(
        views.size(), [&] { return detail::make_state(h, predictor.config); },
        [&](detail::MethodState& state, std::size_t i) {
            const double u =
                detail::draw_u(predictor.config, rng::kTestStream, i, fixed_u);
            out[i] = detail::predict_one(state, h, views[i], predictor, u);
        });
    return out;
}

inline std::vector<Prediction> predict_batch(const Hierarchy& h,
                                             const std::vector<std::vector<double>>& rows,
                                             const CalibratedPredictor& predictor,
                                             std::optional<double> fixed_u = std::nullopt) {
    std::vector<ProbabilityView> views;
    views.reserve(rows.size());
    for (const auto& row : rows) views.emplace_back(h, row);
    return predict_views(h, views, predictor, fixed_u);
}

// ---------------------------------------------------------------------------
// Predictor serialization: JSON object {method, alpha, r, randomized,
// allow_empty, seed, tau_star (number or "inf"), n_cal}. The class count is
// stored as "k" so a predictor cannot silently be applied to the wrong
// hierarchy.

inline nlohmann::json predictor_to_json(const CalibratedPredictor& predictor, int num_classes) {
    nlohmann::json j;
    j["method"] = method_name(predictor.config.method);
    j["alpha"] = predictor.config.alpha;
    j["r"] = predictor.config.r;
    j["randomized"] = predictor.config.randomized;
    j["allow_empty"] = predictor.config.allow_empty;
    j["seed"] = predictor.config.seed;
    if (std::isinf(predictor.tau_star))
        j["tau_star"] = "inf";
    else
        j["tau_star"] = predictor.tau_star;
    j["n_cal"] = predictor.n_cal;
    j["k"] = num_classes;
    return j;
}

inline CalibratedPredictor predictor_from_json(const nlohmann::json& j,
                                               const Hierarchy* h = nullptr) {
    try {
        CalibratedPredictor predictor;
        predictor.config.method = method_from_name(j.at("method").get<std::string>());
        predictor.config.alpha = j.at("alpha").get<double>();
        predictor.config.r = j.at("r").get<int>();
        predictor.config.randomized = j.at("randomized").get<bool>();
        predictor.config.allow_empty = j.at("allow_empty").get<bool>();
        predictor.config.seed = j.at("seed").get<std::uint64_t>();
        if (j.at("tau_star").is_string()) {
            if (j.at("tau_star").get<std::string>() != "inf")
                throw data_error("predictor tau_star must be a number or \"inf\"");
            predictor.tau_star = kTauSentinel;
        } else {
            predictor.tau_star = j.at("tau_star").get<double>();
        }
        predictor.n_cal = j.at("n_cal").get<int>();
        if (h != nullptr && j.contains("k") && j.at("k").get<int>() != h->num_classes())
            throw data_error("hierarchy/predictor mismatch: predictor built for " +
                             std::to_string(j.at("k").get<int>()) + " classes, hierarchy has " +
                             std::to_string(h->num_classes()));
        predictor.config.validate();
        return predictor;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("predictor JSON: ") + e.what());
    }
}

}  // namespace hcp
