#pragma once

// Metrics (coverage, mean size, mean representation complexity), synthetic
// hierarchical data, and the resampled benchmark driver. Synthetic rows are
// themselves the true conditional distributions, so the "model" is perfectly
// calibrated by construction and the coverage guarantee can be tested without
// any trained network.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hcp/conformal.hpp"
#include "hcp/errors.hpp"
#include "hcp/hierarchy.hpp"
#include "hcp/parallel.hpp"
#include "hcp/probability.hpp"
#include "hcp/random.hpp"

namespace hcp {

// ---------------------------------------------------------------------------
// Metrics.

inline double coverage(std::span<const Prediction> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw data_error("coverage: predictions/labels length mismatch");
    if (predictions.empty()) throw data_error("coverage: empty batch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (std::binary_search(predictions[i].classes.begin(), predictions[i].classes.end(),
                               labels[i]))
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

inline double average_size(std::span<const Prediction> predictions) {
    if (predictions.empty()) throw data_error("average_size: empty batch");
    double total = 0.0;
    for (const Prediction& p : predictions) total += static_cast<double>(p.size);
    return total / static_cast<double>(predictions.size());
}

inline double average_complexity(const Hierarchy& h, std::span<const Prediction> predictions) {
    if (predictions.empty()) throw data_error("average_complexity: empty batch");
    double total = 0.0;
    for (const Prediction& p : predictions)
        total += static_cast<double>(representation_complexity(h, p.classes));
    return total / static_cast<double>(predictions.size());
}

// ---------------------------------------------------------------------------
// Synthetic data.

struct SyntheticDataset {
    Hierarchy hierarchy;
    std::vector<std::vector<double>> probs;  // N x K, each row a distribution
    std::vector<int> labels;                 // one draw per row from its own row
    std::uint64_t seed = 0;
    double concentration = 1.0;
};

// Balanced tree of the given arity over K leaves; subtree sizes differ by at
// most one. Leaf names are c0..c{K-1}, internal nodes n0, n1, ...
inline Hierarchy balanced_hierarchy(int k, int arity) {
    if (k < 1) throw usage_error("balanced_hierarchy: K must be >= 1");
    if (arity < 2) throw usage_error("balanced_hierarchy: arity must be >= 2");
    int internal_counter = 0;
    int leaf_counter = 0;
    auto build = [&](auto&& self, int n) -> NodeSpec {
        if (n == 1) return {"c" + std::to_string(leaf_counter++), {}};
        NodeSpec spec{"n" + std::to_string(internal_counter++), {}};
        const int parts = std::min(arity, n);
        int remaining = n;
        for (int i = 0; i < parts; ++i) {
            const int take = (remaining + (parts - 1 - i)) / (parts - i);
            spec.children.push_back(self(self, take));
            remaining -= take;
        }
        return spec;
    };
    if (k == 1) {
        NodeSpec root{"n0", {}};
        root.children.push_back({"c0", {}});
        return build_hierarchy(root);
    }
    return build_hierarchy(build(build, k));
}

// Rows are symmetric Dirichlet(concentration); each label is drawn from its
// own row, making the synthetic model perfectly calibrated.
inline SyntheticDataset generate_synthetic(int k, int arity, int n, double concentration,
                                           std::uint64_t seed) {
    if (n < 1) throw usage_error("generate_synthetic: N must be >= 1");
    SyntheticDataset ds;
    ds.hierarchy = balanced_hierarchy(k, arity);
    ds.seed = seed;
    ds.concentration = concentration;
    ds.probs.resize(static_cast<std::size_t>(n));
    ds.labels.resize(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        ds.probs[i] = rng::dirichlet_row(k, concentration, rng::mix(seed, rng::kRowStream, i));
        const double u = rng::to_open_unit(rng::mix(seed, rng::kLabelStream, i));
        double cum = 0.0;
        int label = k - 1;
        for (int c = 0; c < k; ++c) {
            cum += ds.probs[i][static_cast<std::size_t>(c)];
            if (u <= cum) {
                label = c;
                break;
            }
        }
        ds.labels[i] = label;
    });
    return ds;
}

// ---------------------------------------------------------------------------
// Benchmark driver.

struct MethodSpec {
    Method method = Method::kCrsvp;
    int r = 1;
    bool randomized = true;

    // Display names follow the usual convention: a leading "n" marks the
    // naive (u = 0) variant, "nps" is naive aps.
    std::string name() const {
        switch (method) {
            case Method::kLac: return "lac";
            case Method::kAps: return randomized ? "aps" : "nps";
            case Method::kCrsvp: return randomized ? "crsvp" : "ncrsvp";
            case Method::kCrsvpR:
                return (randomized ? "crsvp-" : "ncrsvp-") + std::to_string(r);
        }
        throw usage_error("unknown method");
    }

    static MethodSpec parse(std::string_view text) {
        std::string s(text);
        MethodSpec spec;
        if (s == "lac") return {Method::kLac, 1, true};
        if (s == "aps") return {Method::kAps, 1, true};
        if (s == "nps") return {Method::kAps, 1, false};
        spec.randomized = true;
        if (!s.empty() && s.front() == 'n' && s != "nps") {
            spec.randomized = false;
            s.erase(s.begin());
        }
        if (s == "crsvp") {
            spec.method = Method::kCrsvp;
            return spec;
        }
        if (s.rfind("crsvp-", 0) == 0) {
            spec.method = Method::kCrsvpR;
            try {
                spec.r = std::stoi(s.substr(6));
            } catch (...) {
                throw data_error("bad method spec '" + std::string(text) + "'");
            }
            if (spec.r < 1) throw data_error("bad method spec '" + std::string(text) + "'");
            return spec;
        }
        throw data_error("unknown method spec '" + std::string(text) + "'");
    }
};

struct MethodStats {
    std::string method;
    double coverage = 0.0, coverage_sd = 0.0;
    double size = 0.0, size_sd = 0.0;
    double repr_complexity = 0.0, repr_complexity_sd = 0.0;
    // Predictions violating the method's complexity contract (crsvp: must be
    // a single node or empty; crsvp-r: minimal cover size must be <= r).
    long bound_violations = 0;
};

struct MetricReport {
    int resamples = 0;
    double alpha = 0.0;
    std::vector<MethodStats> methods;

    const MethodStats& stats(std::string_view name) const {
        for (const MethodStats& m : methods)
            if (m.method == name) return m;
        throw usage_error("no stats for method '" + std::string(name) + "'");
    }
};

namespace detail {

// Results are written into per-(method, resample) slots so the resample loop
// can run in parallel with order-independent aggregation.
struct ResampleGrid {
    int resamples = 0;
    std::vector<double> cov, size, complexity;  // method-major, resamples each
    std::vector<long> violations;

    ResampleGrid(std::size_t methods, int n_resamples)
        : resamples(n_resamples),
          cov(methods * static_cast<std::size_t>(n_resamples), 0.0),
          size(methods * static_cast<std::size_t>(n_resamples), 0.0),
          complexity(methods * static_cast<std::size_t>(n_resamples), 0.0),
          violations(methods * static_cast<std::size_t>(n_resamples), 0) {}

    std::size_t slot(std::size_t method, int t) const {
        return method * static_cast<std::size_t>(resamples) + static_cast<std::size_t>(t);
    }
    std::span<const double> method_cov(std::size_t m) const {
        return std::span<const double>(cov).subspan(slot(m, 0),
                                                    static_cast<std::size_t>(resamples));
    }
    std::span<const double> method_size(std::size_t m) const {
        return std::span<const double>(size).subspan(slot(m, 0),
                                                     static_cast<std::size_t>(resamples));
    }
    std::span<const double> method_complexity(std::size_t m) const {
        return std::span<const double>(complexity)
            .subspan(slot(m, 0), static_cast<std::size_t>(resamples));
    }
};

inline void mean_sd(std::span<const double> xs, double& mean, double& sd) {
    const double n = static_cast<double>(xs.size());
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() < 2) {
        sd = 0.0;
        return;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / (n - 1.0));
}

inline long count_bound_violations(const Hierarchy& h, const MethodSpec& spec,
                                   std::span<const Prediction> predictions) {
    long violations = 0;
    for (const Prediction& p : predictions) {
        const int rc = representation_complexity(h, p.classes);
        if (spec.method == Method::kCrsvp && rc > 1) ++violations;
        if (spec.method == Method::kCrsvpR && rc > spec.r) ++violations;
    }
    return violations;
}

// Calibrate on `cal`, predict on `test`, score one resample for one method.
inline void run_one(const Hierarchy& h, std::span<const ProbabilityView> cal_views,
                    std::span<const int> cal_labels, std::span<const ProbabilityView> test_views,
                    std::span<const int> test_labels, const MethodSpec& spec, double alpha,
                    std::uint64_t seed, ResampleGrid& grid, std::size_t method_index, int t) {
    ConformalConfig config;
    config.method = spec.method;
    config.alpha = alpha;
    config.r = spec.r;
    config.randomized = spec.randomized;
    config.seed = seed;
    const CalibratedPredictor predictor = calibrate_views(h, cal_views, cal_labels, config);
    const std::vector<Prediction> predictions = predict_views(h, test_views, predictor);
    const std::size_t s = grid.slot(method_index, t);
    grid.cov[s] = coverage(predictions, test_labels);
    grid.size[s] = average_size(predictions);
    grid.complexity[s] = average_complexity(h, predictions);
    grid.violations[s] = count_bound_violations(h, spec, predictions);
}

inline MetricReport finalize(std::span<const MethodSpec> methods, double alpha,
                             const ResampleGrid& grid) {
    MetricReport report;
    report.resamples = grid.resamples;
    report.alpha = alpha;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        MethodStats stats;
        stats.method = methods[m].name();
        mean_sd(grid.method_cov(m), stats.coverage, stats.coverage_sd);
        mean_sd(grid.method_size(m), stats.size, stats.size_sd);
        mean_sd(grid.method_complexity(m), stats.repr_complexity, stats.repr_complexity_sd);
        stats.bound_violations = 0;
        for (int t = 0; t < grid.resamples; ++t)
            stats.bound_violations += grid.violations[grid.slot(m, t)];
        report.methods.push_back(std::move(stats));
    }
    return report;
}

}  // namespace detail

// Resampled benchmark on a fixed dataset: each resample shuffles the rows and
// splits them into disjoint calibration/test halves.
inline MetricReport run_benchmark(const SyntheticDataset& ds, std::span<const MethodSpec> methods,
                                  double alpha, int resamples, std::uint64_t seed) {
    const int n = static_cast<int>(ds.probs.size());
    if (n < 2) throw data_error("run_benchmark: too few instances to split");
    if (resamples < 1) throw usage_error("run_benchmark: resamples must be >= 1");
    const Hierarchy& h = ds.hierarchy;

    std::vector<ProbabilityView> views;
    views.reserve(ds.probs.size());
    for (const auto& row : ds.probs) views.emplace_back(h, row);

    detail::ResampleGrid grid(methods.size(), resamples);
    const int n_cal = n / 2;
    parallel_for(static_cast<std::size_t>(resamples), [&](std::size_t ti) {
        const int t = static_cast<int>(ti);
        const std::vector<int> perm = rng::shuffled_indices(
            n, rng::mix(seed, rng::kSplitStream, static_cast<std::uint64_t>(t)));
        std::vector<ProbabilityView> cal_views, test_views;
        std::vector<int> cal_labels, test_labels;
        for (int i = 0; i < n; ++i) {
            const int row = perm[static_cast<std::size_t>(i)];
            if (i < n_cal) {
                cal_views.push_back(views[static_cast<std::size_t>(row)]);
                cal_labels.push_back(ds.labels[static_cast<std::size_t>(row)]);
            } else {
                test_views.push_back(views[static_cast<std::size_t>(row)]);
                test_labels.push_back(ds.labels[static_cast<std::size_t>(row)]);
            }
        }
        const std::uint64_t resample_seed =
            rng::mix(seed, rng::kResampleStream, static_cast<std::uint64_t>(t));
        for (std::size_t m = 0; m < methods.size(); ++m)
            detail::run_one(h, cal_views, cal_labels, test_views, test_labels, methods[m], alpha,
                            resample_seed, grid, m, t);
    });
    return detail::finalize(methods, alpha, grid);
}

// Resampled benchmark with a fresh synthetic draw per resample, so the
// resamples are genuinely independent and the coverage guarantee applies to
// their mean unconditionally.
inline MetricReport run_synthetic_benchmark(int k, int arity, int n_cal, int n_test,
                                            double concentration,
                                            std::span<const MethodSpec> methods, double alpha,
                                            int resamples, std::uint64_t seed) {
    if (n_cal < 1 || n_test < 1)
        throw usage_error("run_synthetic_benchmark: need calibration and test instances");
    if (resamples < 1) throw usage_error("run_synthetic_benchmark: resamples must be >= 1");

    const Hierarchy h = balanced_hierarchy(k, arity);
    detail::ResampleGrid grid(methods.size(), resamples);
    parallel_for(static_cast<std::size_t>(resamples), [&](std::size_t ti) {
        const int t = static_cast<int>(ti);
        const std::uint64_t data_seed =
            rng::mix(seed, rng::kResampleStream, static_cast<std::uint64_t>(t));
        SyntheticDataset ds =
            generate_synthetic(k, arity, n_cal + n_test, concentration, data_seed);
        std::vector<ProbabilityView> views;
        views.reserve(ds.probs.size());
        for (const auto& row : ds.probs) views.emplace_back(h, row);
        const std::span<const ProbabilityView> all(views);
        const std::span<const int> labels(ds.labels);
        for (std::size_t m = 0; m < methods.size(); ++m)
            detail::run_one(h, all.subspan(0, static_cast<std::size_t>(n_cal)),
                            labels.subspan(0, static_cast<std::size_t>(n_cal)),
                            all.subspan(static_cast<std::size_t>(n_cal)),
                            labels.subspan(static_cast<std::size_t>(n_cal)), methods[m], alpha,
                            rng::splitmix64(data_seed), grid, m, t);
    });
    return detail::finalize(methods, alpha, grid);
}

}  // namespace hcp
