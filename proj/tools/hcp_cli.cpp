// hcp command-line tool: calibrate, predict, evaluate, benchmark, synth and
// oracle-check over the file formats documented in the README.
//
// Exit codes: 0 success, 1 internal error, 2 usage, 3 data, 4 numeric;
// failures print a single machine-parsable line "error[kind]: message".

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hcp/ancestors.hpp"
#include "hcp/conformal.hpp"
#include "hcp/eval.hpp"
#include "hcp/hierarchy.hpp"
#include "hcp/io.hpp"
#include "hcp/probability.hpp"
#include "hcp/random.hpp"

namespace {

struct CommonOptions {
    std::string hierarchy_path;
    std::string probs_path;
    std::string labels_path;
    std::string predictor_path;
    std::string predictions_path;
    std::string out_path;
    std::string method = "crsvp";
    double alpha = 0.1;
    int r = 1;
    bool naive = false;
    bool no_empty = false;
    std::uint64_t seed = 0;
    std::optional<double> fixed_u;
};

hcp::Hierarchy load_hierarchy(const std::string& path) {
    std::vector<std::string> warnings;
    hcp::Hierarchy h = hcp::io::read_hierarchy(path, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    return h;
}

hcp::ConformalConfig make_config(const CommonOptions& opt) {
    hcp::ConformalConfig config;
    config.method = hcp::method_from_name(opt.method);
    config.alpha = opt.alpha;
    config.r = opt.r;
    config.randomized = !opt.naive;
    config.allow_empty = !opt.no_empty;
    config.seed = opt.seed;
    config.validate();
    return config;
}

int cmd_calibrate(const CommonOptions& opt) {
    const hcp::Hierarchy h = load_hierarchy(opt.hierarchy_path);
    const auto rows = hcp::io::read_probability_csv(opt.probs_path, h);
    const auto labels = hcp::io::read_labels(opt.labels_path, h);
    const hcp::ConformalConfig config = make_config(opt);
    const hcp::CalibratedPredictor predictor =
        hcp::calibrate(h, rows, labels, config, opt.fixed_u);
    if (!opt.out_path.empty()) hcp::io::write_predictor(opt.out_path, predictor, h);
    std::cout << "N=" << predictor.n_cal
              << " m=" << hcp::calibration_rank(predictor.n_cal, config.alpha) << " tau_star=";
    if (std::isinf(predictor.tau_star))
        std::cout << "inf";
    else
        std::cout << predictor.tau_star;
    std::cout << "\n";
    return 0;
}

int cmd_predict(const CommonOptions& opt) {
    const hcp::Hierarchy h = load_hierarchy(opt.hierarchy_path);
    const hcp::CalibratedPredictor predictor = hcp::io::read_predictor(opt.predictor_path, h);
    const auto rows = hcp::io::read_probability_csv(opt.probs_path, h);
    const auto predictions = hcp::predict_batch(h, rows, predictor, opt.fixed_u);
    if (opt.out_path.empty()) {
        for (const hcp::Prediction& p : predictions)
            std::cout << hcp::io::prediction_to_json_line(h, p) << "\n";
    } else {
        hcp::io::write_predictions(opt.out_path, h, predictions);
    }
    return 0;
}

int cmd_evaluate(const CommonOptions& opt) {
    const hcp::Hierarchy h = load_hierarchy(opt.hierarchy_path);
    const auto predictions = hcp::io::read_predictions(opt.predictions_path, h);
    const auto labels = hcp::io::read_labels(opt.labels_path, h);
    hcp::MetricReport report;
    report.resamples = 1;
    hcp::MethodStats stats;
    stats.method = "predictions";
    stats.coverage = hcp::coverage(predictions, labels);
    stats.size = hcp::average_size(predictions);
    stats.repr_complexity = hcp::average_complexity(h, predictions);
    report.methods.push_back(stats);
    std::cout << hcp::io::report_to_csv(report);
    if (!opt.out_path.empty()) hcp::io::write_report(opt.out_path, report);
    return 0;
}

std::vector<hcp::MethodSpec> parse_methods(const std::string& csv) {
    std::vector<hcp::MethodSpec> methods;
    std::string item;
    std::istringstream ss(csv);
    while (std::getline(ss, item, ','))
        if (!item.empty()) methods.push_back(hcp::MethodSpec::parse(item));
    if (methods.empty()) throw hcp::usage_error("no methods given");
    return methods;
}

int cmd_benchmark(const CommonOptions& opt, const std::string& methods_csv, int resamples, int k,
                  int arity, int n, double concentration) {
    const std::vector<hcp::MethodSpec> methods = parse_methods(methods_csv);
    hcp::MetricReport report;
    if (!opt.hierarchy_path.empty()) {
        hcp::SyntheticDataset ds;
        ds.hierarchy = load_hierarchy(opt.hierarchy_path);
        ds.probs = hcp::io::read_probability_csv(opt.probs_path, ds.hierarchy);
        ds.labels = hcp::io::read_labels(opt.labels_path, ds.hierarchy);
        if (ds.probs.size() != ds.labels.size())
            throw hcp::data_error("label/probability row count mismatch");
        report = hcp::run_benchmark(ds, methods, opt.alpha, resamples, opt.seed);
    } else {
        report = hcp::run_synthetic_benchmark(k, arity, n / 2, n - n / 2, concentration, methods,
                                              opt.alpha, resamples, opt.seed);
    }
    std::cout << hcp::io::report_to_csv(report);
    if (!opt.out_path.empty()) hcp::io::write_report(opt.out_path, report);
    return 0;
}

int cmd_synth(const CommonOptions& opt, int k, int arity, int n, double concentration) {
    const hcp::SyntheticDataset ds = hcp::generate_synthetic(k, arity, n, concentration, opt.seed);
    const std::string dir = opt.out_path.empty() ? "." : opt.out_path;
    hcp::io::write_hierarchy(dir + "/hierarchy.json", ds.hierarchy);
    hcp::io::write_probability_csv(dir + "/probs.csv", ds.hierarchy, ds.probs);
    hcp::io::write_labels(dir + "/labels.txt", ds.hierarchy, ds.labels);
    std::cout << "wrote " << dir << "/hierarchy.json, probs.csv, labels.txt (K=" << k
              << ", N=" << n << ")\n";
    return 0;
}

// Random tree with mixed arity 2..4 over exactly k classes.
hcp::Hierarchy random_tree(int k, std::uint64_t key) {
    hcp::rng::Substream s(key);
    int internal_counter = 0;
    int leaf_counter = 0;
    auto build = [&](auto&& self, int n) -> hcp::NodeSpec {
        if (n == 1) return {"c" + std::to_string(leaf_counter++), {}};
        const int max_arity = std::min(n, 2 + static_cast<int>(s.next_open_unit() * 3.0));
        const int parts = std::max(2, max_arity);
        hcp::NodeSpec spec{"n" + std::to_string(internal_counter++), {}};
        int remaining = n;
        for (int i = 0; i < parts && remaining > 0; ++i) {
            int take;
            if (i == parts - 1) {
                take = remaining;
            } else {
                const int max_take = remaining - (parts - 1 - i);
                take = 1 + static_cast<int>(s.next_open_unit() * max_take);
                take = std::min(take, max_take);
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

int cmd_oracle_check(const CommonOptions& opt, int k, int trials, int r_max) {
    if (k < 1 || trials < 1 || r_max < 1) throw hcp::usage_error("bad oracle-check parameters");
    int passed = 0;
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t key = hcp::rng::mix(opt.seed, 0x4f5241ull /* "ORA" */,
                                                static_cast<std::uint64_t>(t));
        const hcp::Hierarchy h = random_tree(k, key);
        const hcp::ProbabilityView view(
            h, hcp::rng::dirichlet_row(h.num_classes(), 1.0, hcp::rng::splitmix64(key)));
        bool ok = true;
        for (int r = 1; r <= r_max && ok; ++r) {
            for (int rank = 0; rank < h.num_classes() && ok; ++rank) {
                const std::vector<int> omega = hcp::omega_set(view, view.class_at_rank(rank));
                const hcp::AncestorSolution dp = hcp::solve_ancestors(h, view, omega, r);
                const hcp::AncestorSolution oracle = hcp::bruteforce_ancestors(h, view, omega, r);
                if (dp.classes != oracle.classes || std::abs(dp.cost - oracle.cost) > 1e-9) {
                    ok = false;
                    std::cerr << "mismatch: trial " << t << " r=" << r << " omega={";
                    for (std::size_t i = 0; i < omega.size(); ++i)
                        std::cerr << (i ? "," : "") << omega[i];
                    std::cerr << "} dp={";
                    for (std::size_t i = 0; i < dp.classes.size(); ++i)
                        std::cerr << (i ? "," : "") << dp.classes[i];
                    std::cerr << "} cost=" << dp.cost << " oracle={";
                    for (std::size_t i = 0; i < oracle.classes.size(); ++i)
                        std::cerr << (i ? "," : "") << oracle.classes[i];
                    std::cerr << "} cost=" << oracle.cost << "\n";
                }
            }
        }
        if (ok) ++passed;
    }
    std::cout << passed << "/" << trials << " exact matches\n";
    return passed == trials ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"split conformal prediction over class hierarchies"};
    app.require_subcommand(1);

    CommonOptions opt;
    std::string methods_csv = "crsvp,aps,lac";
    int resamples = 20;
    int k = 8;
    int arity = 2;
    int n = 1000;
    double concentration = 1.0;
    int trials = 200;
    int r_max = 4;
    double fixed_u_value = 0.0;

    auto add_fixed_u = [&](CLI::App* cmd) {
        cmd->add_option("--fixed-u", fixed_u_value,
                        "override the per-instance uniform draw (for reproducing hand traces)")
            ->check(CLI::Range(0.0, 1.0));
    };

    CLI::App* cal = app.add_subcommand("calibrate", "calibrate a predictor on labelled data");
    cal->add_option("--hierarchy", opt.hierarchy_path)->required();
    cal->add_option("--probs", opt.probs_path)->required();
    cal->add_option("--labels", opt.labels_path)->required();
    cal->add_option("--method", opt.method)
        ->check(CLI::IsMember({"crsvp", "crsvp-r", "lac", "aps"}));
    cal->add_option("--alpha", opt.alpha);
    cal->add_option("--r", opt.r);
    cal->add_flag("--naive", opt.naive, "set u to 0 (naive variant)");
    cal->add_flag("--no-empty", opt.no_empty, "never predict the empty set");
    cal->add_option("--seed", opt.seed);
    add_fixed_u(cal);
    cal->add_option("--out", opt.out_path, "predictor JSON output path");

    CLI::App* pre = app.add_subcommand("predict", "predict with a calibrated predictor");
    pre->add_option("--hierarchy", opt.hierarchy_path)->required();
    pre->add_option("--probs", opt.probs_path)->required();
    pre->add_option("--predictor", opt.predictor_path)->required();
    add_fixed_u(pre);
    pre->add_option("--out", opt.out_path, "predictions JSONL output path (default stdout)");

    CLI::App* eva = app.add_subcommand("evaluate", "score a predictions/labels pair");
    eva->add_option("--hierarchy", opt.hierarchy_path)->required();
    eva->add_option("--predictions", opt.predictions_path)->required();
    eva->add_option("--labels", opt.labels_path)->required();
    eva->add_option("--out", opt.out_path, "report CSV output path (JSON mirror alongside)");

    CLI::App* ben = app.add_subcommand("benchmark", "resampled coverage/size benchmark");
    ben->add_option("--hierarchy", opt.hierarchy_path, "dataset files (else synthetic)");
    ben->add_option("--probs", opt.probs_path);
    ben->add_option("--labels", opt.labels_path);
    ben->add_option("--methods", methods_csv, "comma list, e.g. crsvp,ncrsvp,crsvp-3,aps,nps,lac");
    ben->add_option("--alpha", opt.alpha);
    ben->add_option("--resamples", resamples);
    ben->add_option("--seed", opt.seed);
    ben->add_option("--K", k, "synthetic: number of classes");
    ben->add_option("--arity", arity, "synthetic: tree arity");
    ben->add_option("--N", n, "synthetic: instances per resample (split in half)");
    ben->add_option("--concentration", concentration, "synthetic: Dirichlet concentration");
    ben->add_option("--out", opt.out_path, "report CSV output path (JSON mirror alongside)");

    CLI::App* syn = app.add_subcommand("synth", "generate a synthetic dataset");
    syn->add_option("--K", k)->required();
    syn->add_option("--arity", arity);
    syn->add_option("--N", n)->required();
    syn->add_option("--concentration", concentration);
    syn->add_option("--seed", opt.seed);
    syn->add_option("--out", opt.out_path, "output directory");

    CLI::App* ora = app.add_subcommand("oracle-check",
                                       "check the ancestor solver against brute force");
    ora->add_option("--K", k, "classes per random tree");
    ora->add_option("--trials", trials);
    ora->add_option("--r-max", r_max);
    ora->add_option("--seed", opt.seed);

    try {
        app.parse(argc, argv);
        for (CLI::App* cmd : {cal, pre})
            if (cmd->parsed() && cmd->count("--fixed-u") > 0) opt.fixed_u = fixed_u_value;
        if (cal->parsed()) return cmd_calibrate(opt);
        if (pre->parsed()) return cmd_predict(opt);
        if (eva->parsed()) return cmd_evaluate(opt);
        if (ben->parsed()) {
            if (!opt.hierarchy_path.empty() &&
                (opt.probs_path.empty() || opt.labels_path.empty()))
                throw hcp::usage_error("benchmark with --hierarchy needs --probs and --labels");
            if (opt.hierarchy_path.empty() &&
                (!opt.probs_path.empty() || !opt.labels_path.empty()))
                throw hcp::usage_error("benchmark with --probs/--labels needs --hierarchy");
            return cmd_benchmark(opt, methods_csv, resamples, k, arity, n, concentration);
        }
        if (syn->parsed()) return cmd_synth(opt, k, arity, n, concentration);
        if (ora->parsed()) return cmd_oracle_check(opt, k, trials, r_max);
        throw hcp::usage_error("no subcommand given");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 2;
    } catch (const hcp::usage_error& e) {
        std::cerr << "error[usage]: " << e.what() << "\n";
        return 2;
    } catch (const hcp::numeric_error& e) {
        std::cerr << "error[numeric]: " << e.what() << "\n";
        return 4;
    } catch (const hcp::data_error& e) {
        std::cerr << "error[data]: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}
