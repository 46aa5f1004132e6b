#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "hcp/conformal.hpp"
#include "support.hpp"

using namespace hcp;
using namespace hcptest;
using Catch::Matchers::WithinAbs;

namespace {

CalibratedPredictor predictor_with_tau(Method m, double tau, int r = 1,
                                       bool allow_empty = true) {
    CalibratedPredictor p;
    p.config.method = m;
    p.config.alpha = 0.1;
    p.config.r = r;
    p.config.allow_empty = allow_empty;
    p.tau_star = tau;
    p.n_cal = 1;
    return p;
}

// All score breakpoints of a method on one instance, padded with extremes.
std::vector<double> breakpoints(const Hierarchy& h, const ProbabilityView& p, Method m, int r,
                                double u) {
    std::vector<double> taus{-0.5, 0.0, 2.0};
    for (int y = 0; y < h.num_classes(); ++y) taus.push_back(score_for(h, p, m, r, y, u));
    std::sort(taus.begin(), taus.end());
    return taus;
}

}  // namespace

TEST_CASE("conformal_quantile") {
    const std::vector<double> scores{0.2, 0.4, 0.6, 0.8};
    CHECK(conformal_quantile(scores, 0.5) == 0.6);           // m = ceil(0.5*5) = 3
    CHECK(std::isinf(conformal_quantile(scores, 0.1)));      // m = 5 > 4
    CHECK(conformal_quantile(scores, 0.9) == 0.2);           // m = 1
    CHECK_THROWS_AS(conformal_quantile({}, 0.5), usage_error);

    SECTION("rank computation survives floating rounding") {
        CHECK(calibration_rank(9, 0.1) == 9);    // 0.9 * 10
        CHECK(calibration_rank(3, 1.0 / 3.0) == 3);
        CHECK(calibration_rank(4, 0.5) == 3);
        CHECK(calibration_rank(999, 0.1) == 900);
        CHECK(calibration_rank(1000, 0.1) == 901);
    }
}

TEST_CASE("crsvp score hand traces") {
    const Hierarchy h = demo_hierarchy();
    const ProbabilityView p = demo_view(h);

    // label "3": path v8 -> v4 -> v2 covers it at v2, predecessor v4
    CHECK_THAT(crsvp_score(h, p, h.class_id("3"), 0.5), WithinAbs(0.3825, 1e-12));
    CHECK(crsvp_score(h, p, mode(p), 0.0) == 0.0);
    CHECK_THAT(crsvp_score(h, p, mode(p), 1.0), WithinAbs(0.15, 1e-12));
    // label "5": covered first at the root, predecessor v2
    CHECK_THAT(crsvp_score(h, p, h.class_id("5"), 0.5), WithinAbs(0.7425, 1e-12));
}

TEST_CASE("crsvp predict hand traces") {
    const Hierarchy h = demo_hierarchy();
    const ProbabilityView p = demo_view(h);

    SECTION("tau 0.3 with u 0.5 stops at v4") {
        const Prediction pred =
            crsvp_predict(h, p, predictor_with_tau(Method::kCrsvp, 0.3), 0.5);
        CHECK(pred.classes == classes_named(h, {"1", "2"}));
        CHECK(pred.cover == NodeSet{node_by_name(h, "v4")});
        CHECK(pred.repr_complexity == 1);
        CHECK(pred.size == 2);
    }
    SECTION("sentinel returns the full set") {
        const Prediction pred =
            crsvp_predict(h, p, predictor_with_tau(Method::kCrsvp, kTauSentinel), 0.5);
        CHECK(pred.classes.size() == 8);
        CHECK(pred.cover == NodeSet{Hierarchy::root()});
    }
    SECTION("below the mode's score the set is empty, or the leaf if required") {
        const Prediction empty =
            crsvp_predict(h, p, predictor_with_tau(Method::kCrsvp, 0.05), 0.5);
        CHECK(empty.classes.empty());
        CHECK(empty.repr_complexity == 0);
        const Prediction forced = crsvp_predict(
            h, p, predictor_with_tau(Method::kCrsvp, 0.05, 1, /*allow_empty=*/false), 0.5);
        CHECK(forced.classes == std::vector<int>{mode(p)});
    }
}

TEST_CASE("crsvp calibration") {
    const Hierarchy h = demo_hierarchy();
    const std::vector<std::vector<double>> rows{demo_masses(), demo_masses(), demo_masses()};

    SECTION("three demo instances, labels 1/3/5, fixed u") {
        ConformalConfig config;
        config.method = Method::kCrsvp;
        config.alpha = 1.0 / 3.0;
        const std::vector<int> labels =
            classes_named(h, {"1", "3", "5"});
        const CalibratedPredictor pred = calibrate(h, rows, labels, config, 0.5);
        CHECK(pred.n_cal == 3);
        CHECK_THAT(pred.tau_star, WithinAbs(0.7425, 1e-12));  // 3rd smallest of the traces
    }
    SECTION("single instance at alpha 0.5 returns its own score") {
        ConformalConfig config;
        config.method = Method::kCrsvp;
        config.alpha = 0.5;
        const CalibratedPredictor pred = calibrate(
            h, {demo_masses()}, std::vector<int>{h.class_id("3")}, config, 0.5);
        CHECK_THAT(pred.tau_star, WithinAbs(0.3825, 1e-12));
    }
    SECTION("all labels at the mode with u=0 give tau 0") {
        ConformalConfig config;
        config.method = Method::kCrsvp;
        config.alpha = 0.25;
        const std::vector<int> labels(3, mode(ProbabilityView(h, demo_masses())));
        const CalibratedPredictor pred = calibrate(h, rows, labels, config, 0.0);
        CHECK(pred.tau_star == 0.0);
    }
    SECTION("naive calibration scores the covering node itself") {
        ConformalConfig config;
        config.method = Method::kCrsvp;
        config.alpha = 0.5;
        config.randomized = false;
        // label "3" is covered first at v2
        const CalibratedPredictor pred =
            calibrate(h, {demo_masses()}, std::vector<int>{h.class_id("3")}, config);
        CHECK_THAT(pred.tau_star, WithinAbs(0.485, 1e-12));
    }
    SECTION("too few calibration points yield the sentinel") {
        ConformalConfig config;
        config.method = Method::kCrsvp;
        config.alpha = 0.1;
        const CalibratedPredictor pred =
            calibrate(h, rows, classes_named(h, {"1", "3", "5"}), config, 0.5);
        CHECK(std::isinf(pred.tau_star));
    }
    SECTION("label/row mismatch is a data error") {
        ConformalConfig config;
        CHECK_THROWS_AS(calibrate(h, rows, std::vector<int>{0}, config), data_error);
    }
}

TEST_CASE("crsvp-r score hand traces") {
    const Hierarchy h = demo_hierarchy();
    const ProbabilityView p = demo_view(h);

    // sequence at r=2: {1}, {1,5}, {1,2,5}, {1..5}, {1..6}, Y
    CHECK_THAT(crsvpr_score(h, p, h.class_id("2"), 2, 0.5), WithinAbs(0.355, 1e-12));
    CHECK(crsvpr_score(h, p, mode(p), 2, 0.0) == 0.0);
    CHECK_THAT(crsvpr_score(h, p, h.class_id("3"), 2, 1.0), WithinAbs(0.625, 1e-12));
}

TEST_CASE("crsvp-r predict hand traces") {
    const Hierarchy h = demo_hierarchy();
    const ProbabilityView p = demo_view(h);

    SECTION("tau 0.5 with u 0.5 stops at {1,2,5}") {
        const Prediction pred =
            crsvpr_predict(h, p, predictor_with_tau(Method::kCrsvpR, 0.5, 2), 0.5);
        CHECK(pred.classes == classes_named(h, {"1", "2", "5"}));
        CHECK(pred.repr_complexity == 2);
    }
    SECTION("sentinel returns the full set at complexity 1") {
        const Prediction pred =
            crsvpr_predict(h, p, predictor_with_tau(Method::kCrsvpR, kTauSentinel, 2), 0.5);
        CHECK(pred.classes.size() == 8);
        CHECK(pred.repr_complexity == 1);
    }
    SECTION("r=1 predictions are single nodes or empty") {
        for (double tau : {0.05, 0.2, 0.5, 0.9}) {
            const Prediction pred =
                crsvpr_predict(h, p, predictor_with_tau(Method::kCrsvpR, tau, 1), 0.5);
            CHECK(pred.repr_complexity <= 1);
        }
    }
    SECTION("below the first entry: empty, or the first entry when required") {
        const Prediction empty =
            crsvpr_predict(h, p, predictor_with_tau(Method::kCrsvpR, 0.05, 2), 0.5);
        CHECK(empty.classes.empty());
        const Prediction forced = crsvpr_predict(
            h, p, predictor_with_tau(Method::kCrsvpR, 0.05, 2, /*allow_empty=*/false), 0.5);
        CHECK(forced.classes == std::vector<int>{mode(p)});  // first entry is the mode
    }
    SECTION("calibrate single instance, label 2, r=2") {
        ConformalConfig config;
        config.method = Method::kCrsvpR;
        config.r = 2;
        config.alpha = 0.5;
        const CalibratedPredictor pred = calibrate(
            h, {demo_masses()}, std::vector<int>{h.class_id("2")}, config, 0.5);
        CHECK_THAT(pred.tau_star, WithinAbs(0.355, 1e-12));
    }
    SECTION("single instance at the mode with u=0 scores 0 for any r") {
        for (int r : {1, 2, 5}) {
            ConformalConfig config;
            config.method = Method::kCrsvpR;
            config.r = r;
            config.alpha = 0.5;
            const CalibratedPredictor pred =
                calibrate(h, {demo_masses()}, std::vector<int>{mode(p)}, config, 0.0);
            CHECK(pred.tau_star == 0.0);
        }
    }
}

TEST_CASE("aps and lac") {
    const Hierarchy h = demo_hierarchy();
    const ProbabilityView p = demo_view(h);

    SECTION("aps scores are rho + u * mass") {
        CHECK(aps_score(p, mode(p), 0.0) == 0.0);
        CHECK_THAT(aps_score(p, h.class_id("5"), 0.0), WithinAbs(0.15, 1e-12));
        CHECK_THAT(aps_score(p, h.class_id("2"), 0.0), WithinAbs(0.29, 1e-12));
        CHECK_THAT(aps_score(p, h.class_id("1"), 1.0), WithinAbs(0.15, 1e-12));
    }
    SECTION("aps predict at u=0, tau=0.3 keeps {1,2,5}") {
        const Prediction pred = aps_predict(h, p, predictor_with_tau(Method::kAps, 0.3), 0.0);
        CHECK(pred.classes == classes_named(h, {"1", "2", "5"}));
    }
    SECTION("aps predict at u=1, tau=0.15 keeps only the mode") {
        const Prediction pred = aps_predict(h, p, predictor_with_tau(Method::kAps, 0.15), 1.0);
        CHECK(pred.classes == std::vector<int>{mode(p)});
    }
    SECTION("aps sentinel returns everything") {
        const Prediction pred =
            aps_predict(h, p, predictor_with_tau(Method::kAps, kTauSentinel), 0.3);
        CHECK(pred.classes.size() == 8);
    }
    SECTION("lac thresholds the raw masses") {
        const Prediction pred = lac_predict(h, p, predictor_with_tau(Method::kLac, 0.86), 0.0);
        CHECK(pred.classes == classes_named(h, {"1", "5"}));
        const Prediction all =
            lac_predict(h, p, predictor_with_tau(Method::kLac, kTauSentinel), 0.0);
        CHECK(all.classes.size() == 8);
    }
    SECTION("lac calibration on a perfect classifier gives tau 0") {
        const Hierarchy two =
            parse_hierarchy(R"({"name":"r","children":[{"name":"a"},{"name":"b"}]})");
        ConformalConfig config;
        config.method = Method::kLac;
        config.alpha = 0.5;
        const CalibratedPredictor pred =
            calibrate(two, {{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}, std::vector<int>{0, 0, 0},
                      config);
        CHECK(pred.tau_star == 0.0);
        const Prediction out =
            lac_predict(two, ProbabilityView(two, {1.0, 0.0}), pred, 0.0);
        CHECK(out.classes == std::vector<int>{0});
    }
    SECTION("lac calibration on the demo instance with label 3") {
        ConformalConfig config;
        config.method = Method::kLac;
        config.alpha = 0.5;
        const CalibratedPredictor pred = calibrate(
            h, {demo_masses()}, std::vector<int>{h.class_id("3")}, config);
        CHECK_THAT(pred.tau_star, WithinAbs(0.92, 1e-12));
    }
}

TEST_CASE("property: score/quantile consistency at every breakpoint") {
    // y ∈ predict(x, u, tau) <=> score(x, y, u) <= tau, for every method.
    const Hierarchy h = demo_hierarchy();
    const std::vector<std::pair<Method, int>> methods{
        {Method::kCrsvp, 1}, {Method::kCrsvpR, 1}, {Method::kCrsvpR, 2},
        {Method::kCrsvpR, 3}, {Method::kAps, 1},   {Method::kLac, 1}};
    for (int trial = 0; trial < 20; ++trial) {
        const ProbabilityView p =
            trial == 0 ? demo_view(h) : random_view(h, rng::mix(61, 0, trial));
        const double u = trial == 0 ? 0.5 : rng::uniform(61, 1, trial);
        for (const auto& [method, r] : methods) {
            for (double tau : breakpoints(h, p, method, r, u)) {
                const Prediction pred = predict_for(h, p, predictor_with_tau(method, tau, r), u);
                for (int y = 0; y < h.num_classes(); ++y) {
                    const double score = score_for(h, p, method, r, y, u);
                    const bool member = std::binary_search(pred.classes.begin(),
                                                           pred.classes.end(), y);
                    INFO("method " << method_name(method) << " r=" << r << " tau=" << tau
                                   << " y=" << y << " score=" << score);
                    REQUIRE(member == (score <= tau));
                }
            }
        }
    }
}

TEST_CASE("property: predictions are nested across thresholds") {
    const Hierarchy h = demo_hierarchy();
    const std::vector<std::pair<Method, int>> methods{
        {Method::kCrsvp, 1}, {Method::kCrsvpR, 2}, {Method::kCrsvpR, 3}, {Method::kAps, 1},
        {Method::kLac, 1}};
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 2 + static_cast<int>(rng::uniform(67, 0, trial) * 11);
        const Hierarchy ht = random_tree(k, 4, rng::mix(67, 1, trial));
        const ProbabilityView p = random_view(ht, rng::mix(67, 2, trial));
        const double u = rng::uniform(67, 3, trial);
        for (const auto& [method, r] : methods) {
            std::vector<int> previous;
            for (double tau : breakpoints(ht, p, method, r, u)) {
                const Prediction pred = predict_for(ht, p, predictor_with_tau(method, tau, r), u);
                INFO("method " << method_name(method) << " trial " << trial << " tau " << tau);
                REQUIRE(std::includes(pred.classes.begin(), pred.classes.end(),
                                      previous.begin(), previous.end()));
                previous = pred.classes;
            }
            REQUIRE(static_cast<int>(previous.size()) == k);  // last breakpoint covers Y
        }
    }
}

TEST_CASE("property: crsvp-r with r = K matches aps score for score") {
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng::uniform(71, 0, trial) * 15);
        const Hierarchy h = random_tree(k, 3, rng::mix(71, 1, trial));
        const ProbabilityView p = random_view(h, rng::mix(71, 2, trial));
        const double u = rng::uniform(71, 3, trial);
        for (int y = 0; y < k; ++y)
            REQUIRE_THAT(crsvpr_score(h, p, y, k, u), WithinAbs(aps_score(p, y, u), 1e-12));
    }
}

TEST_CASE("predictor serialization round trip") {
    const Hierarchy h = demo_hierarchy();
    CalibratedPredictor pred = predictor_with_tau(Method::kCrsvpR, 0.355, 2);
    pred.config.seed = 42;
    pred.config.randomized = false;
    pred.n_cal = 17;

    const nlohmann::json j = predictor_to_json(pred, h.num_classes());
    CHECK(j.at("method") == "crsvp-r");
    CHECK(j.at("tau_star").get<double>() == 0.355);
    const CalibratedPredictor back = predictor_from_json(j, &h);
    CHECK(back.config.method == Method::kCrsvpR);
    CHECK(back.config.r == 2);
    CHECK(back.config.seed == 42);
    CHECK_FALSE(back.config.randomized);
    CHECK(back.tau_star == 0.355);
    CHECK(back.n_cal == 17);

    SECTION("sentinel serializes as the string inf") {
        pred.tau_star = kTauSentinel;
        const nlohmann::json js = predictor_to_json(pred, h.num_classes());
        CHECK(js.at("tau_star") == "inf");
        CHECK(std::isinf(predictor_from_json(js, &h).tau_star));
    }
    SECTION("class-count mismatch is rejected") {
        const Hierarchy two =
            parse_hierarchy(R"({"name":"r","children":[{"name":"a"},{"name":"b"}]})");
        CHECK_THROWS_AS(predictor_from_json(j, &two), data_error);
    }
}

TEST_CASE("u draws are keyed by instance and stream") {
    // same (seed, index) gives the same draw; calibration and test streams differ
    CHECK(rng::uniform(9, rng::kCalibrationStream, 4) ==
          rng::uniform(9, rng::kCalibrationStream, 4));
    CHECK(rng::uniform(9, rng::kCalibrationStream, 4) != rng::uniform(9, rng::kTestStream, 4));
    for (int i = 0; i < 100; ++i) {
        const double u = rng::uniform(123, rng::kCalibrationStream, i);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}
