#include <gtest/gtest.h>

#include <cmath>

#include "lofi/errors.hpp"
#include "lofi/scaling.hpp"

using namespace lofi;

TEST(Scaling, SyntheticGraphHasRequestedDegree) {
    const Graph g = make_synthetic_graph(1000, 4.0, 5, 3);
    EXPECT_EQ(g.node_count(), 1000u);
    EXPECT_EQ(g.feature_dim(), 5u);
    // duplicates are collapsed, so slightly fewer than n * degree / 2
    EXPECT_GT(g.edges().size(), 1900u);
    EXPECT_LE(g.edges().size(), 2000u);
    for (std::size_t v = 0; v < g.node_count(); ++v) {
        double row = 0.0;
        for (double x : g.features().row(v)) row += x;
        EXPECT_EQ(row, 1.0);
    }
    EXPECT_EQ(make_synthetic_graph(50, 3.0, 2, 9), make_synthetic_graph(50, 3.0, 2, 9));
}

TEST(Scaling, LogLogSlopeRecoversPowerLaw) {
    const std::vector<double> x{1, 2, 4, 8, 16};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, 1.5));
    EXPECT_NEAR(loglog_slope(x, y), 1.5, 1e-12);
    EXPECT_THROW(loglog_slope({1.0}, {1.0}), ConfigError);
}

TEST(Scaling, RejectsShortLadders) {
    EXPECT_THROW(run_scaling(ScalingVariable::nodes, {100, 200}, ScalingBase{}), ConfigError);
    EXPECT_THROW(run_scaling(ScalingVariable::nodes, {100, 0, 200}, ScalingBase{}), ConfigError);
}

TEST(Scaling, SeriesRecordsWorkMeasures) {
    ScalingBase base;
    base.repeats = 1;
    base.min_seconds = 0.0;
    const auto s = run_scaling(ScalingVariable::words, {2, 4, 8}, base);
    ASSERT_EQ(s.points.size(), 3u);
    for (const auto& p : s.points) {
        EXPECT_GT(p.seconds, 0.0);
        EXPECT_EQ(p.egonet_membership, s.points[0].egonet_membership);
    }
    const nlohmann::json j = s;
    EXPECT_EQ(j["variable"], "W");
    EXPECT_EQ(scaling_variable_from_string("M"), ScalingVariable::masks);
    EXPECT_THROW(scaling_variable_from_string("x"), ConfigError);
}
