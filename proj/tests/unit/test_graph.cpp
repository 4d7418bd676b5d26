#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lofi/errors.hpp"
#include "lofi/graph.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace lofi;

namespace {

fs::path fixtures() { return fs::path(LOFI_TEST_FIXTURES); }

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("lofi_test_graph_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void copy_tiny(const fs::path& dst) {
    for (const auto& e : fs::directory_iterator(fixtures() / "TINY")) fs::copy_file(e.path(), dst / e.path().filename());
}

Graph path_graph(std::size_t n) {
    std::vector<Edge> edges;
    for (NodeId v = 1; v < n; ++v) edges.emplace_back(v - 1, v);
    return Graph(n, edges, Matrix(n, 1, 1.0), 0);
}

}  // namespace

TEST(Graph, DeduplicatesAndOrdersEdges) {
    Graph g(3, {{1, 0}, {0, 1}, {2, 1}, {1, 2}}, Matrix(3, 1, 1.0), 0);
    ASSERT_EQ(g.edges().size(), 2u);
    EXPECT_EQ(g.edges()[0], (Edge{0, 1}));
    EXPECT_EQ(g.edges()[1], (Edge{1, 2}));
    EXPECT_EQ(g.degree(1), 2u);
    EXPECT_EQ(g.degree(0), 1u);
}

TEST(Graph, RejectsOutOfRangeEdgesAndBadShapes) {
    EXPECT_THROW(Graph(2, {{0, 2}}, Matrix(2, 1), 0), IntegrityError);
    EXPECT_THROW(Graph(2, {}, Matrix(3, 1), 0), ShapeError);
    EXPECT_THROW(Graph(0, {}, Matrix(0, 1), 0), ShapeError);
}

TEST(Graph, RelabelPermutesAdjacencyAndFeatures) {
    std::mt19937_64 rng(3);
    Graph g = test::random_graph(rng, 6, 3, 0.3, 1);
    std::vector<NodeId> perm{3, 0, 5, 1, 4, 2};
    Graph h = g.relabeled(perm);
    for (NodeId v = 0; v < 6; ++v) {
        EXPECT_EQ(g.degree(v), h.degree(perm[v]));
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(g.features()(v, k), h.features()(perm[v], k));
    }
}

TEST(Egonets, RadiusTwoOnPath) {
    const Graph g = path_graph(5);
    const auto ego = extract_egonets(g, 2);
    const std::vector<NodeId> c{0, 1, 2, 3, 4};
    const std::vector<NodeId> a{0, 1, 2};
    EXPECT_EQ(std::vector<NodeId>(ego.members(2).begin(), ego.members(2).end()), c);
    EXPECT_EQ(std::vector<NodeId>(ego.members(0).begin(), ego.members(0).end()), a);
    EXPECT_EQ(ego.radius(), 2);
}

TEST(Egonets, RadiusOneIsClosedNeighbourhood) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Graph g = test::random_graph(rng, 10, 2, 0.2, 0);
        const auto ego = extract_egonets(g, 1);
        for (NodeId v = 0; v < g.node_count(); ++v) {
            std::vector<NodeId> expect(g.neighbours(v).begin(), g.neighbours(v).end());
            expect.push_back(v);
            std::sort(expect.begin(), expect.end());
            EXPECT_EQ(std::vector<NodeId>(ego.members(v).begin(), ego.members(v).end()), expect);
        }
    }
}

TEST(Egonets, MembershipIsSymmetricAndContainsCentre) {
    std::mt19937_64 rng(5);
    for (int r = 1; r <= 3; ++r) {
        const Graph g = test::random_graph(rng, 12, 2, 0.1, 0);
        const auto ego = extract_egonets(g, r);
        std::size_t total = 0;
        for (NodeId v = 0; v < g.node_count(); ++v) {
            auto mv = ego.members(v);
            total += mv.size();
            EXPECT_TRUE(std::binary_search(mv.begin(), mv.end(), v));
            for (NodeId u : mv) {
                auto mu = ego.members(u);
                EXPECT_TRUE(std::binary_search(mu.begin(), mu.end(), v)) << "r=" << r;
            }
        }
        EXPECT_EQ(total, ego.total_membership());
    }
}

TEST(Egonets, RejectsNonPositiveRadius) { EXPECT_THROW(extract_egonets(path_graph(3), 0), ConfigError); }

TEST(Loader, ParsesTinyFixture) {
    const Dataset ds = load_tudataset(fixtures() / "TINY", "TINY");
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.graphs[0].node_count(), 3u);
    EXPECT_EQ(ds.graphs[1].node_count(), 2u);
    EXPECT_EQ(ds.feature_dim, 2u);
    EXPECT_TRUE(ds.has_node_labels);
    EXPECT_EQ(ds.task, (Task{TaskKind::classification, 2}));
    EXPECT_EQ(ds.graphs[0].edges(), (std::vector<Edge>{{0, 1}, {0, 2}, {1, 2}}));
    EXPECT_EQ(ds.graphs[1].edges(), (std::vector<Edge>{{0, 1}}));
    EXPECT_EQ(ds.graphs[0].class_label(), 1);  // raw 1 sorts after -1
    EXPECT_EQ(ds.graphs[1].class_label(), 0);
    EXPECT_EQ(ds.graphs[0].features()(1, 1), 1.0);
    EXPECT_EQ(ds.graphs[0].features()(1, 0), 0.0);
    EXPECT_NO_THROW(validate(ds));
}

TEST(Loader, UnlabeledNodesGetConstantFeature) {
    const auto dir = scratch("unlabeled");
    copy_tiny(dir);
    fs::remove(dir / "TINY_node_labels.txt");
    const Dataset ds = load_tudataset(dir, "TINY");
    EXPECT_FALSE(ds.has_node_labels);
    EXPECT_EQ(ds.feature_dim, 1u);
    for (const auto& g : ds.graphs)
        for (double x : g.features().values()) EXPECT_EQ(x, 1.0);
}

TEST(Loader, MissingDirectoryAndFiles) {
    try {
        load_tudataset(fixtures() / "NOPE", "NOPE");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("dataset directory not found"), std::string::npos);
    }
    const auto dir = scratch("missing");
    copy_tiny(dir);
    fs::remove(dir / "TINY_graph_indicator.txt");
    try {
        load_tudataset(dir, "TINY");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("TINY_graph_indicator.txt"), std::string::npos);
    }
}

TEST(Loader, NonIntegerEntryReportsLine) {
    const auto dir = scratch("parse");
    copy_tiny(dir);
    std::ofstream(dir / "TINY_graph_indicator.txt") << "1\n1\nx\n2\n2\n";
    try {
        load_tudataset(dir, "TINY");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("TINY_graph_indicator.txt:3"), std::string::npos) << e.what();
    }
}

TEST(Loader, CountMismatchIsIntegrityError) {
    const auto dir = scratch("integrity");
    copy_tiny(dir);
    std::ofstream(dir / "TINY_graph_labels.txt") << "1\n";
    EXPECT_THROW(load_tudataset(dir, "TINY"), IntegrityError);

    copy_tiny(scratch("integrity2"));
    const auto dir2 = fs::temp_directory_path() / "lofi_test_graph_integrity2";
    std::ofstream(dir2 / "TINY_node_labels.txt") << "0\n1\n0\n";
    EXPECT_THROW(load_tudataset(dir2, "TINY"), IntegrityError);

    copy_tiny(scratch("integrity3"));
    const auto dir3 = fs::temp_directory_path() / "lofi_test_graph_integrity3";
    std::ofstream(dir3 / "TINY_A.txt", std::ios::app) << "1, 4\n";  // crosses graphs
    EXPECT_THROW(load_tudataset(dir3, "TINY"), IntegrityError);
}

TEST(Loader, WriteReadRoundTrip) {
    const Dataset ds = load_tudataset(fixtures() / "TINY", "TINY");
    const auto dir = scratch("roundtrip");
    write_tudataset(ds, dir);
    const Dataset back = load_tudataset(dir, "TINY");
    EXPECT_EQ(ds, back);
}

TEST(Loader, RegressionTargetsRoundTrip) {
    std::mt19937_64 rng(9);
    Dataset ds;
    ds.name = "REG";
    ds.task = Task{TaskKind::regression, 0};
    ds.feature_dim = 3;
    ds.has_node_labels = true;
    for (int i = 0; i < 5; ++i) ds.graphs.push_back(test::random_graph(rng, 4 + i, 3, 0.3, 0.1 * i - 0.123456789, true));
    const auto dir = scratch("regression");
    write_tudataset(ds, dir);
    const Dataset back = load_tudataset(dir, "REG");
    EXPECT_EQ(back.task.kind, TaskKind::regression);
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_EQ(back.graphs[i].regression_value(), ds.graphs[i].regression_value());
}

TEST(EgonetCache, ComputesOncePerRadiusAndMeanSize) {
    const Dataset ds = load_tudataset(fixtures() / "TINY", "TINY");
    EgonetCache cache(ds);
    const auto& a = cache.at_radius(1);
    const auto& b = cache.at_radius(1);
    EXPECT_EQ(&a, &b);
    // triangle: every ball has 3 nodes; edge: every ball has 2
    EXPECT_DOUBLE_EQ(cache.mean_egonet_size(1), (3.0 * 3 + 2.0 * 2) / 5.0);
    const std::vector<std::size_t> first{0};
    EXPECT_DOUBLE_EQ(cache.mean_egonet_size(1, first), 3.0);
}

TEST(Mutag, LoadsWhenVendored) {
    const fs::path root = fs::path(LOFI_DATA_DIR) / "MUTAG";
    if (!fs::exists(root)) GTEST_SKIP() << "MUTAG not present";
    const Dataset ds = load_tudataset(root, "MUTAG");
    EXPECT_EQ(ds.size(), 188u);
    EXPECT_EQ(ds.feature_dim, 7u);
    EXPECT_EQ(ds.task.num_classes, 2);
}
