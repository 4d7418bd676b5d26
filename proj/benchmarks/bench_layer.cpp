#include <benchmark/benchmark.h>

#include <random>

#include "lofi/lofi_layer.hpp"
#include "lofi/model.hpp"
#include "lofi/scaling.hpp"

namespace {

using namespace lofi;

struct Fixture {
    Graph graph;
    EgonetIndex egonets;
    LofiLayer layer;

    Fixture(std::size_t nodes, std::size_t masks, std::size_t words, int radius)
        : graph(make_synthetic_graph(nodes, 4.0, 8, 1)), egonets(extract_egonets(graph, radius)),
          layer(masks, words, 8) {
        std::mt19937_64 rng(2);
        layer.initialize(rng, 5.0);
    }
};

void BM_LayerForward(benchmark::State& state) {
    const Fixture f(static_cast<std::size_t>(state.range(0)), 8, static_cast<std::size_t>(state.range(1)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(layer_forward(f.graph.features(), f.egonets, f.layer));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LayerForward)->ArgsProduct({{1000, 4000, 16000}, {8, 32}});

void BM_LayerBackward(benchmark::State& state) {
    const Fixture f(static_cast<std::size_t>(state.range(0)), 8, 8, 1);
    const auto out = layer_forward(f.graph.features(), f.egonets, f.layer);
    const Matrix upstream(f.graph.node_count(), 8, 1.0);
    LayerGrad grad(f.layer);
    for (auto _ : state) benchmark::DoNotOptimize(layer_backward(out.tape, upstream, grad));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LayerBackward)->Arg(1000)->Arg(4000)->Arg(16000);

void BM_Egonets(benchmark::State& state) {
    const Graph g = make_synthetic_graph(4000, 4.0, 8, 1);
    for (auto _ : state) benchmark::DoNotOptimize(extract_egonets(g, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Egonets)->DenseRange(1, 3);

void BM_ModelStep(benchmark::State& state) {
    // one forward + backward of a default-sized model on a MUTAG-sized graph
    const Graph g = make_synthetic_graph(18, 2.2, 7, 3);
    const auto ego = extract_egonets(g, 1);
    ModelConfig c;
    c.task = Task{TaskKind::classification, 2};
    const Model m = Model::create(c, 7, 4, 3.0);
    ModelGrad grad = m.make_grad();
    for (auto _ : state) {
        auto fwd = model_forward(g, ego, m);
        const auto lv = evaluate_loss(fwd.output, 0, c.task);
        benchmark::DoNotOptimize(model_backward(m, fwd.tape, lv.grad, grad));
    }
}
BENCHMARK(BM_ModelStep);

}  // namespace
BENCHMARK_MAIN();
