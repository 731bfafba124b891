#include <gtest/gtest.h>

#include "enet/analyzer.hpp"
#include "enet/passes.hpp"
#include "enet/runtime.hpp"
#include "fixtures.hpp"

using namespace enet;

namespace {

// input -> 1x1 conv (1 -> 1) -> BatchNorm -> output with the given statistics.
std::pair<Graph, WeightStore> conv_bn(float w, float gamma, float beta, float mean, float var, float eps) {
  GraphBuilder b({1, 2, 2}, 2);
  const int conv = b.conv("conv", b.input(), {.out_channels = 1});
  const int bn = b.batchnorm("bn", conv);
  Graph g = std::move(b).finish(bn);
  std::vector<NodeSpec> nodes = g.nodes();
  std::get<BatchNormAttrs>(nodes[static_cast<std::size_t>(bn)].attrs).epsilon = eps;
  Graph out(nodes, g.input_shape(), 2);
  WeightStore ws{{"conv.weight", NdArray({1, 1, 1, 1}, w)},
                 {"bn.gamma", NdArray({1}, gamma)},
                 {"bn.beta", NdArray({1}, beta)},
                 {"bn.mean", NdArray({1}, mean)},
                 {"bn.var", NdArray({1}, var)}};
  return {out, ws};
}

Tensor run(const Graph& g, const WeightStore& w, const Tensor& x) { return execute(g, w, x); }

}  // namespace

TEST(FoldBatchNorm, ScalarAlgebra) {
  const auto [g, w] = conv_bn(0.75f, 2.0f, 0.5f, 1.0f, 1.0f, 0.0f);
  const auto r = fold_batchnorm(g, w);
  EXPECT_EQ(r.graph.count(NodeKind::BatchNorm), 0u);
  EXPECT_FLOAT_EQ(r.weights.at("conv.weight")[0], 1.5f);
  EXPECT_FLOAT_EQ(r.weights.at("conv.bias")[0], -1.5f);
  EXPECT_TRUE(r.graph.node(1).conv().has_bias);
  EXPECT_EQ(r.weights.count("bn.gamma"), 0u);
  EXPECT_EQ(r.report.nodes_removed, 1u);
  EXPECT_EQ(r.report.nodes_rewritten, 1u);
}

TEST(FoldBatchNorm, IdentityStatistics) {
  const auto [g, w] = conv_bn(-0.3f, 1.0f, 0.0f, 0.0f, 1.0f, 0.0f);
  const auto r = fold_batchnorm(g, w);
  EXPECT_EQ(r.weights.at("conv.weight")[0], -0.3f);
  EXPECT_EQ(r.weights.at("conv.bias")[0], 0.0f);
}

TEST(FoldBatchNorm, ExistingBiasIsFolded) {
  GraphBuilder b({2, 4, 4}, 2);
  const int conv = b.conv("conv", b.input(), {.kernel_h = 3, .kernel_w = 3, .pad_h = 1, .pad_w = 1,
                                               .out_channels = 3, .has_bias = true});
  const Graph g = std::move(b).finish(b.batchnorm("bn", conv));
  WeightStore w = init_weights(g, 3);
  for (float& v : w.at("conv.bias").data()) v = 0.3f;
  fixtures::randomize_batchnorm(g, w, 4);
  const auto r = fold_batchnorm(g, w);
  EXPECT_EQ(r.graph.node(conv).weight_refs.at("bias"), "conv.bias");
  const Tensor x = random_tensor({2, 4, 4}, 5);
  EXPECT_TRUE(approx_eq(run(r.graph, r.weights, x), run(g, w, x), 1e-5f, 1e-5f));
}

TEST(FoldBatchNorm, TransposedAndAsymmetricConvolutions) {
  GraphBuilder b({4, 6, 6}, 2);
  int x = b.conv_transpose("up", b.input(), {.kernel_h = 3, .kernel_w = 3, .stride = 2, .pad_h = 1, .pad_w = 1,
                                             .out_channels = 5, .output_padding = 1});
  x = b.batchnorm("up_bn", x);
  x = b.asym_conv5("asym", x, 5);
  x = b.batchnorm("asym_bn", x);
  const Graph g = std::move(b).finish(x);
  WeightStore w = init_weights(g, 6);
  fixtures::randomize_batchnorm(g, w, 7);
  const auto r = fold_batchnorm(g, w);
  EXPECT_EQ(r.graph.count(NodeKind::BatchNorm), 0u);
  EXPECT_TRUE(validate(r.graph, r.weights).empty());
  const Tensor in = random_tensor({4, 6, 6}, 8);
  EXPECT_TRUE(approx_eq(run(r.graph, r.weights, in), run(g, w, in), 1e-5f, 1e-5f));
}

TEST(FoldBatchNorm, RefusesNonConvolutionProducer) {
  const Graph g = build_enet(19, 64, 64);
  const WeightStore w = init_weights(g, 1);
  try {
    fold_batchnorm(g, w);
    FAIL() << "expected FoldError";
  } catch (const FoldError& e) {
    EXPECT_EQ(g.node(e.node_id()).name, "initial.bn");
    EXPECT_NE(std::string(e.what()).find("initial.bn"), std::string::npos);
  }
  const auto r = fold_batchnorm(g, w, FoldPolicy::SkipUnfoldable);
  EXPECT_EQ(r.graph.count(NodeKind::BatchNorm), 1u);
}

TEST(FoldBatchNorm, RefusesSharedConvolution) {
  GraphBuilder b({2, 4, 4}, 2);
  const int conv = b.conv("conv", b.input(), {.out_channels = 2});
  const int bn = b.batchnorm("bn", conv);
  const Graph g = std::move(b).finish(b.add("sum", bn, conv));
  EXPECT_THROW(fold_batchnorm(g, init_weights(g, 1)), FoldError);
}

TEST(ElideDropout, RemovesOnePerBottleneck) {
  const Graph g = build_enet(19, 64, 64);
  const auto r = elide_dropout(g);
  constexpr std::size_t kBottlenecks = 5 + 9 + 8 + 3 + 2;
  EXPECT_EQ(r.report.nodes_removed, kBottlenecks);
  EXPECT_EQ(r.graph.count(NodeKind::Dropout), 0u);
  EXPECT_EQ(r.graph.size(), g.size() - kBottlenecks);
  const auto again = elide_dropout(r.graph);
  EXPECT_EQ(again.report.nodes_removed, 0u);
  EXPECT_EQ(again.graph, r.graph);
}

TEST(ElideDropout, NoDropoutNoChange) {
  GraphBuilder b({1, 2, 2}, 2);
  const Graph g = std::move(b).finish(b.prelu("p", b.input()));
  const auto r = elide_dropout(g);
  EXPECT_EQ(r.report.nodes_removed, 0u);
  EXPECT_EQ(r.graph, g);
}

TEST(ElideDropout, OutputBitwiseUnchanged) {
  const Graph g = build_enet(4, 32, 32);
  const WeightStore w = init_weights(g, 2);
  const Tensor x = random_tensor({3, 32, 32}, 3);
  EXPECT_TRUE(bitwise_equal(run(elide_dropout(g).graph, w, x), run(g, w, x)));
}

TEST(Fusion, FullNetworkEquivalent) {
  const Graph g = build_enet(19, 64, 64);
  WeightStore w = init_weights(g, 10);
  fixtures::randomize_batchnorm(g, w, 11);
  const auto opt = optimize_for_inference(g, w);
  const Tensor x = random_tensor({3, 64, 64}, 12);
  const Tensor a = run(g, w, x);
  const Tensor b = run(opt.graph, opt.weights, x);
  EXPECT_TRUE(approx_eq(b, a, 1e-4f, 1e-4f)) << "max diff " << max_abs_diff(a, b);
  EXPECT_LT(opt.graph.size(), g.size());
  EXPECT_LE(count_flops(opt.graph, opt.graph.input_shape()).total_macs, count_flops(g, g.input_shape()).total_macs);
}

TEST(Fusion, PassesAreConfluent) {
  const Graph g = build_enet(19, 32, 32);
  WeightStore w = init_weights(g, 13);
  fixtures::randomize_batchnorm(g, w, 14);
  const auto fold_first = fold_batchnorm(g, w, FoldPolicy::SkipUnfoldable);
  const Graph a = elide_dropout(fold_first.graph).graph;
  const Graph elided = elide_dropout(g).graph;
  const auto b = fold_batchnorm(elided, w, FoldPolicy::SkipUnfoldable);
  EXPECT_EQ(a, b.graph);
  EXPECT_EQ(fold_first.weights, b.weights);
}

TEST(Fusion, OriginalsUntouched) {
  const Graph g = build_enet(19, 32, 32);
  const WeightStore w = init_weights(g, 15);
  const Graph g_copy = g;
  const WeightStore w_copy = w;
  optimize_for_inference(g, w);
  EXPECT_EQ(g, g_copy);
  EXPECT_EQ(w, w_copy);
}

TEST(Validate, FreshModelIsClean) {
  const Graph g = build_enet(19, 64, 64);
  EXPECT_TRUE(validate(g, init_weights(g, 1)).empty());
}

TEST(Validate, ReshapedWeight) {
  const Graph g = build_enet(19, 64, 64);
  WeightStore w = init_weights(g, 1);
  auto& k = w.at("bottleneck2.3.ext.main.conv.weight_1x5");
  k = NdArray({32, 32, 5, 1}, std::vector<float>(k.data().begin(), k.data().end()));
  const auto d = validate(g, w);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(g.node(d[0].node_id).name, "bottleneck2.3.ext.main.conv");
  EXPECT_NE(d[0].message.find("bottleneck2.3.ext.main.conv.weight_1x5"), std::string::npos);
}

TEST(Validate, MissingWeight) {
  const Graph g = build_enet(19, 64, 64);
  WeightStore w = init_weights(g, 1);
  w.erase("fullconv.conv.bias");
  const auto d = validate(g, w);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("not found"), std::string::npos);
}

TEST(Validate, DanglingIndexLink) {
  const Graph g = build_enet(19, 64, 64);
  std::vector<NodeSpec> nodes = g.nodes();
  for (auto& n : nodes) {
    if (n.kind == NodeKind::MaxUnpool) {
      n.index_link = 100000;
      break;
    }
  }
  const Graph broken(nodes, g.input_shape(), g.num_classes());
  const auto d = validate(broken, init_weights(g, 1));
  ASSERT_FALSE(d.empty());
  EXPECT_NE(d[0].message.find("unpool index source missing"), std::string::npos);
}

TEST(Validate, StructuralFaults) {
  NodeSpec in{.id = 0, .kind = NodeKind::Input, .name = "input"};
  NodeSpec fwd{.id = 1, .kind = NodeKind::PReLU, .name = "p", .inputs = {2}};
  NodeSpec out{.id = 2, .kind = NodeKind::Output, .name = "output", .inputs = {0}};
  const auto d = validate(Graph({in, fwd, out}, {1, 2, 2}, 2), {});
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0].node_id, 1);
  EXPECT_TRUE(validate(Graph({in}, {1, 2, 2}, 2), {}).size() == 1u);  // no Output
}
