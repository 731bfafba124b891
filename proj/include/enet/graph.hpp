#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "enet/error.hpp"
#include "enet/kernels.hpp"
#include "enet/tensor.hpp"

namespace enet {

enum class NodeKind {
  Input,
  Output,
  Conv,
  ConvTranspose,
  AsymConv5,
  MaxPool,
  MaxUnpool,
  BatchNorm,
  PReLU,
  Add,
  ConcatChannels,
  PadChannels,
  Dropout,
};

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "Input";
    case NodeKind::Output: return "Output";
    case NodeKind::Conv: return "Conv";
    case NodeKind::ConvTranspose: return "ConvTranspose";
    case NodeKind::AsymConv5: return "AsymConv5";
    case NodeKind::MaxPool: return "MaxPool";
    case NodeKind::MaxUnpool: return "MaxUnpool";
    case NodeKind::BatchNorm: return "BatchNorm";
    case NodeKind::PReLU: return "PReLU";
    case NodeKind::Add: return "Add";
    case NodeKind::ConcatChannels: return "ConcatChannels";
    case NodeKind::PadChannels: return "PadChannels";
    case NodeKind::Dropout: return "Dropout";
  }
  return "?";
}

struct BatchNormAttrs {
  float epsilon = 1e-5f;
  bool operator==(const BatchNormAttrs&) const = default;
};

struct DropoutAttrs {
  float rate = 0.0f;
  bool operator==(const DropoutAttrs&) const = default;
};

struct PadAttrs {
  std::size_t target_channels = 0;
  bool operator==(const PadAttrs&) const = default;
};

// Conv, ConvTranspose and AsymConv5 carry ConvParams. For AsymConv5 the
// params describe the factorized 5x5 pair (kernel 5x5, pad 2).
using NodeAttrs = std::variant<std::monostate, ConvParams, BatchNormAttrs, DropoutAttrs, PadAttrs>;

struct NodeSpec {
  int id = -1;
  NodeKind kind = NodeKind::Input;
  std::string name;
  // Architecture module ("initial", "bottleneck2.3", "fullconv") and stage
  // number (0 = initial, 1..5, 6 = fullconv, -1 = graph terminals).
  std::string module;
  int stage = -1;
  NodeAttrs attrs;
  std::vector<int> inputs;
  // role ("weight", "bias", "gamma", ...) -> WeightStore key
  std::map<std::string, std::string> weight_refs;
  std::optional<int> index_link;

  const ConvParams& conv() const { return std::get<ConvParams>(attrs); }

  bool operator==(const NodeSpec&) const = default;
};

using WeightStore = std::map<std::string, NdArray>;

inline std::size_t total_elements(const WeightStore& w) {
  std::size_t n = 0;
  for (const auto& [name, arr] : w) n += arr.size();
  return n;
}

/// Immutable computation graph; storage order is the execution order.
/// Construction only checks id uniqueness; structural checks live in
/// validate().
class Graph {
 public:
  Graph() = default;

  Graph(std::vector<NodeSpec> nodes, Shape input_shape, std::size_t num_classes)
      : nodes_(std::move(nodes)), input_shape_(input_shape), num_classes_(num_classes) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!position_.emplace(nodes_[i].id, i).second) {
        throw ValidationError(nodes_[i].id, "duplicate node id");
      }
    }
  }

  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t num_classes() const { return num_classes_; }

  bool contains(int id) const { return position_.count(id) != 0; }

  const NodeSpec& node(int id) const {
    auto it = position_.find(id);
    if (it == position_.end()) throw ValidationError(id, "no such node");
    return nodes_[it->second];
  }

  std::size_t position(int id) const {
    auto it = position_.find(id);
    if (it == position_.end()) throw ValidationError(id, "no such node");
    return it->second;
  }

  std::vector<int> consumers(int id) const {
    std::vector<int> out;
    for (const auto& n : nodes_) {
      for (int in : n.inputs) {
        if (in == id) {
          out.push_back(n.id);
          break;
        }
      }
    }
    return out;
  }

  int find_kind(NodeKind k) const {
    for (const auto& n : nodes_) {
      if (n.kind == k) return n.id;
    }
    return -1;
  }

  std::size_t count(NodeKind k) const {
    std::size_t c = 0;
    for (const auto& n : nodes_) c += n.kind == k;
    return c;
  }

  /// Distinct architecture modules in order of first appearance.
  std::vector<std::string> modules() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& n : nodes_) {
      if (n.stage < 0 || n.module.empty()) continue;
      if (seen.insert(n.module).second) out.push_back(n.module);
    }
    return out;
  }

  bool operator==(const Graph& o) const {
    return nodes_ == o.nodes_ && input_shape_ == o.input_shape_ && num_classes_ == o.num_classes_;
  }

 private:
  std::vector<NodeSpec> nodes_;
  Shape input_shape_{};
  std::size_t num_classes_ = 0;
  std::unordered_map<int, std::size_t> position_;
};

inline std::string stage_label(int stage) {
  if (stage == 0) return "initial";
  if (stage == 6) return "fullconv";
  if (stage > 0 && stage < 6) return "stage" + std::to_string(stage);
  return "io";
}

// ---------------------------------------------------------------------------
// Shape inference

using ShapeMap = std::map<int, Shape>;

namespace detail {

inline const Shape& input_shape_of(const NodeSpec& n, std::size_t k, const ShapeMap& known) {
  if (k >= n.inputs.size()) throw ValidationError(n.id, "missing input " + std::to_string(k));
  auto it = known.find(n.inputs[k]);
  if (it == known.end()) {
    throw ValidationError(n.id, "input " + std::to_string(n.inputs[k]) + " has no inferred shape");
  }
  return it->second;
}

inline void expect_inputs(const NodeSpec& n, std::size_t count) {
  if (n.inputs.size() != count) {
    throw ValidationError(n.id, std::string(to_string(n.kind)) + " expects " + std::to_string(count) +
                                    " input(s), has " + std::to_string(n.inputs.size()));
  }
}

}  // namespace detail

/// Shape of one node given the shapes of everything before it.
inline Shape infer_node_shape(const Graph& g, const NodeSpec& n, const ShapeMap& known, const Shape& graph_input) {
  try {
    switch (n.kind) {
      case NodeKind::Input:
        detail::expect_inputs(n, 0);
        check_shape(graph_input);
        return graph_input;
      case NodeKind::Output:
      case NodeKind::BatchNorm:
      case NodeKind::PReLU:
      case NodeKind::Dropout:
        detail::expect_inputs(n, 1);
        return detail::input_shape_of(n, 0, known);
      case NodeKind::Conv:
      case NodeKind::AsymConv5: {
        detail::expect_inputs(n, 1);
        return conv2d_output_shape(detail::input_shape_of(n, 0, known), n.conv());
      }
      case NodeKind::ConvTranspose: {
        detail::expect_inputs(n, 1);
        const auto& p = n.conv();
        if (p.pad_h != p.pad_w) throw ShapeError("transposed convolution padding must be square");
        return conv_transpose2d_output_shape(detail::input_shape_of(n, 0, known), p.out_channels, p.kernel_h,
                                             p.kernel_w, p.stride, p.pad_h, p.output_padding);
      }
      case NodeKind::MaxPool: {
        detail::expect_inputs(n, 1);
        const Shape& s = detail::input_shape_of(n, 0, known);
        if (s.height % 2 || s.width % 2) throw ShapeError("max pooling input " + s.str() + " is not even");
        return {s.channels, s.height / 2, s.width / 2};
      }
      case NodeKind::MaxUnpool: {
        detail::expect_inputs(n, 1);
        const Shape& s = detail::input_shape_of(n, 0, known);
        if (!n.index_link) throw ValidationError(n.id, "unpool index source missing");
        if (!g.contains(*n.index_link) || !known.count(*n.index_link)) {
          throw ValidationError(n.id, "unpool index source missing");
        }
        if (g.node(*n.index_link).kind != NodeKind::MaxPool) {
          throw ValidationError(n.id, "unpool index source is not a MaxPool");
        }
        const Shape& idx = known.at(*n.index_link);
        if (idx != s) {
          throw ShapeError("unpool values " + s.str() + " do not match pool indices " + idx.str());
        }
        return {s.channels, s.height * 2, s.width * 2};
      }
      case NodeKind::Add: {
        detail::expect_inputs(n, 2);
        const Shape& a = detail::input_shape_of(n, 0, known);
        const Shape& b = detail::input_shape_of(n, 1, known);
        if (a != b) throw ShapeError("add operands " + a.str() + " and " + b.str() + " differ");
        return a;
      }
      case NodeKind::ConcatChannels: {
        detail::expect_inputs(n, 2);
        const Shape& a = detail::input_shape_of(n, 0, known);
        const Shape& b = detail::input_shape_of(n, 1, known);
        if (a.height != b.height || a.width != b.width) {
          throw ShapeError("concat operands " + a.str() + " and " + b.str() + " differ spatially");
        }
        return {a.channels + b.channels, a.height, a.width};
      }
      case NodeKind::PadChannels: {
        detail::expect_inputs(n, 1);
        const Shape& s = detail::input_shape_of(n, 0, known);
        const auto target = std::get<PadAttrs>(n.attrs).target_channels;
        if (target < s.channels) throw ShapeError("pad target below input channel count");
        return {target, s.height, s.width};
      }
    }
  } catch (const NodeError&) {
    throw;
  } catch (const std::bad_variant_access&) {
    throw ValidationError(n.id, "attributes do not match node kind");
  } catch (const Error& e) {
    throw ValidationError(n.id, e.what());
  }
  throw ValidationError(n.id, "unknown node kind");
}

/// Shapes of every node for the given input shape.
inline ShapeMap infer_shapes(const Graph& g, const Shape& input) {
  ShapeMap shapes;
  for (const auto& n : g.nodes()) shapes[n.id] = infer_node_shape(g, n, shapes, input);
  return shapes;
}

inline ShapeMap infer_shapes(const Graph& g) { return infer_shapes(g, g.input_shape()); }

// ---------------------------------------------------------------------------
// Weight layout

struct WeightSpec {
  std::string role;
  std::vector<std::size_t> dims;
};

/// Roles and dims of the weights a node consumes, given its first input shape.
inline std::vector<WeightSpec> weight_specs(const NodeSpec& n, const Shape& in) {
  switch (n.kind) {
    case NodeKind::Conv: {
      const auto& p = n.conv();
      std::vector<WeightSpec> w{{"weight", {p.out_channels, in.channels, p.kernel_h, p.kernel_w}}};
      if (p.has_bias) w.push_back({"bias", {p.out_channels}});
      return w;
    }
    case NodeKind::ConvTranspose: {
      const auto& p = n.conv();
      std::vector<WeightSpec> w{{"weight", {in.channels, p.out_channels, p.kernel_h, p.kernel_w}}};
      if (p.has_bias) w.push_back({"bias", {p.out_channels}});
      return w;
    }
    case NodeKind::AsymConv5: {
      const auto& p = n.conv();
      std::vector<WeightSpec> w{{"weight_5x1", {p.out_channels, in.channels, 5, 1}},
                                {"weight_1x5", {p.out_channels, p.out_channels, 1, 5}}};
      if (p.has_bias) w.push_back({"bias", {p.out_channels}});
      return w;
    }
    case NodeKind::BatchNorm:
      return {{"gamma", {in.channels}}, {"beta", {in.channels}}, {"mean", {in.channels}}, {"var", {in.channels}}};
    case NodeKind::PReLU:
      return {{"slope", {in.channels}}};
    default:
      return {};
  }
}

// ---------------------------------------------------------------------------
// Builder

/// Appends nodes in topological order, inferring shapes as it goes so
/// construction errors surface at the offending call.
class GraphBuilder {
 public:
  GraphBuilder(Shape input_shape, std::size_t num_classes) : input_shape_(input_shape), num_classes_(num_classes) {
    NodeSpec in;
    in.kind = NodeKind::Input;
    in.name = "input";
    append(std::move(in));
  }

  int input() const { return 0; }

  void set_module(std::string module, int stage) {
    module_ = std::move(module);
    stage_ = stage;
  }

  const Shape& shape(int id) const { return shapes_.at(id); }

  int conv(const std::string& name, int from, ConvParams p) {
    return add_weighted(NodeKind::Conv, name, p, from);
  }

  int conv_transpose(const std::string& name, int from, ConvParams p) {
    return add_weighted(NodeKind::ConvTranspose, name, p, from);
  }

  int asym_conv5(const std::string& name, int from, std::size_t out_channels) {
    ConvParams p{.kernel_h = 5, .kernel_w = 5, .pad_h = 2, .pad_w = 2, .out_channels = out_channels};
    return add_weighted(NodeKind::AsymConv5, name, p, from);
  }

  int batchnorm(const std::string& name, int from) {
    return add_weighted(NodeKind::BatchNorm, name, BatchNormAttrs{}, from);
  }

  int prelu(const std::string& name, int from) { return add_weighted(NodeKind::PReLU, name, {}, from); }

  int maxpool(const std::string& name, int from) { return add_plain(NodeKind::MaxPool, name, {}, {from}); }

  int unpool(const std::string& name, int from, int pool) {
    NodeSpec n = make(NodeKind::MaxUnpool, name, {}, {from});
    n.index_link = pool;
    return append(std::move(n));
  }

  int add(const std::string& name, int a, int b) { return add_plain(NodeKind::Add, name, {}, {a, b}); }

  int concat(const std::string& name, int a, int b) {
    return add_plain(NodeKind::ConcatChannels, name, {}, {a, b});
  }

  int pad(const std::string& name, int from, std::size_t target) {
    return add_plain(NodeKind::PadChannels, name, PadAttrs{target}, {from});
  }

  int dropout(const std::string& name, int from, float rate) {
    return add_plain(NodeKind::Dropout, name, DropoutAttrs{rate}, {from});
  }

  Graph finish(int from) && {
    module_.clear();
    stage_ = -1;
    add_plain(NodeKind::Output, "output", {}, {from});
    return Graph(std::move(nodes_), input_shape_, num_classes_);
  }

 private:
  NodeSpec make(NodeKind k, const std::string& name, NodeAttrs attrs, std::vector<int> inputs) const {
    NodeSpec n;
    n.kind = k;
    n.name = module_.empty() ? name : module_ + "." + name;
    n.module = module_;
    n.stage = stage_;
    n.attrs = std::move(attrs);
    n.inputs = std::move(inputs);
    return n;
  }

  int add_plain(NodeKind k, const std::string& name, NodeAttrs attrs, std::vector<int> inputs) {
    return append(make(k, name, std::move(attrs), std::move(inputs)));
  }

  int add_weighted(NodeKind k, const std::string& name, NodeAttrs attrs, int from) {
    NodeSpec n = make(k, name, std::move(attrs), {from});
    for (const auto& spec : weight_specs(n, shapes_.at(from))) n.weight_refs[spec.role] = n.name + "." + spec.role;
    return append(std::move(n));
  }

  int append(NodeSpec n) {
    n.id = static_cast<int>(nodes_.size());
    Graph view;  // only unpools resolve index_link through the graph
    if (n.kind == NodeKind::MaxUnpool) {
      view = Graph(nodes_, input_shape_, num_classes_);
    }
    try {
      shapes_[n.id] = infer_node_shape(view, n, shapes_, input_shape_);
    } catch (const Error& e) {
      throw BuildError(std::string("cannot add ") + n.name + ": " + e.what());
    }
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  Shape input_shape_;
  std::size_t num_classes_;
  std::vector<NodeSpec> nodes_;
  ShapeMap shapes_;
  std::string module_;
  int stage_ = -1;
};

// ---------------------------------------------------------------------------
// Architecture

enum class BottleneckType { Regular, Downsampling, Upsampling, Dilated, Asymmetric5 };

struct BottleneckKind {
  BottleneckType type = BottleneckType::Regular;
  std::size_t rate = 1;

  static BottleneckKind regular() { return {BottleneckType::Regular, 1}; }
  static BottleneckKind downsampling() { return {BottleneckType::Downsampling, 1}; }
  static BottleneckKind upsampling() { return {BottleneckType::Upsampling, 1}; }
  static BottleneckKind asymmetric5() { return {BottleneckType::Asymmetric5, 1}; }
  static BottleneckKind dilated(std::size_t r) {
    if (r != 2 && r != 4 && r != 8 && r != 16) {
      throw BuildError("dilation rate " + std::to_string(r) + " not in {2, 4, 8, 16}");
    }
    return {BottleneckType::Dilated, r};
  }

  bool operator==(const BottleneckKind&) const = default;
};

struct BottleneckOptions {
  float dropout_rate = 0.1f;
  // MaxPool node whose indices an Upsampling bottleneck unpools with.
  std::optional<int> unpool_source;
};

struct BottleneckNodes {
  int output = -1;
  // MaxPool of a Downsampling bottleneck's main branch.
  std::optional<int> pool;
};

/// Initial block: 3x3 stride-2 conv (3 -> 13) beside a 2x2 max pool of the
/// input, concatenated to 16 channels, then BatchNorm and PReLU.
inline int build_initial_block(GraphBuilder& b, int from) {
  const Shape& in = b.shape(from);
  if (in.channels != 3) throw BuildError("initial block needs 3 input channels, got " + std::to_string(in.channels));
  if (in.height % 2 || in.width % 2) throw BuildError("initial block needs even input height and width");
  b.set_module("initial", 0);
  const int conv = b.conv("conv", from, {.kernel_h = 3, .kernel_w = 3, .stride = 2, .pad_h = 1, .pad_w = 1,
                                         .out_channels = 13});
  const int pool = b.maxpool("pool", from);
  const int cat = b.concat("concat", conv, pool);
  const int bn = b.batchnorm("bn", cat);
  return b.prelu("prelu", bn);
}

/// Residual bottleneck. The extension branch is projection -> main conv ->
/// expansion with internal width out_ch / 4; the main branch is identity,
/// pool + zero channel padding (downsampling), or 1x1 conv + unpool
/// (upsampling). Branches merge by Add followed by PReLU.
inline BottleneckNodes build_bottleneck(GraphBuilder& b, int from, BottleneckKind kind, std::size_t in_ch,
                                        std::size_t out_ch, const std::string& module, int stage,
                                        const BottleneckOptions& opt = {}) {
  const bool down = kind.type == BottleneckType::Downsampling;
  const bool up = kind.type == BottleneckType::Upsampling;
  if (out_ch == 0 || out_ch % 4 != 0) {
    throw BuildError(module + ": output channels " + std::to_string(out_ch) + " not divisible by 4");
  }
  if (!down && !up && in_ch != out_ch) {
    throw BuildError(module + ": non-resampling bottleneck must keep its channel count");
  }
  if (b.shape(from).channels != in_ch) {
    throw BuildError(module + ": input has " + std::to_string(b.shape(from).channels) + " channels, expected " +
                     std::to_string(in_ch));
  }
  if (up && !opt.unpool_source) throw BuildError(module + ": upsampling bottleneck needs an unpool source");
  const std::size_t mid = out_ch / 4;
  b.set_module(module, stage);

  BottleneckNodes result;
  int main = from;
  if (down) {
    const int pool = b.maxpool("main.pool", from);
    result.pool = pool;
    main = b.pad("main.pad", pool, out_ch);
  } else if (up) {
    const int conv = b.conv("main.conv", from, {.out_channels = out_ch});
    const int bn = b.batchnorm("main.bn", conv);
    main = b.unpool("main.unpool", bn, *opt.unpool_source);
  }

  int x = down ? b.conv("ext.proj.conv", from, {.kernel_h = 2, .kernel_w = 2, .stride = 2, .out_channels = mid})
               : b.conv("ext.proj.conv", from, {.out_channels = mid});
  x = b.batchnorm("ext.proj.bn", x);
  x = b.prelu("ext.proj.prelu", x);

  switch (kind.type) {
    case BottleneckType::Upsampling:
      x = b.conv_transpose("ext.main.conv", x, {.kernel_h = 3, .kernel_w = 3, .stride = 2, .pad_h = 1, .pad_w = 1,
                                                .out_channels = mid, .output_padding = 1});
      break;
    case BottleneckType::Asymmetric5:
      x = b.asym_conv5("ext.main.conv", x, mid);
      break;
    case BottleneckType::Dilated:
      x = b.conv("ext.main.conv", x, {.kernel_h = 3, .kernel_w = 3, .pad_h = kind.rate, .pad_w = kind.rate,
                                      .dilation = kind.rate, .out_channels = mid});
      break;
    default:
      x = b.conv("ext.main.conv", x, {.kernel_h = 3, .kernel_w = 3, .pad_h = 1, .pad_w = 1, .out_channels = mid});
      break;
  }
  x = b.batchnorm("ext.main.bn", x);
  x = b.prelu("ext.main.prelu", x);

  x = b.conv("ext.expand.conv", x, {.out_channels = out_ch});
  x = b.batchnorm("ext.expand.bn", x);
  x = b.dropout("ext.dropout", x, opt.dropout_rate);

  const int sum = b.add("add", main, x);
  result.output = b.prelu("prelu", sum);
  return result;
}

/// Full network: initial block, stages 1-5 and a 2x2 stride-2 transposed
/// convolution to `num_classes` maps at input resolution.
inline Graph build_enet(std::size_t num_classes, std::size_t input_h, std::size_t input_w) {
  if (num_classes < 2) throw BuildError("need at least 2 classes");
  if (input_h == 0 || input_w == 0 || input_h % 8 != 0 || input_w % 8 != 0) {
    throw BuildError("input height and width must be divisible by 8, got " + std::to_string(input_h) + "x" +
                     std::to_string(input_w));
  }
  GraphBuilder b({3, input_h, input_w}, num_classes);
  int x = build_initial_block(b, b.input());

  auto name = [](int stage, int index) { return "bottleneck" + std::to_string(stage) + "." + std::to_string(index); };

  const auto b10 = build_bottleneck(b, x, BottleneckKind::downsampling(), 16, 64, name(1, 0), 1, {0.01f, {}});
  x = b10.output;
  for (int i = 1; i <= 4; ++i) x = build_bottleneck(b, x, BottleneckKind::regular(), 64, 64, name(1, i), 1, {0.01f, {}}).output;

  const auto b20 = build_bottleneck(b, x, BottleneckKind::downsampling(), 64, 128, name(2, 0), 2);
  x = b20.output;
  const BottleneckKind section[] = {BottleneckKind::regular(),     BottleneckKind::dilated(2),
                                    BottleneckKind::asymmetric5(), BottleneckKind::dilated(4),
                                    BottleneckKind::regular(),     BottleneckKind::dilated(8),
                                    BottleneckKind::asymmetric5(), BottleneckKind::dilated(16)};
  for (int stage = 2; stage <= 3; ++stage) {
    for (int i = 0; i < 8; ++i) x = build_bottleneck(b, x, section[i], 128, 128, name(stage, i + 1), stage).output;
  }

  x = build_bottleneck(b, x, BottleneckKind::upsampling(), 128, 64, name(4, 0), 4, {0.1f, b20.pool}).output;
  for (int i = 1; i <= 2; ++i) x = build_bottleneck(b, x, BottleneckKind::regular(), 64, 64, name(4, i), 4).output;

  x = build_bottleneck(b, x, BottleneckKind::upsampling(), 64, 16, name(5, 0), 5, {0.1f, b10.pool}).output;
  x = build_bottleneck(b, x, BottleneckKind::regular(), 16, 16, name(5, 1), 5).output;

  b.set_module("fullconv", 6);
  x = b.conv_transpose("conv", x, {.kernel_h = 2, .kernel_w = 2, .stride = 2, .out_channels = num_classes,
                                   .has_bias = true});
  return std::move(b).finish(x);
}

// ---------------------------------------------------------------------------
// Weights

namespace detail {

// Uniform in [0, 1) from the top 53 bits; stable across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Deterministic weights: convolution kernels uniform with zero mean and
/// standard deviation 1/sqrt(fan_in); biases 0; BatchNorm gamma 1, beta 0,
/// mean 0, var 1; PReLU slopes 0.25.
inline WeightStore init_weights(const Graph& g, std::uint64_t seed) {
  const ShapeMap shapes = infer_shapes(g);
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const auto& n : g.nodes()) {
    if (n.inputs.empty()) continue;
    for (const auto& spec : weight_specs(n, shapes.at(n.inputs[0]))) {
      NdArray arr(spec.dims);
      const std::string& role = spec.role;
      if (role == "weight" || role == "weight_5x1" || role == "weight_1x5") {
        const std::size_t fan_in = arr.size() / (n.kind == NodeKind::ConvTranspose ? spec.dims[1] : spec.dims[0]);
        const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
        for (float& v : arr.data()) v = static_cast<float>((2.0 * detail::unit_uniform(rng) - 1.0) * bound);
      } else if (role == "gamma" || role == "var") {
        for (float& v : arr.data()) v = 1.0f;
      } else if (role == "slope") {
        for (float& v : arr.data()) v = 0.25f;
      }
      store[n.weight_refs.at(role)] = std::move(arr);
    }
  }
  return store;
}

// ---------------------------------------------------------------------------
// Text dump

inline void write_graph_text(std::ostream& os, const Graph& g) {
  os << "# enet graph: input " << g.input_shape().str() << ", classes " << g.num_classes() << ", "
     << g.size() << " nodes\n";
  const ShapeMap shapes = infer_shapes(g);
  for (const auto& n : g.nodes()) {
    os << n.id << " " << to_string(n.kind) << " " << n.name << " in=[";
    for (std::size_t i = 0; i < n.inputs.size(); ++i) os << (i ? "," : "") << n.inputs[i];
    os << "]";
    if (const auto* p = std::get_if<ConvParams>(&n.attrs)) {
      os << " k=" << p->kernel_h << "x" << p->kernel_w << " s=" << p->stride << " p=" << p->pad_h << "," << p->pad_w
         << " d=" << p->dilation << " bias=" << (p->has_bias ? 1 : 0);
      if (p->output_padding) os << " op=" << p->output_padding;
    } else if (const auto* d = std::get_if<DropoutAttrs>(&n.attrs)) {
      os << " p=" << d->rate;
    }
    if (n.index_link) os << " indices=" << *n.index_link;
    os << " -> " << shapes.at(n.id).str() << "\n";
  }
}

}  // namespace enet
