#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "enet/enwt.hpp"
#include "enet/error.hpp"
#include "enet/graph.hpp"

namespace enet {

enum class FlopConvention {
  FMA2,  // one multiply-accumulate = 2 FLOPs
  MAC,   // one multiply-accumulate = 1 FLOP
};

inline std::uint64_t flops_per_mac(FlopConvention c) { return c == FlopConvention::FMA2 ? 2 : 1; }

struct NodeCost {
  int node_id = -1;
  std::string name;
  NodeKind kind = NodeKind::Input;
  int stage = -1;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  std::uint64_t activation_bytes = 0;
};

struct StageCost {
  int stage = -1;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

struct CostReport {
  FlopConvention convention = FlopConvention::FMA2;
  Shape input;
  std::vector<NodeCost> nodes;
  std::uint64_t total_macs = 0;
  std::uint64_t total_flops = 0;
  std::uint64_t total_params = 0;
  std::uint64_t fp16_bytes = 0;

  /// Per-stage sums in stage order (initial, stage1..5, fullconv).
  std::vector<StageCost> stages() const {
    std::map<int, StageCost> by;
    for (const auto& n : nodes) {
      if (n.stage < 0) continue;
      auto& s = by[n.stage];
      s.stage = n.stage;
      s.macs += n.macs;
      s.params += n.params;
    }
    std::vector<StageCost> out;
    for (const auto& [k, v] : by) out.push_back(v);
    return out;
  }
};

namespace detail {

inline std::uint64_t node_params(const NodeSpec& n, const Shape& in) {
  std::uint64_t p = 0;
  for (const auto& spec : weight_specs(n, in)) p += NdArray::count(spec.dims);
  return p;
}

// Multiply-accumulates of one node. Transposed convolutions cost the same as
// the forward convolution they are the adjoint of.
inline std::uint64_t node_macs(const NodeSpec& n, const Shape& in, const Shape& out) {
  switch (n.kind) {
    case NodeKind::Conv: {
      const auto& p = n.conv();
      return std::uint64_t{out.elements()} * in.channels * p.kernel_h * p.kernel_w;
    }
    case NodeKind::AsymConv5:
      return std::uint64_t{out.elements()} * in.channels * 5 + std::uint64_t{out.elements()} * out.channels * 5;
    case NodeKind::ConvTranspose: {
      const auto& p = n.conv();
      return std::uint64_t{in.elements()} * out.channels * p.kernel_h * p.kernel_w;
    }
    case NodeKind::BatchNorm:
    case NodeKind::PReLU:
    case NodeKind::Add:
    case NodeKind::MaxPool:
    case NodeKind::MaxUnpool:
      return out.elements();
    default:
      return 0;
  }
}

}  // namespace detail

/// Total weight elements: kernels, biases, BatchNorm's four vectors and
/// PReLU slopes. Independent of input resolution.
inline std::uint64_t count_params(const Graph& g) {
  const ShapeMap shapes = infer_shapes(g);
  std::uint64_t total = 0;
  for (const auto& n : g.nodes()) {
    if (!n.inputs.empty()) total += detail::node_params(n, shapes.at(n.inputs[0]));
  }
  return total;
}

inline CostReport count_flops(const Graph& g, const Shape& input, FlopConvention conv = FlopConvention::FMA2) {
  ShapeMap shapes;
  try {
    shapes = infer_shapes(g, input);
  } catch (const NodeError& e) {
    throw ShapeError(std::string("input ") + input.str() + " incompatible with graph: " + e.what());
  }
  CostReport r;
  r.convention = conv;
  r.input = input;
  for (const auto& n : g.nodes()) {
    NodeCost c;
    c.node_id = n.id;
    c.name = n.name;
    c.kind = n.kind;
    c.stage = n.stage;
    const Shape& out = shapes.at(n.id);
    if (!n.inputs.empty()) {
      const Shape& in = shapes.at(n.inputs[0]);
      c.macs = detail::node_macs(n, in, out);
      c.params = detail::node_params(n, in);
    }
    c.activation_bytes = std::uint64_t{out.elements()} * sizeof(float);
    r.total_macs += c.macs;
    r.total_params += c.params;
    r.nodes.push_back(std::move(c));
  }
  r.total_flops = r.total_macs * flops_per_mac(conv);
  r.fp16_bytes = 2 * r.total_params;
  return r;
}

struct ModelSize {
  std::uint64_t payload_bytes = 0;
  // ENWT header plus per-record name/dtype/rank/dims bytes.
  std::uint64_t overhead_bytes = 0;

  std::uint64_t file_bytes() const { return payload_bytes + overhead_bytes; }
};

inline ModelSize model_size_fp16(const Graph& g) {
  const ShapeMap shapes = infer_shapes(g);
  ModelSize s;
  bool any = false;
  for (const auto& n : g.nodes()) {
    if (n.inputs.empty()) continue;
    for (const auto& spec : weight_specs(n, shapes.at(n.inputs[0]))) {
      any = true;
      s.payload_bytes += 2 * NdArray::count(spec.dims);
      s.overhead_bytes += enwt::record_overhead(n.weight_refs.at(spec.role), spec.dims.size());
    }
  }
  if (any) s.overhead_bytes += enwt::kHeaderBytes;
  return s;
}

inline constexpr double kBytesPerMB = 1024.0 * 1024.0;

// ---------------------------------------------------------------------------
// Class weighting

struct ClassHistogram {
  std::vector<std::string> labels;
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  std::vector<double> probabilities() const {
    const double t = static_cast<double>(total());
    std::vector<double> p;
    for (auto c : counts) p.push_back(static_cast<double>(c) / t);
    return p;
  }
};

/// w = 1 / ln(c + p); bounded in (1/ln(c+1), 1/ln(c)] for c > 1.
inline double class_weight(double p, double c) {
  if (!(c > 1.0)) throw DomainError("class-weight constant c must exceed 1, got " + std::to_string(c));
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("class probability must lie in [0, 1]");
  return 1.0 / std::log(c + p);
}

inline std::vector<double> compute_class_weights(const ClassHistogram& h, double c = 1.02) {
  if (!(c > 1.0)) throw DomainError("class-weight constant c must exceed 1, got " + std::to_string(c));
  if (h.labels.size() != h.counts.size()) throw DomainError("histogram labels and counts differ in length");
  if (h.total() == 0) throw DomainError("histogram total is zero");
  std::vector<double> w;
  for (double p : h.probabilities()) w.push_back(class_weight(p, c));
  return w;
}

/// Parses "label count" lines; '#' starts a comment line. FormatError offsets
/// are 1-based line numbers.
inline ClassHistogram read_histogram(std::istream& is) {
  ClassHistogram h;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string label;
    std::string count_text;
    std::string extra;
    if (!(ls >> label >> count_text) || (ls >> extra)) throw FormatError(lineno, "expected 'label count'");
    std::size_t used = 0;
    unsigned long long count = 0;
    try {
      if (count_text.front() == '-') throw std::invalid_argument("negative");
      count = std::stoull(count_text, &used);
    } catch (const std::exception&) {
      throw FormatError(lineno, "bad pixel count '" + count_text + "'");
    }
    if (used != count_text.size()) throw FormatError(lineno, "bad pixel count '" + count_text + "'");
    h.labels.push_back(label);
    h.counts.push_back(count);
  }
  if (h.labels.empty()) throw FormatError(lineno, "histogram has no entries");
  return h;
}

}  // namespace enet
