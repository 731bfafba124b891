#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "enet/error.hpp"
#include "enet/graph.hpp"

namespace enet {

struct PassReport {
  std::string pass;
  std::size_t nodes_removed = 0;
  std::size_t nodes_rewritten = 0;
};

enum class FoldPolicy {
  Strict,          // any BatchNorm that cannot be folded is a FoldError
  SkipUnfoldable,  // leave such BatchNorms in place
};

struct FoldResult {
  Graph graph;
  WeightStore weights;
  PassReport report;
};

struct ElideResult {
  Graph graph;
  PassReport report;
};

namespace detail {

// Drops `removed` nodes, pointing their consumers at the replacement id.
inline std::vector<NodeSpec> remove_nodes(const Graph& g, const std::map<int, int>& removed) {
  auto resolve = [&](int id) {
    for (auto it = removed.find(id); it != removed.end(); it = removed.find(id)) id = it->second;
    return id;
  };
  std::vector<NodeSpec> out;
  out.reserve(g.size());
  for (const auto& n : g.nodes()) {
    if (removed.count(n.id)) continue;
    NodeSpec copy = n;
    for (int& in : copy.inputs) in = resolve(in);
    out.push_back(std::move(copy));
  }
  return out;
}

inline std::size_t output_axis(NodeKind k) { return k == NodeKind::ConvTranspose ? 1 : 0; }

// Multiplies every slice of a rank-4 kernel along `axis` (0 or 1) by scale[o].
inline void scale_kernel(NdArray& w, std::size_t axis, const std::vector<float>& scale) {
  const auto& d = w.dims();
  for (std::size_t a = 0; a < d[0]; ++a) {
    for (std::size_t b = 0; b < d[1]; ++b) {
      const float s = scale[axis == 0 ? a : b];
      for (std::size_t i = 0; i < d[2]; ++i) {
        for (std::size_t j = 0; j < d[3]; ++j) w.at(a, b, i, j) *= s;
      }
    }
  }
}

inline const NdArray& lookup(const WeightStore& w, const NodeSpec& n, const std::string& role) {
  auto ref = n.weight_refs.find(role);
  if (ref == n.weight_refs.end()) throw FoldError(n.id, "missing weight reference '" + role + "'");
  auto it = w.find(ref->second);
  if (it == w.end()) throw FoldError(n.id, "weight '" + ref->second + "' not found");
  return it->second;
}

}  // namespace detail

/// Folds each inference-mode BatchNorm into the convolution feeding it:
/// W' = W * gamma / sqrt(var + eps) per output channel and
/// b' = gamma * (b - mean) / sqrt(var + eps) + beta. The folded conv gains a
/// bias; BatchNorm nodes and their weights are removed.
inline FoldResult fold_batchnorm(const Graph& g, const WeightStore& w, FoldPolicy policy = FoldPolicy::Strict) {
  WeightStore store = w;
  std::vector<NodeSpec> nodes = g.nodes();
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < nodes.size(); ++i) pos[nodes[i].id] = i;

  std::map<int, int> removed;
  std::set<int> rewritten;
  for (const auto& bn : g.nodes()) {
    if (bn.kind != NodeKind::BatchNorm) continue;
    auto refuse = [&](const std::string& why) {
      if (policy == FoldPolicy::Strict) throw FoldError(bn.id, why);
    };
    if (bn.inputs.size() != 1 || !g.contains(bn.inputs[0])) {
      refuse("BatchNorm " + bn.name + " has no single producer");
      continue;
    }
    const NodeSpec& src = g.node(bn.inputs[0]);
    if (src.kind != NodeKind::Conv && src.kind != NodeKind::ConvTranspose && src.kind != NodeKind::AsymConv5) {
      refuse("BatchNorm " + bn.name + " is not preceded by a convolution");
      continue;
    }
    if (g.consumers(src.id).size() != 1) {
      refuse("convolution " + src.name + " feeding " + bn.name + " has multiple consumers");
      continue;
    }

    const auto& gamma = detail::lookup(w, bn, "gamma");
    const auto& beta = detail::lookup(w, bn, "beta");
    const auto& mean = detail::lookup(w, bn, "mean");
    const auto& var = detail::lookup(w, bn, "var");
    const float eps = std::get<BatchNormAttrs>(bn.attrs).epsilon;
    const std::size_t ch = gamma.size();

    NodeSpec& conv = nodes[pos.at(src.id)];
    ConvParams p = conv.conv();
    if (p.out_channels != ch) throw FoldError(bn.id, "channel count differs from its convolution");

    std::vector<float> scale(ch);
    for (std::size_t c = 0; c < ch; ++c) scale[c] = gamma[c] / std::sqrt(var[c] + eps);

    const std::string kernel_role = conv.kind == NodeKind::AsymConv5 ? "weight_1x5" : "weight";
    NdArray& kernel = store.at(conv.weight_refs.at(kernel_role));
    detail::scale_kernel(kernel, detail::output_axis(conv.kind), scale);

    std::vector<float> old_bias(ch, 0.0f);
    if (p.has_bias) {
      const auto& b = store.at(conv.weight_refs.at("bias"));
      old_bias.assign(b.data().begin(), b.data().end());
    }
    NdArray bias({ch});
    for (std::size_t c = 0; c < ch; ++c) bias[c] = scale[c] * (old_bias[c] - mean[c]) + beta[c];
    const std::string bias_key = p.has_bias ? conv.weight_refs.at("bias") : conv.name + ".bias";
    store[bias_key] = std::move(bias);
    conv.weight_refs["bias"] = bias_key;
    p.has_bias = true;
    conv.attrs = p;

    for (const auto& [role, key] : bn.weight_refs) store.erase(key);
    removed[bn.id] = src.id;
    rewritten.insert(src.id);
  }

  Graph folded(detail::remove_nodes(Graph(std::move(nodes), g.input_shape(), g.num_classes()), removed),
               g.input_shape(), g.num_classes());
  return {std::move(folded), std::move(store), {"fold_batchnorm", removed.size(), rewritten.size()}};
}

/// Removes every Dropout node (identity at inference), rewiring consumers.
inline ElideResult elide_dropout(const Graph& g) {
  std::map<int, int> removed;
  for (const auto& n : g.nodes()) {
    if (n.kind == NodeKind::Dropout && n.inputs.size() == 1) removed[n.id] = n.inputs[0];
  }
  std::set<int> rewired;
  for (const auto& n : g.nodes()) {
    if (removed.count(n.id)) continue;
    for (int in : n.inputs) {
      if (removed.count(in)) rewired.insert(n.id);
    }
  }
  Graph out(detail::remove_nodes(g, removed), g.input_shape(), g.num_classes());
  return {std::move(out), {"elide_dropout", removed.size(), rewired.size()}};
}

struct OptimizedModel {
  Graph graph;
  WeightStore weights;
  std::vector<PassReport> reports;
};

/// The inference pipeline: BatchNorm folding (skipping BatchNorms that do not
/// follow a convolution) then dropout elision.
inline OptimizedModel optimize_for_inference(const Graph& g, const WeightStore& w) {
  auto folded = fold_batchnorm(g, w, FoldPolicy::SkipUnfoldable);
  auto elided = elide_dropout(folded.graph);
  return {std::move(elided.graph), std::move(folded.weights), {folded.report, elided.report}};
}

// ---------------------------------------------------------------------------
// Validation

struct Diagnostic {
  int node_id = -1;  // -1 for graph-level findings
  std::string message;
};

/// Structural, shape, index-link and weight checks. Empty result means the
/// graph and store can be executed.
inline std::vector<Diagnostic> validate(const Graph& g, const WeightStore& w) {
  std::vector<Diagnostic> out;
  auto report = [&](int id, std::string msg) {
    if (id >= 0) {
      const auto& n = g.node(id);
      msg = "node " + std::to_string(id) + " (" + n.name + "): " + msg;
    }
    out.push_back({id, std::move(msg)});
  };

  if (g.count(NodeKind::Input) != 1) report(-1, "graph must have exactly one Input node");
  if (g.count(NodeKind::Output) != 1) report(-1, "graph must have exactly one Output node");

  std::set<int> seen;
  for (const auto& n : g.nodes()) {
    for (int in : n.inputs) {
      if (!seen.count(in)) report(n.id, "input " + std::to_string(in) + " is not defined before this node");
    }
    if (n.kind == NodeKind::MaxUnpool) {
      if (!n.index_link || !seen.count(*n.index_link)) {
        report(n.id, "unpool index source missing");
      } else if (g.node(*n.index_link).kind != NodeKind::MaxPool) {
        report(n.id, "unpool index source is not a MaxPool");
      }
    } else if (n.index_link) {
      report(n.id, "only MaxUnpool nodes may carry an index link");
    }
    seen.insert(n.id);
  }
  if (!out.empty()) return out;

  ShapeMap shapes;
  for (const auto& n : g.nodes()) {
    try {
      shapes[n.id] = infer_node_shape(g, n, shapes, g.input_shape());
    } catch (const NodeError& e) {
      // upstream failures already reported; skip the cascade
      bool upstream_failed = false;
      for (int in : n.inputs) upstream_failed |= !shapes.count(in);
      if (!upstream_failed) report(n.id, e.what());
      continue;
    }
    if (n.inputs.empty()) continue;
    for (const auto& spec : weight_specs(n, shapes.at(n.inputs[0]))) {
      auto ref = n.weight_refs.find(spec.role);
      if (ref == n.weight_refs.end()) {
        report(n.id, "missing weight reference '" + spec.role + "'");
        continue;
      }
      auto it = w.find(ref->second);
      if (it == w.end()) {
        report(n.id, "weight '" + ref->second + "' not found");
      } else if (it->second.dims() != spec.dims) {
        report(n.id, "weight '" + ref->second + "' has dims " + dims_str(it->second.dims()) + ", expected " +
                         dims_str(spec.dims));
      }
    }
  }
  return out;
}

}  // namespace enet
