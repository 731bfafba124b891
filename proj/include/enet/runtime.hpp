#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "enet/error.hpp"
#include "enet/graph.hpp"
#include "enet/kernels.hpp"
#include "enet/passes.hpp"
#include "enet/tensor.hpp"

namespace enet {

enum class BufferKind { Values, Indices };

struct BufferSlot {
  BufferKind kind = BufferKind::Values;
  std::size_t bytes = 0;
};

/// Liveness-based buffer assignment over the graph's storage order.
/// A value lives from its producer to its last consumer inclusive; pool
/// indices live until the unpool that consumes them.
struct ExecutionPlan {
  Shape input;
  std::vector<int> order;
  std::map<int, std::size_t> value_slot;  // node id -> slot
  std::map<int, std::size_t> index_slot;  // MaxPool id -> slot
  std::vector<BufferSlot> slots;
  std::set<int> retained;                 // MaxPools whose indices feed an unpool
  std::size_t peak_bytes = 0;
  std::size_t no_reuse_bytes = 0;

  // Position after which each buffer may be released.
  std::map<int, std::size_t> value_last_use;
  std::map<int, std::size_t> index_last_use;
};

namespace detail {

struct Interval {
  int owner;
  BufferKind kind;
  std::size_t start;
  std::size_t end;
  std::size_t bytes;
};

}  // namespace detail

/// Greedy first-fit slot reuse; deterministic for a given graph.
inline ExecutionPlan plan_buffers(const Graph& g, const Shape& input) {
  const ShapeMap shapes = infer_shapes(g, input);
  ExecutionPlan plan;
  plan.input = input;
  const std::size_t n = g.size();
  for (const auto& node : g.nodes()) plan.order.push_back(node.id);

  std::map<int, std::size_t> last_use;
  std::map<int, std::size_t> index_use;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes()[i];
    last_use[node.id] = node.kind == NodeKind::Output ? n : i;
    for (int in : node.inputs) last_use[in] = std::max(last_use[in], i);
    if (node.kind == NodeKind::MaxPool) index_use.emplace(node.id, i);
    if (node.kind == NodeKind::MaxUnpool && node.index_link) {
      index_use[*node.index_link] = std::max(index_use[*node.index_link], i);
      plan.retained.insert(*node.index_link);
    }
  }

  std::vector<detail::Interval> intervals;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes()[i];
    const std::size_t elems = shapes.at(node.id).elements();
    intervals.push_back({node.id, BufferKind::Values, i, last_use[node.id], elems * sizeof(float)});
    if (node.kind == NodeKind::MaxPool) {
      intervals.push_back({node.id, BufferKind::Indices, i, index_use[node.id], elems * sizeof(std::int32_t)});
    }
  }

  std::vector<std::size_t> busy_until;  // per slot, last position it is occupied
  for (const auto& iv : intervals) {
    plan.no_reuse_bytes += iv.bytes;
    std::size_t chosen = plan.slots.size();
    for (std::size_t s = 0; s < plan.slots.size(); ++s) {
      if (plan.slots[s].kind == iv.kind && busy_until[s] < iv.start) {
        chosen = s;
        break;
      }
    }
    if (chosen == plan.slots.size()) {
      plan.slots.push_back({iv.kind, 0});
      busy_until.push_back(0);
    }
    plan.slots[chosen].bytes = std::max(plan.slots[chosen].bytes, iv.bytes);
    busy_until[chosen] = iv.end;
    if (iv.kind == BufferKind::Values) {
      plan.value_slot[iv.owner] = chosen;
      plan.value_last_use[iv.owner] = iv.end;
    } else {
      plan.index_slot[iv.owner] = chosen;
      plan.index_last_use[iv.owner] = iv.end;
    }
  }
  for (const auto& s : plan.slots) plan.peak_bytes += s.bytes;
  return plan;
}

#ifdef NDEBUG
inline constexpr bool kPoisonReleasedSlots = false;
#else
inline constexpr bool kPoisonReleasedSlots = true;
#endif

/// Runs a graph. Owns its scratch buffers, so use one executor per thread;
/// the graph and weights must outlive it and may be shared.
///
/// With a plan, released slots can be poisoned (NaN values, -1 indices) so a
/// read of a dead buffer surfaces as NaN output or a corrupt-index error.
class Executor {
 public:
  Executor(const Graph& g, const WeightStore& w, std::optional<ExecutionPlan> plan = std::nullopt,
           bool poison_released = kPoisonReleasedSlots)
      : graph_(g), plan_(std::move(plan)), poison_(poison_released) {
    const auto diags = validate(g, w);
    if (!diags.empty()) {
      throw ExecutionError(diags.front().node_id, "graph does not validate: " + diags.front().message);
    }
    shapes_ = infer_shapes(g);
    if (plan_ && plan_->input != g.input_shape()) {
      throw ExecutionError(-1, "plan was made for input " + plan_->input.str());
    }
    bind(w);
    output_pos_ = g.position(g.find_kind(NodeKind::Output));
    if (plan_) {
      slot_values_.resize(plan_->slots.size());
      slot_indices_.resize(plan_->slots.size());
      slot_owner_.assign(plan_->slots.size(), -1);
    }
  }

  const Graph& graph() const { return graph_; }
  const std::optional<ExecutionPlan>& plan() const { return plan_; }

  Tensor run(const Tensor& input) {
    if (input.shape() != graph_.input_shape()) {
      throw ExecutionError(graph_.nodes().front().id, "input shape " + input.shape().str() + " does not match graph input " +
                               graph_.input_shape().str());
    }
    if (!plan_) {
      values_.assign(graph_.size(), Tensor());
      indices_.clear();
    }
    for (std::size_t i = 0; i < graph_.size(); ++i) {
      step(i, input);
      if (plan_) release_after(i);
    }
    if (plan_) return read_value(graph_.nodes()[output_pos_].id);
    return std::move(values_[output_pos_]);
  }

 private:
  struct Bound {
    std::vector<const NdArray*> w;  // role order as in weight_specs
    BnParams bn;
  };

  void bind(const WeightStore& store) {
    for (const auto& n : graph_.nodes()) {
      Bound b;
      if (!n.inputs.empty()) {
        for (const auto& spec : weight_specs(n, shapes_.at(n.inputs[0]))) {
          auto it = store.find(n.weight_refs.at(spec.role));
          if (it == store.end()) throw ExecutionError(n.id, "missing weight for role " + spec.role);
          b.w.push_back(&it->second);
        }
      }
      if (n.kind == NodeKind::BatchNorm) {
        auto vec = [](const NdArray* a) { return std::vector<float>(a->data().begin(), a->data().end()); };
        b.bn = {vec(b.w[0]), vec(b.w[1]), vec(b.w[2]), vec(b.w[3]), std::get<BatchNormAttrs>(n.attrs).epsilon};
      }
      bound_.push_back(std::move(b));
    }
  }

  static std::span<const float> bias_of(const Bound& b, std::size_t role_index) {
    return b.w.size() > role_index ? b.w[role_index]->data() : std::span<const float>{};
  }

  const Tensor& read_value(int id) {
    if (!plan_) return values_[graph_.position(id)];
    const std::size_t s = plan_->value_slot.at(id);
    if (slot_owner_[s] != id) {
      throw std::logic_error("node " + std::to_string(id) + " read from a slot owned by " +
                             std::to_string(slot_owner_[s]));
    }
    return slot_values_[s];
  }

  const IndexTensor& read_indices(int pool) {
    if (!plan_) return indices_.at(pool);
    const std::size_t s = plan_->index_slot.at(pool);
    if (slot_owner_[s] != pool) {
      throw std::logic_error("pool indices of node " + std::to_string(pool) + " were released before use");
    }
    return slot_indices_[s];
  }

  Tensor& write_value(int id) {
    if (!plan_) return values_[graph_.position(id)];
    const std::size_t s = plan_->value_slot.at(id);
    slot_owner_[s] = id;
    return slot_values_[s];
  }

  IndexTensor& write_indices(int pool) {
    if (!plan_) return indices_[pool];
    const std::size_t s = plan_->index_slot.at(pool);
    slot_owner_[s] = pool;
    return slot_indices_[s];
  }

  void release_after(std::size_t pos) {
    for (const auto& [id, last] : plan_->value_last_use) {
      if (last != pos) continue;
      const std::size_t s = plan_->value_slot.at(id);
      if (slot_owner_[s] != id) continue;
      slot_owner_[s] = -1;
      if (poison_) slot_values_[s].fill(std::numeric_limits<float>::quiet_NaN());
    }
    for (const auto& [id, last] : plan_->index_last_use) {
      if (last != pos) continue;
      const std::size_t s = plan_->index_slot.at(id);
      if (slot_owner_[s] != id) continue;
      slot_owner_[s] = -1;
      if (poison_) slot_indices_[s].fill(-1);
    }
  }

  void step(std::size_t i, const Tensor& input) {
    const NodeSpec& n = graph_.nodes()[i];
    const Bound& b = bound_[i];
    try {
      switch (n.kind) {
        case NodeKind::Input: {
          Tensor& out = write_value(n.id);
          out.reset(input.shape());
          std::copy(input.data().begin(), input.data().end(), out.data().begin());
          break;
        }
        case NodeKind::Output:
        case NodeKind::Dropout:
          spatial_dropout_infer(read_value(n.inputs[0]), write_value(n.id));
          break;
        case NodeKind::Conv:
          conv2d(read_value(n.inputs[0]), *b.w[0], bias_of(b, 1), n.conv(), write_value(n.id));
          break;
        case NodeKind::ConvTranspose: {
          const auto& p = n.conv();
          conv_transpose2d(read_value(n.inputs[0]), *b.w[0], bias_of(b, 1), p.stride, p.pad_h, write_value(n.id),
                           p.output_padding);
          break;
        }
        case NodeKind::AsymConv5:
          conv_asymmetric5(read_value(n.inputs[0]), *b.w[0], *b.w[1], bias_of(b, 2), write_value(n.id), scratch_);
          break;
        case NodeKind::MaxPool:
          maxpool2x2(read_value(n.inputs[0]), write_value(n.id), write_indices(n.id));
          break;
        case NodeKind::MaxUnpool: {
          const Shape& s = shapes_.at(n.id);
          max_unpool2x2(read_value(n.inputs[0]), read_indices(*n.index_link), s.height, s.width, write_value(n.id));
          break;
        }
        case NodeKind::BatchNorm:
          batchnorm_infer(read_value(n.inputs[0]), b.bn, write_value(n.id));
          break;
        case NodeKind::PReLU:
          prelu(read_value(n.inputs[0]), b.w[0]->data(), write_value(n.id));
          break;
        case NodeKind::Add:
          add(read_value(n.inputs[0]), read_value(n.inputs[1]), write_value(n.id));
          break;
        case NodeKind::ConcatChannels:
          concat_channels(read_value(n.inputs[0]), read_value(n.inputs[1]), write_value(n.id));
          break;
        case NodeKind::PadChannels:
          pad_channels(read_value(n.inputs[0]), std::get<PadAttrs>(n.attrs).target_channels, write_value(n.id));
          break;
      }
    } catch (const NodeError&) {
      throw;
    } catch (const Error& e) {
      throw ExecutionError(n.id, n.name + ": " + e.what());
    }
  }

  const Graph& graph_;
  std::optional<ExecutionPlan> plan_;
  bool poison_;
  std::size_t output_pos_ = 0;
  ShapeMap shapes_;
  std::vector<Bound> bound_;

  // unplanned: one value per node, indices per pool
  std::vector<Tensor> values_;
  std::map<int, IndexTensor> indices_;

  // planned: shared slots
  std::vector<Tensor> slot_values_;
  std::vector<IndexTensor> slot_indices_;
  std::vector<int> slot_owner_;

  Tensor scratch_;
};

/// One-shot execution; pass a plan to run with buffer reuse.
inline Tensor execute(const Graph& g, const WeightStore& w, const Tensor& input,
                      std::optional<ExecutionPlan> plan = std::nullopt) {
  Executor ex(g, w, std::move(plan));
  return ex.run(input);
}

/// Per-pixel index of the largest logit; ties go to the smallest class.
inline LabelMap argmax_labels(const Tensor& logits) {
  const Shape& s = logits.shape();
  LabelMap m{s.height, s.width, std::vector<std::uint32_t>(s.plane(), 0)};
  std::vector<float> best(logits.plane(0).begin(), logits.plane(0).end());
  for (std::size_t c = 1; c < s.channels; ++c) {
    const auto p = logits.plane(c);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > best[k]) {
        best[k] = p[k];
        m.labels[k] = static_cast<std::uint32_t>(c);
      }
    }
  }
  return m;
}

/// Fixed pseudo-random tensor with values uniform in [0, 1).
inline Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(detail::unit_uniform(rng));
  return t;
}

struct BenchResult {
  Shape resolution;
  std::size_t warmup = 0;
  std::size_t iterations = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double fps = 0.0;
};

/// Times execute() only (no I/O, weight loading or argmax) on a fixed random
/// input. Standard deviation is the population form, so one iteration gives 0.
inline BenchResult benchmark(const Graph& g, const WeightStore& w, const Shape& input, std::size_t warmup,
                             std::size_t iters, std::uint64_t seed = 7) {
  if (iters < 1) throw DomainError("benchmark needs at least one timed iteration");
  if (input != g.input_shape()) throw ShapeError("benchmark input " + input.str() + " does not match graph");
  Executor ex(g, w, plan_buffers(g, input));
  const Tensor x = random_tensor(input, seed);
  for (std::size_t i = 0; i < warmup; ++i) ex.run(x);
  std::vector<double> ms;
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor y = ex.run(x);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchResult r{input, warmup, iters};
  for (double v : ms) r.mean_ms += v;
  r.mean_ms /= static_cast<double>(iters);
  for (double v : ms) r.stddev_ms += (v - r.mean_ms) * (v - r.mean_ms);
  r.stddev_ms = std::sqrt(r.stddev_ms / static_cast<double>(iters));
  r.fps = r.mean_ms > 0.0 ? 1000.0 / r.mean_ms : std::numeric_limits<double>::infinity();
  return r;
}

}  // namespace enet
