#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "enet/analyzer.hpp"
#include "enet/enwt.hpp"
#include "enet/graph.hpp"
#include "enet/passes.hpp"
#include "enet/pnm.hpp"
#include "enet/runtime.hpp"

namespace enet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

namespace detail {

inline void print_cost(std::ostream& out, const Graph& g, const CostReport& r) {
  const auto size = model_size_fp16(g);
  const char* conv = r.convention == FlopConvention::FMA2 ? "fma2" : "mac";
  out << std::fixed;
  out << "input        " << r.input.str() << "\n";
  out << "classes      " << g.num_classes() << "\n";
  out << "parameters   " << r.total_params << " (" << std::setprecision(3) << r.total_params / 1e6 << "M)\n";
  out << "MACs         " << r.total_macs << "\n";
  out << "GFLOPs       " << std::setprecision(3) << r.total_flops / 1e9 << " (" << conv << ")\n";
  out << "fp16 size    " << size.payload_bytes << " bytes (" << std::setprecision(3)
      << size.payload_bytes / kBytesPerMB << " MB) + " << size.overhead_bytes << " bytes ENWT overhead\n";
  out << "\n" << std::left << std::setw(10) << "stage" << std::right << std::setw(16) << "MACs" << std::setw(9)
      << "share" << std::setw(12) << "params" << "\n";
  for (const auto& s : r.stages()) {
    out << std::left << std::setw(10) << stage_label(s.stage) << std::right << std::setw(16) << s.macs
        << std::setw(8) << std::setprecision(1) << 100.0 * static_cast<double>(s.macs) / static_cast<double>(r.total_macs)
        << "%" << std::setw(12) << s.params << "\n";
  }
}

}  // namespace detail

/// Runs one command line. Returns 0 on success, 1 on usage errors and 2 on
/// runtime or format errors; diagnostics go to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ENet inference engine, graph optimizer and cost analyzer", "enet"};
  app.require_subcommand(1);

  std::size_t classes = 19;
  std::size_t height = 512;
  std::size_t width = 512;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string graph_out;
  std::string dtype_name = "f32";
  auto* build = app.add_subcommand("build", "construct ENet, initialize weights and save them");
  build->add_option("--classes", classes, "number of classes")->required()->check(CLI::Range(2, 65535));
  build->add_option("--height", height, "input height")->required();
  build->add_option("--width", width, "input width")->required();
  build->add_option("--seed", seed, "weight initialization seed")->required();
  build->add_option("--out", out_path, "output ENWT file")->required();
  build->add_option("--graph-out", graph_out, "write a text dump of the graph");
  build->add_option("--dtype", dtype_name, "storage type")->check(CLI::IsMember({"f32", "f16"}));

  std::string flops_name = "fma2";
  auto* analyze = app.add_subcommand("analyze", "print parameter, FLOP and model-size budgets");
  analyze->add_option("--classes", classes)->required()->check(CLI::Range(2, 65535));
  analyze->add_option("--height", height)->required();
  analyze->add_option("--width", width)->required();
  analyze->add_option("--flops", flops_name, "FLOP convention")->check(CLI::IsMember({"fma2", "mac"}));

  std::string model;
  std::string image;
  std::string labels_path;
  std::string palette_path;
  std::string color_path;
  bool no_fuse = false;
  auto* infer = app.add_subcommand("infer", "segment a PPM image");
  infer->add_option("--model", model)->required();
  infer->add_option("--classes", classes)->required()->check(CLI::Range(2, 65535));
  infer->add_option("--image", image, "binary P6 input")->required();
  infer->add_option("--labels", labels_path, "P5 label map output")->required();
  auto* palette_opt = infer->add_option("--palette", palette_path, "'index r g b' palette");
  auto* color_opt = infer->add_option("--color", color_path, "P6 colorized output");
  palette_opt->needs(color_opt);
  color_opt->needs(palette_opt);
  infer->add_flag("--no-fuse", no_fuse, "skip BatchNorm folding and dropout elision");

  std::size_t warmup = 1;
  std::size_t iters = 5;
  auto* bench = app.add_subcommand("bench", "time single-frame inference");
  bench->add_option("--model", model)->required();
  bench->add_option("--classes", classes)->required()->check(CLI::Range(2, 65535));
  bench->add_option("--height", height)->required();
  bench->add_option("--width", width)->required();
  bench->add_option("--warmup", warmup)->required();
  bench->add_option("--iters", iters)->required()->check(CLI::PositiveNumber);
  bench->add_flag("--no-fuse", no_fuse, "skip BatchNorm folding and dropout elision");

  std::string hist;
  double c = 1.02;
  auto* weights = app.add_subcommand("class-weights", "class weights 1/ln(c + p) from a pixel histogram");
  weights->add_option("--hist", hist, "'label count' histogram")->required();
  weights->add_option("--c", c, "constant c > 1");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*build) {
      const Graph g = build_enet(classes, height, width);
      const WeightStore w = init_weights(g, seed);
      save_weights(w, dtype_name == "f16" ? DType::F16 : DType::F32, out_path);
      if (!graph_out.empty()) {
        std::ofstream gs(graph_out);
        if (!gs) throw IoError("cannot open " + graph_out + " for writing");
        write_graph_text(gs, g);
      }
      out << "wrote " << w.size() << " tensors (" << total_elements(w) << " parameters) to " << out_path << "\n";
    } else if (*analyze) {
      const Graph g = build_enet(classes, height, width);
      const auto conv = flops_name == "mac" ? FlopConvention::MAC : FlopConvention::FMA2;
      detail::print_cost(out, g, count_flops(g, g.input_shape(), conv));
    } else if (*infer) {
      const Tensor x = load_ppm(image);
      const Graph g = build_enet(classes, x.shape().height, x.shape().width);
      WeightStore w = load_weights(model);
      if (const auto diags = validate(g, w); !diags.empty()) {
        throw Error("model does not match a " + std::to_string(classes) + "-class network: " + diags.front().message);
      }
      Graph run_graph = g;
      if (!no_fuse) {
        auto opt = optimize_for_inference(g, w);
        run_graph = std::move(opt.graph);
        w = std::move(opt.weights);
      }
      const Tensor logits = execute(run_graph, w, x, plan_buffers(run_graph, run_graph.input_shape()));
      const LabelMap labels = argmax_labels(logits);
      if (!palette_path.empty()) save_colormap(labels, load_palette(palette_path), color_path);
      save_labelmap(labels, labels_path);
      out << "segmented " << x.shape().width << "x" << x.shape().height << " image into " << labels_path
          << (no_fuse ? " (unfused)" : " (fused)") << "\n";
    } else if (*bench) {
      const Graph g = build_enet(classes, height, width);
      WeightStore w = load_weights(model);
      if (const auto diags = validate(g, w); !diags.empty()) {
        throw Error("model does not match a " + std::to_string(classes) + "-class network: " + diags.front().message);
      }
      const auto unfused = count_flops(g, g.input_shape(), FlopConvention::MAC);
      Graph run_graph = g;
      if (!no_fuse) {
        auto opt = optimize_for_inference(g, w);
        run_graph = std::move(opt.graph);
        w = std::move(opt.weights);
      }
      const auto fused = count_flops(run_graph, run_graph.input_shape(), FlopConvention::MAC);
      const auto r = benchmark(run_graph, w, run_graph.input_shape(), warmup, iters);
      out << std::fixed << std::setprecision(3);
      out << "resolution   " << width << "x" << height << "\n";
      out << "warmup       " << r.warmup << "\n";
      out << "iterations   " << r.iterations << "\n";
      out << "mean ms      " << r.mean_ms << "\n";
      out << "stddev ms    " << r.stddev_ms << "\n";
      out << "fps          " << r.fps << "\n";
      out << "GMACs        " << fused.total_macs / 1e9 << (no_fuse ? " (unfused)" : " (fused)") << ", unfused "
          << unfused.total_macs / 1e9 << "\n";
      out << "nodes        " << run_graph.size() << ", unfused " << g.size() << "\n";
    } else if (*weights) {
      std::ifstream hs(hist);
      if (!hs) throw IoError("cannot open " + hist);
      const ClassHistogram h = read_histogram(hs);
      const auto ws = compute_class_weights(h, c);
      const auto ps = h.probabilities();
      out << std::fixed;
      for (std::size_t i = 0; i < ws.size(); ++i) {
        out << h.labels[i] << " " << std::setprecision(6) << ps[i] << " " << std::setprecision(4) << ws[i] << "\n";
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace enet::cli
