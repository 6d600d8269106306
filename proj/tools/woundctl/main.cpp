#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "demo.hpp"
#include "woundcare/api/server.hpp"
#include "woundcare/error.hpp"
#include "woundcare/seg/image.hpp"
#include "woundcare/seg/live_loop.hpp"
#include "woundcare/seg/pipeline.hpp"
#include "woundcare/sizing.hpp"
#include "woundcare/topformer/config.hpp"
#include "woundcare/topformer/model.hpp"
#include "woundcare/topformer/weights.hpp"

using namespace woundcare;
using Json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

bool json_mode = false;

void emit(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string thousands(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

// ---- segment ---------------------------------------------------------------

struct SegmentArgs {
  std::string model, model_config, image, out, overlay, mode = "a_posteriori";
  double threshold = 0.75;
  int min_component_px = 25;
  int connectivity = 8;
  bool timing = false;
};

int run_segment(const SegmentArgs& a) {
  const topformer::Model model = topformer::load_model(a.model, a.model_config);
  seg::SegmentationParams params;
  params.threshold = a.threshold;
  params.min_component_px = a.min_component_px;
  params.connectivity = a.connectivity;
  params.feedback_mode = seg::feedback_mode_from_string(a.mode);
  params.validate();

  const RgbImage image = load_image(a.image);
  const seg::SegmentationResult r = seg::segment(model, image, params);
  write_file(a.out, encode_mask_png(r.mask));
  if (!a.overlay.empty()) write_file(a.overlay, encode_png(seg::render_overlay(image, r, params.feedback_mode)));

  if (json_mode) {
    Json comps = Json::array();
    for (const auto& c : r.components)
      comps.push_back({{"id", c.id},
                       {"pixel_count", c.pixel_count},
                       {"bbox", {{"x", c.bbox.x}, {"y", c.bbox.y}, {"width", c.bbox.width}, {"height", c.bbox.height}}},
                       {"centroid", {c.centroid_x, c.centroid_y}}});
    Json j{{"image", {{"path", a.image}, {"width", image.width}, {"height", image.height}}},
           {"crop_rect",
            {{"x", r.crop_rect.x},
             {"y", r.crop_rect.y},
             {"width", r.crop_rect.width},
             {"height", r.crop_rect.height},
             {"source_px_per_mask_px", r.crop_rect.source_px_per_mask_px}}},
           {"threshold", params.threshold},
           {"feedback_mode", seg::to_string(params.feedback_mode)},
           {"mask", {{"path", a.out}, {"width", r.mask.width}, {"height", r.mask.height}, {"wound_px", r.mask.popcount()}}},
           {"components", comps},
           {"dropped_px", r.dropped_px},
           {"overlay", a.overlay.empty() ? Json(nullptr) : Json(a.overlay)}};
    if (a.timing) j["latency_ms"] = r.latency_ms;
    emit(j);
    return exit_ok;
  }
  std::cout << "image       " << a.image << " " << image.width << "x" << image.height << "\n"
            << "crop        x=" << r.crop_rect.x << " y=" << r.crop_rect.y << " " << r.crop_rect.width << "x"
            << r.crop_rect.height << " (" << fmt("%.4g", r.crop_rect.source_px_per_mask_px) << " px per mask px)\n"
            << "threshold   " << fmt("%.4g", params.threshold) << " (" << seg::to_string(params.feedback_mode) << ")\n"
            << "mask        " << a.out << " " << r.mask.width << "x" << r.mask.height << ", " << r.mask.popcount()
            << " wound px\n"
            << "components  " << r.components.size() << " kept, " << r.dropped_px << " px dropped\n";
  for (const auto& c : r.components)
    std::cout << "  #" << c.id << "  " << c.pixel_count << " px  bbox " << c.bbox.x << "," << c.bbox.y << " "
              << c.bbox.width << "x" << c.bbox.height << "  centroid " << fmt("%.2f", c.centroid_x) << ","
              << fmt("%.2f", c.centroid_y) << "\n";
  if (!a.overlay.empty()) std::cout << "overlay     " << a.overlay << "\n";
  if (a.timing) std::cout << "latency     " << fmt("%.1f", r.latency_ms) << " ms\n";
  return exit_ok;
}

// ---- area ------------------------------------------------------------------

struct AreaArgs {
  std::string mask, ro;
  double scale = 0;
  double source_px_per_mask_px = 1.0;
  int min_component_px = 25;
  int connectivity = 8;
};

sizing::ReferenceAnnotation parse_ro(const std::string& text) {
  std::vector<double> v;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    double d = 0;
    try {
      d = std::stod(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (part.empty() || used != part.size())
      throw Error(ErrorCode::invalid_argument, "--ro expects ax,ay,bx,by,mm; got \"" + text + "\"", "ro");
    v.push_back(d);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (v.size() != 5) throw Error(ErrorCode::invalid_argument, "--ro expects 5 numbers: ax,ay,bx,by,mm", "ro");
  sizing::ReferenceAnnotation ro{{v[0], v[1]}, {v[2], v[3]}, v[4]};
  ro.validate();
  return ro;
}

int run_area(const AreaArgs& a) {
  const double scale = a.ro.empty() ? a.scale : sizing::calibrate_scale(parse_ro(a.ro));
  if (!(scale > 0)) throw Error(ErrorCode::range, "scale must be positive", "scale_mm_per_px");
  if (!(a.source_px_per_mask_px > 0))
    throw Error(ErrorCode::range, "source px per mask px must be positive", "source_px_per_mask_px");
  const Mask mask = decode_mask(read_file(a.mask));
  seg::SegmentationParams params;
  params.min_component_px = a.min_component_px;
  params.connectivity = a.connectivity;
  const seg::ComponentSet comps = seg::extract_components(mask, params);
  std::vector<std::size_t> counts;
  for (const auto& c : comps.components) counts.push_back(c.pixel_count);
  const sizing::WoundSize size = sizing::estimate_area(counts, scale, a.source_px_per_mask_px);

  nlohmann::ordered_json j;
  j["total_mm2"] = size.total_mm2;
  j["total_cm2"] = size.total_cm2;
  j["scale_mm_per_px"] = size.scale_mm_per_px;
  j["component_area_mm2"] = size.component_area_mm2;
  j["dropped_px"] = comps.dropped_px;
  std::cout << j.dump() << "\n";
  return exit_ok;
}

// ---- inspect-weights / make-weights ---------------------------------------

int run_inspect(const std::string& path, const std::string& config_path) {
  const topformer::WeightBundle b = topformer::load_weights(path);
  std::optional<topformer::ModelConfig> config;
  if (!config_path.empty())
    config = topformer::ModelConfig::load(config_path);
  else if (b.arch() == topformer::tiny_preset().arch)
    config = topformer::tiny_preset();

  std::vector<std::string> missing, unused;
  if (config) {
    std::set<std::string> wanted;
    for (const auto& slot : topformer::parameter_slots(*config)) {
      wanted.insert(slot.name);
      if (!b.contains(slot.name)) missing.push_back(slot.name);
    }
    for (const auto& [name, t] : b.tensors())
      if (!wanted.count(name)) unused.push_back(name);
  }

  if (json_mode) {
    Json tensors = Json::array();
    for (const auto& [name, t] : b.tensors())
      tensors.push_back({{"name", name}, {"dims", t.dims}, {"elements", t.tensor.size()},
                         {"trainable", !topformer::is_buffer_name(name)}});
    Json j{{"path", path},
           {"arch", b.arch()},
           {"format_version", b.version()},
           {"tensor_count", b.size()},
           {"total_elements", b.total_elements()},
           {"trainable_parameters", b.trainable_elements()},
           {"tensors", tensors}};
    if (config) {
      j["config_parameters"] = topformer::count_parameters(*config);
      j["missing"] = missing;
      j["unused"] = unused;
    }
    emit(j);
  } else {
    std::size_t width = 4;
    for (const auto& [name, t] : b.tensors()) width = std::max(width, name.size());
    std::cout << "arch        " << b.arch() << "\n"
              << "format      " << b.version() << "\n"
              << "tensors     " << b.size() << "\n"
              << "elements    " << thousands(b.total_elements()) << "\n"
              << "parameters  " << thousands(b.trainable_elements()) << " trainable ("
              << fmt("%.2f", static_cast<double>(b.trainable_elements()) / 1e6) << "M)\n";
    if (config)
      std::cout << "config      " << config->arch << ": " << thousands(topformer::count_parameters(*config))
                << " parameters, " << missing.size() << " missing, " << unused.size() << " unused\n";
    std::cout << "\n" << std::left;
    std::cout << std::setw(static_cast<int>(width)) << "name" << "  " << std::setw(20) << "dims" << std::right
              << std::setw(10) << "elements" << std::left << "\n";
    for (const auto& [name, t] : b.tensors()) {
      std::string dims;
      for (std::size_t i = 0; i < t.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(t.dims[i]);
      std::cout << std::setw(static_cast<int>(width)) << name << "  " << std::setw(20) << dims << std::right
                << std::setw(10) << t.tensor.size() << std::left
                << (topformer::is_buffer_name(name) ? "  buffer" : "") << "\n";
    }
    for (const auto& m : missing) std::cout << "missing     " << m << "\n";
    for (const auto& u : unused) std::cout << "unused      " << u << "\n";
  }
  return missing.empty() ? exit_ok : exit_runtime;
}

struct MakeWeightsArgs {
  std::string preset = "tiny", config, init = "zeros", out;
  std::uint32_t seed = 0;
  std::optional<double> logit;
};

int run_make_weights(const MakeWeightsArgs& a) {
  topformer::ModelConfig config;
  if (!a.config.empty()) {
    config = topformer::ModelConfig::load(a.config);
  } else if (a.preset == "tiny") {
    config = topformer::tiny_preset();
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown preset \"" + a.preset + "\"", "preset");
  }
  topformer::BundleInit init;
  if (a.init == "zeros")
    init = topformer::BundleInit::zeros;
  else if (a.init == "random")
    init = topformer::BundleInit::random;
  else
    throw Error(ErrorCode::invalid_argument, "unknown init \"" + a.init + "\"", "init");
  topformer::WeightBundle b = topformer::make_bundle(config, init, a.seed);
  if (a.logit) {
    for (float& v : b.at("head.conv_seg.bias").tensor.data()) v = static_cast<float>(*a.logit);
  }
  topformer::write_weights(b, a.out);
  if (json_mode) {
    emit({{"path", a.out}, {"arch", b.arch()}, {"tensor_count", b.size()}, {"trainable_parameters", b.trainable_elements()}});
  } else {
    std::cout << "wrote " << a.out << ": " << b.arch() << ", " << b.size() << " tensors, "
              << thousands(b.trainable_elements()) << " trainable parameters\n";
  }
  return exit_ok;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
  std::string model, model_config, frames;
  std::size_t synthetic = 0;
  double interval_ms = 100;
  std::optional<double> simulated_inference_ms;
  double threshold = 0.75;
  bool threaded = false;
};

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

int run_bench(const BenchArgs& a) {
  if (a.frames.empty() == (a.synthetic == 0))
    throw Error(ErrorCode::invalid_argument, "pass exactly one of --frames or --synthetic", "frames");
  if (!(a.interval_ms > 0)) throw Error(ErrorCode::range, "interval must be positive", "simulate_interval");
  std::unique_ptr<seg::FrameSource> source;
  if (!a.frames.empty())
    source = std::make_unique<seg::DirectoryFrameSource>(a.frames, a.interval_ms);
  else
    source = std::make_unique<seg::SyntheticFrameSource>(a.synthetic, a.interval_ms);

  seg::LiveLoopStats stats;
  std::vector<seg::FrameResult> results;
  if (a.simulated_inference_ms) {
    const double cost = *a.simulated_inference_ms;
    if (!(cost > 0)) throw Error(ErrorCode::range, "simulated inference must be positive", "simulated_inference_ms");
    seg::VirtualClock clock;
    results = seg::live_loop(
        *source, [&](const seg::Frame&) {
          clock.advance(cost);
          return seg::SegmentationResult{};
        },
        clock, &stats);
  } else {
    if (a.model.empty()) throw Error(ErrorCode::invalid_argument, "--model is required without --simulated-inference-ms", "model");
    const topformer::Model model = topformer::load_model(a.model, a.model_config);
    seg::SegmentationParams params;
    params.threshold = a.threshold;
    params.feedback_mode = seg::FeedbackMode::live;
    params.validate();
    auto process = [&](const seg::Frame& f) { return seg::segment(model, f.image, params); };
    if (a.threaded) {
      results = seg::threaded_live_loop(*source, process, &stats);
    } else {
      seg::SteadyClock clock;
      results = seg::live_loop(*source, process, clock, &stats);
    }
  }

  std::vector<std::size_t> processed, skipped;
  for (const auto& r : results) (r.skipped ? skipped : processed).push_back(r.frame_index);
  const double p50 = percentile(stats.latencies_ms, 50), p95 = percentile(stats.latencies_ms, 95);
  const double worst = stats.latencies_ms.empty() ? 0 : *std::max_element(stats.latencies_ms.begin(), stats.latencies_ms.end());
  if (json_mode) {
    emit({{"frames", results.size()},
          {"interval_ms", a.interval_ms},
          {"processed", stats.processed},
          {"skipped", stats.skipped},
          {"max_pending", stats.max_pending},
          {"processed_indices", processed},
          {"skipped_indices", skipped},
          {"latency_ms", {{"p50", p50}, {"p95", p95}, {"max", worst}}}});
  } else {
    std::cout << "frames      " << results.size() << " at " << fmt("%.4g", a.interval_ms) << " ms\n"
              << "processed   " << stats.processed << "\n"
              << "skipped     " << stats.skipped << "\n"
              << "max pending " << stats.max_pending << "\n"
              << "latency     p50 " << fmt("%.1f", p50) << " ms, p95 " << fmt("%.1f", p95) << " ms, max "
              << fmt("%.1f", worst) << " ms\n"
              << "processed   [";
    for (std::size_t i = 0; i < processed.size(); ++i) std::cout << (i ? " " : "") << processed[i];
    std::cout << "]\n";
  }
  return exit_ok;
}

// ---- serve / seed-demo -----------------------------------------------------

int run_serve(const std::string& config_path) {
  const api::ServiceConfig config = api::load_config(config_path);
  if (config.model_path.empty())
    std::cerr << "warning: no model_path configured; submissions are stored unsegmented\n";

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto server = api::make_server(config);
  const int port = server->bind();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server->stop();
  });
  if (json_mode)
    emit({{"listening", config.host + ":" + std::to_string(port)}, {"data_dir", config.data_dir.string()}});
  else
    std::cout << "listening on " << config.host << ":" << port << " (data " << config.data_dir.string() << ")"
              << std::endl;
  server->listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return exit_ok;
}

int run_seed_demo(const std::string& data_dir) {
  const woundctl::DemoSummary s = woundctl::seed_demo(data_dir);
  if (json_mode) {
    emit(woundctl::to_json(s));
    return exit_ok;
  }
  std::cout << "seeded " << data_dir << ": " << s.patient_ids.size() << " patients, " << s.wound_ids.size()
            << " wounds, " << s.documentation_ids.size() << " documentations, " << s.slot_ids.size() << " slots\n";
  for (const auto& acc : s.accounts)
    std::cout << "  " << std::left << std::setw(10) << acc.role << std::setw(10) << acc.username << std::setw(16)
              << acc.password << acc.principal_id << "\n";
  return exit_ok;
}

int report(const Error& e) {
  if (json_mode) {
    Json j{{"error", to_string(e.code())}, {"message", e.what()}};
    if (!e.field().empty()) j["field"] = e.field();
    std::cout << j.dump() << "\n";
  } else {
    std::cerr << "woundctl: " << e.what() << "\n";
  }
  return exit_runtime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"woundctl: wound segmentation, sizing and telewound-care service tools"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", json_mode, "Machine-readable JSON output");
  std::function<int()> action;

  SegmentArgs seg_args;
  auto* segment = app.add_subcommand("segment", "Segment one image and write the mask");
  segment->add_option("--model", seg_args.model, "WAIW weight bundle")->required()->check(CLI::ExistingFile);
  segment->add_option("--model-config", seg_args.model_config, "Model config JSON (defaults to the bundle's preset)");
  segment->add_option("--image", seg_args.image, "Input PNG or JPEG")->required();
  segment->add_option("--out", seg_args.out, "Mask PNG to write")->required();
  segment->add_option("--overlay", seg_args.overlay, "Boundary overlay PNG to write");
  segment->add_option("--threshold", seg_args.threshold, "Probability threshold (inclusive)");
  segment->add_option("--mode", seg_args.mode, "Feedback mode")
      ->check(CLI::IsMember({"basic", "posteriori", "a_posteriori", "live"}));
  segment->add_option("--min-component-px", seg_args.min_component_px);
  segment->add_option("--connectivity", seg_args.connectivity)->check(CLI::IsMember({4, 8}));
  segment->add_flag("--timing", seg_args.timing, "Include inference latency (not byte-stable)");
  segment->callback([&] { action = [&] { return run_segment(seg_args); }; });

  AreaArgs area_args;
  auto* area = app.add_subcommand("area", "Wound area of a mask in mm^2");
  area->add_option("--mask", area_args.mask, "Mask PNG (white = wound)")->required();
  auto* ro = area->add_option("--ro", area_args.ro, "Reference object ax,ay,bx,by,mm in source pixels");
  auto* scale = area->add_option("--scale-mm-per-px", area_args.scale, "Known scale");
  ro->excludes(scale);
  area->add_option("--source-px-per-mask-px", area_args.source_px_per_mask_px);
  area->add_option("--min-component-px", area_args.min_component_px);
  area->add_option("--connectivity", area_args.connectivity)->check(CLI::IsMember({4, 8}));
  area->callback([&] {
    if (area_args.ro.empty() && area->count("--scale-mm-per-px") == 0)
      throw CLI::RequiredError("--ro or --scale-mm-per-px");
    action = [&] { return run_area(area_args); };
  });

  std::string inspect_path, inspect_config;
  auto* inspect = app.add_subcommand("inspect-weights", "Manifest table and parameter count of a bundle");
  inspect->add_option("bundle", inspect_path, "WAIW weight bundle")->required();
  inspect->add_option("--model-config", inspect_config, "Model config JSON to check slots against");
  inspect->callback([&] { action = [&] { return run_inspect(inspect_path, inspect_config); }; });

  MakeWeightsArgs mw;
  auto* make = app.add_subcommand("make-weights", "Write a zero or random weight bundle");
  make->add_option("--preset", mw.preset)->check(CLI::IsMember({"tiny"}));
  make->add_option("--model-config", mw.config, "Model config JSON instead of a preset");
  make->add_option("--init", mw.init)->check(CLI::IsMember({"zeros", "random"}));
  make->add_option("--seed", mw.seed);
  make->add_option("--logit", mw.logit, "Set every classifier bias to this value");
  make->add_option("--out", mw.out)->required();
  make->callback([&] { action = [&] { return run_make_weights(mw); }; });

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Live-loop latency and frame-skip statistics");
  bench->add_option("--model", bench_args.model);
  bench->add_option("--model-config", bench_args.model_config);
  bench->add_option("--frames", bench_args.frames, "Directory of frames")->check(CLI::ExistingDirectory);
  bench->add_option("--synthetic", bench_args.synthetic, "Use N synthetic frames instead of --frames");
  bench->add_option("--simulate-interval", bench_args.interval_ms, "Frame interval in ms");
  bench->add_option("--simulated-inference-ms", bench_args.simulated_inference_ms,
                    "Replace inference with a fixed cost on a virtual clock");
  bench->add_option("--threshold", bench_args.threshold);
  bench->add_flag("--threaded", bench_args.threaded, "Producer thread plus consumer, wall clock");
  bench->callback([&] { action = [&] { return run_bench(bench_args); }; });

  std::string serve_config;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", serve_config, "Service config JSON")->required();
  serve->callback([&] { action = [&] { return run_serve(serve_config); }; });

  std::string demo_dir;
  auto* demo = app.add_subcommand("seed-demo", "Populate a data directory with demo patients and slots");
  demo->add_option("--data", demo_dir, "Data directory")->required();
  demo->callback([&] { action = [&] { return run_seed_demo(demo_dir); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }
  try {
    return action();
  } catch (const Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    return report(Error(ErrorCode::io, e.what()));
  }
}
