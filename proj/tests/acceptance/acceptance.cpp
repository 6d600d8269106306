#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "demo.hpp"
#include "support/crash_harness.hpp"
#include "support/oracles.hpp"
#include "woundcare/api/server.hpp"
#include "woundcare/care/documentation.hpp"
#include "woundcare/error.hpp"
#include "woundcare/kernels.hpp"
#include "woundcare/scheduling.hpp"
#include "woundcare/seg/image.hpp"
#include "woundcare/seg/live_loop.hpp"
#include "woundcare/sizing.hpp"
#include "woundcare/topformer/model.hpp"

using namespace woundcare;
namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace std::chrono_literals;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Accumulates failed checks; the first few are reported.
struct Checks {
  std::size_t failed = 0;
  std::string first;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (failed++ < 3) first += (first.empty() ? "" : "; ") + what;
  }
  Outcome done(const std::string& detail) const {
    return failed == 0 ? Outcome{true, detail} : Outcome{false, std::to_string(failed) + " failed: " + first};
  }
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("woundcare_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

Tensor random_image(std::size_t size, std::uint32_t seed) {
  std::mt19937 rng(seed);
  return oracle::random_tensor(Shape{1, 3, size, size}, rng, -2.0f, 2.0f);
}

// ---------------------------------------------------------------------------

Outcome p1_parameter_count() {
  const std::size_t n = topformer::count_parameters(topformer::tiny_preset());
  const std::size_t exported = topformer::make_bundle(topformer::tiny_preset(), topformer::BundleInit::zeros)
                                   .trainable_elements();
  Checks c;
  c.expect(n >= 1'320'000 && n <= 1'460'000, "count " + std::to_string(n) + " outside [1.32M, 1.46M]");
  c.expect(exported == n, "exported bundle holds " + std::to_string(exported));
  return c.done(fmt("%.3fM trainable parameters", static_cast<double>(n) / 1e6));
}

Outcome p2_shape_pipeline() {
  const auto config = topformer::tiny_preset();
  const topformer::Model m =
      topformer::Model::build(config, topformer::make_bundle(config, topformer::BundleInit::random, 2024));
  Checks c;
  for (std::size_t size : {224u, 192u}) {
    const Tensor img = random_image(size, static_cast<std::uint32_t>(size));
    const Tensor prob = topformer::forward(m, img);
    c.expect(prob.shape() == Shape{1, 1, size, size}, "output extent at " + std::to_string(size));

    const auto tokens = topformer::token_pyramid(m, img);
    c.expect(tokens.size() == 4, "token count");
    const std::size_t strides[] = {4, 8, 16, 32};
    for (std::size_t i = 0; i < std::min<std::size_t>(tokens.size(), 4); ++i)
      c.expect(tokens[i].shape().h * strides[i] == size && tokens[i].shape().w * strides[i] == size,
               "stride " + std::to_string(strides[i]) + " at " + std::to_string(size));

    const Tensor global = topformer::semantics_extractor(m, topformer::pool_and_concat(tokens, config.pool_divisor, 32));
    const std::size_t injected = config.sim_channels.size();
    const auto enhanced =
        topformer::inject_semantics(m, std::span<const Tensor>(tokens).subspan(tokens.size() - injected), global);
    const Tensor composed = activation(topformer::segmentation_head(m, enhanced, {size, size}), Activation::sigmoid);
    c.expect(composed == prob, "stage composition differs from forward at " + std::to_string(size));
  }
  return c.done("224 and 192 inputs, strides 4/8/16/32, composition bitwise equal");
}

Outcome p3_kernel_oracles() {
  std::mt19937 rng(31337);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1)); };
  constexpr int cases = 120;
  float worst[5] = {0, 0, 0, 0, 0};

  for (int i = 0; i < cases; ++i) {
    const int groups = std::array{1, 2, 4}[rng() % 3];
    const auto in_c = static_cast<std::size_t>(groups * pick(1, 3));
    const auto out_c = static_cast<std::size_t>(groups * pick(1, 3));
    const auto k = static_cast<std::size_t>(pick(1, 5));
    const int stride = pick(1, 2), pad = pick(0, 2);
    const auto h = static_cast<std::size_t>(pick(static_cast<int>(k), 11));
    const auto w = static_cast<std::size_t>(pick(static_cast<int>(k), 11));
    const Tensor x = oracle::random_tensor(Shape{static_cast<std::size_t>(pick(1, 2)), in_c, h, w}, rng);
    const ConvParams p = oracle::random_conv(out_c, in_c, k, stride, pad, groups, rng() % 2, rng);
    worst[0] = std::max(worst[0], max_abs_diff(conv2d(x, p), oracle::conv2d(x, p)));
  }
  for (int i = 0; i < cases; ++i) {
    const auto h = static_cast<std::size_t>(pick(1, 13)), w = static_cast<std::size_t>(pick(1, 13));
    const Tensor x = oracle::random_tensor(Shape{1, static_cast<std::size_t>(pick(1, 4)), h, w}, rng);
    const auto oh = static_cast<std::size_t>(pick(1, static_cast<int>(h)));
    const auto ow = static_cast<std::size_t>(pick(1, static_cast<int>(w)));
    worst[1] = std::max(worst[1], max_abs_diff(adaptive_avg_pool(x, {oh, ow}), oracle::adaptive_pool(x, oh, ow)));
  }
  for (int i = 0; i < cases; ++i) {
    const Tensor x = oracle::random_tensor(
        Shape{1, static_cast<std::size_t>(pick(1, 3)), static_cast<std::size_t>(pick(1, 9)), static_cast<std::size_t>(pick(1, 9))},
        rng);
    const auto oh = static_cast<std::size_t>(pick(1, 20)), ow = static_cast<std::size_t>(pick(1, 20));
    const Tensor y = bilinear_resize(x, {oh, ow});
    for (std::size_t c = 0; c < x.shape().c; ++c)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t q = 0; q < ow; ++q)
          worst[2] = std::max(worst[2], static_cast<float>(std::abs(y.at(0, c, r, q) - oracle::bilinear_at(x, 0, c, oh, ow, r, q))));
  }
  for (int i = 0; i < cases; ++i) {
    const int heads = pick(1, 4);
    const auto dim = static_cast<std::size_t>(pick(2, 8));
    const AttentionParams p = oracle::random_attention(dim, heads, pick(1, 4), pick(1, 4), rng);
    const Tensor x = oracle::random_tensor(
        Shape{static_cast<std::size_t>(pick(1, 2)), dim, static_cast<std::size_t>(pick(1, 4)), static_cast<std::size_t>(pick(1, 4))},
        rng);
    worst[3] = std::max(worst[3], max_abs_diff(multi_head_attention(x, p), oracle::attention(x, p)));
  }
  for (int i = 0; i < cases; ++i) {
    const auto in_c = static_cast<std::size_t>(pick(1, 4)), out_c = static_cast<std::size_t>(pick(1, 6));
    const Tensor x = oracle::random_tensor(Shape{1, in_c, static_cast<std::size_t>(pick(3, 8)), static_cast<std::size_t>(pick(3, 8))}, rng);
    const ConvParams conv = oracle::random_conv(out_c, in_c, 3, 1, 1, 1, rng() % 2, rng);
    const BatchNormParams bn{oracle::random_vector(out_c, rng, 0.5f, 1.5f), oracle::random_vector(out_c, rng),
                             oracle::random_vector(out_c, rng), oracle::random_vector(out_c, rng, 0.1f, 2.0f), 1e-5f};
    worst[4] = std::max(worst[4], max_abs_diff(conv2d(x, fold_batchnorm(conv, bn)), oracle::batchnorm(conv2d(x, conv), bn)));
  }

  const char* names[] = {"conv2d", "adaptive_avg_pool", "bilinear_resize", "attention", "bn folding"};
  Checks c;
  std::string detail = std::to_string(cases) + " cases each, max diff";
  for (int i = 0; i < 5; ++i) {
    c.expect(worst[i] < 1e-5f, std::string(names[i]) + " diff " + fmt("%.3g", worst[i]));
    detail += std::string(i ? "," : "") + " " + names[i] + " " + fmt("%.2g", worst[i]);
  }
  return c.done(detail);
}

Outcome p4_threshold() {
  Checks c;
  // Every float within 4096 ulps of 0.75 on either side.
  std::vector<float> probe;
  float v = 0.75f;
  for (int i = 0; i < 4096; ++i) v = std::nextafter(v, 0.0f);
  for (int i = 0; i < 8193; ++i, v = std::nextafter(v, 1.0f)) probe.push_back(v);
  const Tensor p(Shape{1, 1, 1, probe.size()}, probe);
  const Mask m = seg::threshold_mask(p, 0.75);
  for (std::size_t i = 0; i < probe.size(); ++i)
    c.expect(m.bits[i] == (probe[i] >= 0.75f ? 1 : 0), "boundary at " + fmt("%.9g", probe[i]));
  c.expect(m.bits[4096] == 1 && m.bits[4095] == 0, "0.75 itself must be wound, its predecessor not");

  std::mt19937 rng(75);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int map = 0; map < 50; ++map) {
    const Tensor probs = oracle::random_tensor(Shape{1, 1, 32, 32}, rng, 0.0f, 1.0f);
    std::vector<double> taus(12);
    for (double& t : taus) t = u(rng);
    taus.push_back(0.75);
    std::sort(taus.begin(), taus.end());
    Mask prev = seg::threshold_mask(probs, 0.0);
    for (double t : taus) {
      const Mask cur = seg::threshold_mask(probs, t);
      for (std::size_t i = 0; i < cur.bits.size(); ++i)
        c.expect(!(cur.bits[i] && !prev.bits[i]), "mask grew when raising threshold to " + fmt("%.4f", t));
      prev = cur;
    }
  }
  return c.done("8193 boundary floats, 50 maps x 13 thresholds nested");
}

Mask disk(int size, double cx, double cy, double r) {
  Mask m(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) m.set(x, y, std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r);
  return m;
}

Outcome p5_sizing() {
  Checks c;
  double worst = 0;
  seg::SegmentationParams params;
  for (int r : {30, 50, 80}) {
    const int size = 2 * r + 20;
    const Mask m = disk(size, size / 2.0 + 0.3, size / 2.0 - 0.2, r);
    const seg::ComponentSet comps = seg::extract_components(m, params);
    std::vector<std::size_t> counts;
    for (const auto& comp : comps.components) counts.push_back(comp.pixel_count);
    for (double scale : {0.1, 0.25, 0.4}) {
      const double exact = std::numbers::pi * r * r * scale * scale;
      const double got = sizing::estimate_area(counts, scale).total_mm2;
      const double err = std::abs(got - exact) / exact;
      worst = std::max(worst, err);
      c.expect(err < 0.02, "r=" + std::to_string(r) + " scale " + fmt("%.2f", scale) + " error " + fmt("%.4f", err));
    }
  }
  const double cal = sizing::calibrate_scale({{0, 0}, {200, 0}, 50});
  c.expect(cal == 0.25, "50 mm over 200 px gave " + fmt("%.17g", cal));
  return c.done("max relative error " + fmt("%.4f", worst) + ", 50 mm/200 px = " + fmt("%g", cal) + " mm/px");
}

// Discrete-event model of the latest-wins loop: when idle, take the newest frame already arrived.
std::vector<std::size_t> live_oracle(std::size_t frames, double interval, double cost) {
  std::vector<std::size_t> processed;
  double now = 0;
  std::size_t next = 0;
  while (next < frames) {
    if (static_cast<double>(next) * interval > now) now = static_cast<double>(next) * interval;
    std::size_t newest = next;
    while (newest + 1 < frames && static_cast<double>(newest + 1) * interval <= now) ++newest;
    processed.push_back(newest);
    now += cost;
    next = newest + 1;
  }
  return processed;
}

Outcome p6_live_loop() {
  Checks c;
  std::string pattern;
  for (auto [frames, interval, cost] : {std::tuple{10, 100.0, 250.0}, std::tuple{40, 100.0, 250.0}, std::tuple{25, 33.0, 250.0}}) {
    seg::VirtualClock clock;
    seg::SyntheticFrameSource source(static_cast<std::size_t>(frames), interval, 16, 16);
    seg::LiveLoopStats stats;
    const auto results = seg::live_loop(
        source, [&](const seg::Frame&) {
          clock.advance(cost);
          return seg::SegmentationResult{};
        },
        clock, &stats);
    std::vector<std::size_t> got;
    for (const auto& r : results)
      if (!r.skipped) got.push_back(r.frame_index);
    const auto want = live_oracle(static_cast<std::size_t>(frames), interval, cost);
    c.expect(results.size() == static_cast<std::size_t>(frames), "every frame accounted for");
    c.expect(got == want, "skip pattern differs from oracle for " + std::to_string(frames) + " frames");
    c.expect(stats.max_pending <= 1, "queue grew to " + std::to_string(stats.max_pending));
    for (std::size_t i = 1; i < got.size(); ++i) c.expect(got[i] > got[i - 1], "processed indices not increasing");
    if (pattern.empty())
      for (std::size_t i : got) pattern += (pattern.empty() ? "" : ",") + std::to_string(i);
  }
  return c.done("250 ms vs 100 ms processes frames " + pattern + ", max pending 1");
}

Outcome p7_state_machine() {
  using namespace scheduling;
  Checks c;
  const std::set<std::tuple<SlotState, Action, SlotState>> legal = {
      {SlotState::available, Action::book, SlotState::booked},
      {SlotState::booked, Action::confirm, SlotState::confirmed},
      {SlotState::booked, Action::cancel, SlotState::cancelled},
      {SlotState::confirmed, Action::complete, SlotState::completed},
      {SlotState::confirmed, Action::cancel, SlotState::cancelled},
      {SlotState::cancelled, Action::recycle, SlotState::available},
  };
  auto want_of = [&](SlotState s, Action a) -> std::optional<SlotState> {
    for (const auto& [f, act, to] : legal)
      if (f == s && act == a) return to;
    return std::nullopt;
  };
  for (SlotState s : all_states)
    for (Action a : all_actions) c.expect(next_state(s, a) == want_of(s, a), "table entry " + std::string(to_string(s)) + " x " + std::string(to_string(a)));

  const fs::path dir = scratch("p7");
  store::StoreOptions fast;
  fast.fsync = false;
  store::Store st(dir, fast);
  const Timestamp t0 = parse_rfc3339("2026-03-01T09:00:00Z");
  const Slot contested = create_slot(st, "clin-1", t0, t0 + 30min);
  std::atomic<int> wins{0}, conflicts{0};
  std::atomic<bool> go{false};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&, i] {
      while (!go) std::this_thread::yield();
      try {
        book_slot(st, contested.id, "pat-race-" + std::to_string(i));
        ++wins;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::conflict) ++conflicts;
      }
    });
  go = true;
  for (auto& t : threads) t.join();
  c.expect(wins == 1 && conflicts == 7, "race gave " + std::to_string(wins.load()) + " winners");

  std::mt19937 rng(77);
  std::vector<std::string> ids;
  for (int i = 0; i < 6; ++i)
    ids.push_back(create_slot(st, "clin-" + std::to_string(i % 2), t0 + 1h + std::chrono::minutes(20 * i),
                              t0 + 1h + std::chrono::minutes(20 * i + 30))
                      .id);
  const std::set<SlotState> resting = {SlotState::available, SlotState::booked, SlotState::confirmed, SlotState::completed};
  for (int step = 0; step < 10000; ++step) {
    const std::size_t which = rng() % ids.size();
    const std::string id = ids[which];
    const Slot before = get_slot(st, id);
    const std::string patient = "pat-" + std::to_string(rng() % 3);
    const std::string clinician = "clin-" + std::to_string(rng() % 2);
    const int op = static_cast<int>(rng() % 4);
    try {
      switch (op) {
        case 0: book_slot(st, id, patient); break;
        case 1: confirm(st, id, clinician); break;
        case 2: cancel(st, id, rng() % 2 ? Actor{patient, Role::patient} : Actor{clinician, Role::clinician}); break;
        default: complete(st, id, clinician); break;
      }
    } catch (const Error&) {
    }
    const Slot after = get_slot(st, id);
    c.expect(resting.count(after.state) == 1, "slot rests in " + std::string(to_string(after.state)));
    if (after.state != before.state) {
      const Action a = std::array{Action::book, Action::confirm, Action::cancel, Action::complete}[op];
      const auto want = a == Action::cancel ? std::optional(SlotState::available) : want_of(before.state, a);
      c.expect(want && after.state == *want, "illegal move from " + std::string(to_string(before.state)));
    }
    c.expect(after.holds_patient() == !after.patient_id.empty(), "patient field out of step with state");
    if (after.state == SlotState::completed) ids[which] = create_slot(st, after.clinician_id, after.start, after.end).id;
  }
  fs::remove_all(dir);
  return c.done("30 table entries, 1 of 8 racers won, 10^4 fuzzed actions legal");
}

// ---------------------------------------------------------------------------

std::string photo_png(int w, int h, int radius) {
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool wound = std::hypot(x - w / 2.0, y - h / 2.0) <= radius;
      std::uint8_t* px = img.at(x, y);
      px[0] = wound ? 128 : 222;
      px[1] = wound ? 36 : 176;
      px[2] = wound ? 40 : 150;
    }
  const auto bytes = encode_png(img);
  return {bytes.begin(), bytes.end()};
}

// Wound and general trajectories recomputed from the raw documentation files.
struct Recomputed {
  std::map<std::string, std::size_t> gallery_total;
  std::map<std::string, std::map<std::string, Json>> wound_points;  // wound -> date -> values
  std::map<std::string, Json> general_points;                       // date -> values
};

Recomputed recompute(const fs::path& data_dir, const std::string& patient_id) {
  struct Latest {
    std::string order;
    Json values;
  };
  std::map<std::string, std::map<std::string, Latest>> wounds;
  std::map<std::string, Latest> general;
  Recomputed out;
  for (const auto& entry : fs::directory_iterator(data_dir / "collections" / "documentations")) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    const Json body = Json::parse(in).at("body");
    if (body["patient_id"] != patient_id) continue;
    const std::string ts = body["timestamp"];
    const std::string day = ts.substr(0, 10);
    const std::string order = ts + body["id"].get<std::string>();
    if (general[day].order < order) general[day] = {order, body["general_questionnaire"]};
    for (const auto& w : body["wounds"]) {
      const std::string wid = w["wound_id"];
      ++out.gallery_total[wid];
      Json values = w["questionnaire"];
      if (w.contains("reference") && !w["reference"].is_null() && w.contains("segmentation") &&
          !w["segmentation"].is_null()) {
        const auto& ref = w["reference"];
        const double dx = ref["endpoint_b"][0].get<double>() - ref["endpoint_a"][0].get<double>();
        const double dy = ref["endpoint_b"][1].get<double>() - ref["endpoint_a"][1].get<double>();
        const double mm_per_px = ref["known_length_mm"].get<double>() / std::hypot(dx, dy);
        const double k = w["segmentation"]["crop_rect"]["source_px_per_mask_px"].get<double>() * mm_per_px;
        double px = 0;
        for (const auto& n : w["segmentation"]["component_pixel_counts"]) px += n.get<double>();
        values["area_cm2"] = px * k * k / 100.0;
      }
      auto& slot = wounds[wid][day];
      if (slot.order < order) slot = {order, values};
    }
  }
  for (const auto& [wid, days] : wounds)
    for (const auto& [day, l] : days) out.wound_points[wid][day] = l.values;
  for (const auto& [day, l] : general) out.general_points[day] = l.values;
  return out;
}

bool values_match(const Json& api, const Json& want) {
  if (api.size() != want.size()) return false;
  for (const auto& [k, v] : want.items()) {
    if (!api.contains(k)) return false;
    const double a = api[k].get<double>(), b = v.get<double>();
    if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(b))) return false;
  }
  return true;
}

Outcome p8_end_to_end() {
  Checks c;
  const fs::path dir = scratch("p8");
  const woundctl::DemoSummary demo = woundctl::seed_demo(dir, false);
  const std::string anna = demo.patient_ids.at(0);
  const std::string leg = demo.wound_ids.at(0), heel = demo.wound_ids.at(1);

  store::StoreOptions fast;
  fast.fsync = false;
  auto st = std::make_shared<store::Store>(dir, fast);
  const auto tiny = topformer::tiny_preset();
  topformer::WeightBundle bundle = topformer::make_bundle(tiny, topformer::BundleInit::zeros);
  for (float& b : bundle.at("head.conv_seg.bias").tensor.data()) b = 5.0f;
  auto model = std::make_shared<const topformer::Model>(topformer::Model::build(tiny, bundle));
  api::ServiceConfig config;
  config.port = 0;
  config.data_dir = dir;
  config.worker_threads = 4;
  api::Server server(config, st, model);
  httplib::Client http("127.0.0.1", server.start());
  http.set_read_timeout(60, 0);

  auto login = [&](const std::string& user, const std::string& pw) -> httplib::Headers {
    auto r = http.Post("/api/v1/auth/login", Json{{"username", user}, {"password", pw}}.dump(), "application/json");
    if (!r || r->status != 200) throw std::runtime_error("login failed for " + user);
    return {{"Authorization", "Bearer " + Json::parse(r->body)["token"].get<std::string>()}};
  };
  const auto as_anna = login("anna", "demo-anna");
  const auto as_doctor = login("dr.demo", "demo-clinician");

  const std::size_t docs_before = care::list_documentations(*st, anna).size();
  const Json manifest{
      {"timestamp", format_rfc3339(woundctl::demo_base() + std::chrono::days(woundctl::demo_days))},
      {"wounds",
       {{{"wound_id", leg}, {"image", "leg"}, {"confirmed", true}, {"questionnaire", {{"pain", 2}, {"itching", 1}, {"exudate", 1}}}},
        {{"wound_id", heel}, {"image", "heel"}, {"confirmed", true}, {"questionnaire", {{"pain", 1}, {"itching", 0}, {"exudate", 2}}}}}},
      {"general_questionnaire", {{"mood", 9}, {"activity_impact", 2}, {"quality_of_life", 8}}}};
  const httplib::MultipartFormDataItems items{{"manifest", manifest.dump(), "", "application/json"},
                                              {"leg", photo_png(320, 240, 40), "leg.png", "image/png"},
                                              {"heel", photo_png(320, 240, 25), "heel.png", "image/png"}};
  auto headers = as_anna;
  headers.emplace("Idempotency-Key", "acceptance-p8");
  const std::string path = "/api/v1/patients/" + anna + "/documentations";
  auto first = http.Post(path, headers, items);
  if (!first || first->status != 201) throw std::runtime_error("submission failed: " + (first ? first->body : "no response"));
  const Json created = Json::parse(first->body);
  const std::string record_id = created["record_id"];
  auto again = http.Post(path, headers, items);
  c.expect(again && again->status == 200, "replay status");
  c.expect(again && Json::parse(again->body)["record_id"] == record_id, "replay returned a different record");
  c.expect(care::list_documentations(*st, anna).size() == docs_before + 1, "replay created a duplicate");
  c.expect(created["wounds"].size() == 2 && !created["wounds"][0]["mask_ref"].is_null(), "submission not segmented");

  auto ro = http.Post("/api/v1/documentations/" + record_id + "/ro-annotation", as_doctor,
                      Json{{"wound_id", leg}, {"endpoint_a", {20, 200}}, {"endpoint_b", {220, 200}}, {"known_length_mm", 50}}.dump(),
                      "application/json");
  c.expect(ro && ro->status == 200, "ro annotation status");

  const Recomputed want = recompute(dir, anna);
  for (const std::string& wid : {leg, heel}) {
    auto g = http.Get("/api/v1/wounds/" + wid + "/gallery", as_doctor);
    const Json gallery = Json::parse(g->body);
    const std::size_t total = want.gallery_total.at(wid);
    c.expect(gallery["total"] == total && gallery["items"].size() == total, "gallery total for " + wid);
    for (std::size_t i = 0; i < gallery["items"].size(); ++i)
      c.expect(gallery["items"][i]["counter"] == std::to_string(i + 1) + " of " + std::to_string(total), "gallery counter");
    c.expect(gallery["items"].back()["record_id"] == record_id, "newest documentation is not last in the gallery");

    const Json t = Json::parse(http.Get("/api/v1/wounds/" + wid + "/trajectory", as_anna)->body);
    const auto& days = want.wound_points.at(wid);
    c.expect(t["points"].size() == days.size(), "trajectory length for " + wid);
    std::size_t i = 0;
    for (const auto& [day, values] : days) {
      if (i >= t["points"].size()) break;
      const Json& p = t["points"][i++];
      c.expect(p["date"] == day, "trajectory date order");
      c.expect(values_match(p["values"], values), "trajectory values for " + wid + " on " + day);
    }
  }
  const Json leg_trajectory = Json::parse(http.Get("/api/v1/wounds/" + leg + "/trajectory", as_anna)->body);
  const double annotated = leg_trajectory["points"].back()["values"].value("area_cm2", -1.0);
  c.expect(ro && std::abs(Json::parse(ro->body)["size"]["total_cm2"].get<double>() - annotated) < 1e-12,
           "annotation response and trajectory disagree");

  const Json general = Json::parse(http.Get("/api/v1/patients/" + anna + "/trajectory/general", as_doctor)->body);
  c.expect(general["points"].size() == want.general_points.size(), "general trajectory length");
  std::size_t i = 0;
  for (const auto& [day, values] : want.general_points) {
    if (i >= general["points"].size()) break;
    const Json& p = general["points"][i++];
    c.expect(p["date"] == day && values_match(p["values"], values), "general trajectory on " + day);
  }
  server.stop();
  fs::remove_all(dir);
  return c.done("15 documentations per wound, annotated area " + fmt("%.3f", annotated) + " cm2, replay deduplicated");
}

Outcome p9_durability() {
  const fs::path dir = scratch("p9");
  const crash::Report r = crash::run(dir, 200, 99173);
  fs::remove_all(dir);
  Checks c;
  c.expect(r.killed == 200, std::to_string(r.killed) + " of 200 kills landed");
  c.expect(r.torn == 0, std::to_string(r.torn) + " torn documents");
  c.expect(r.mismatched == 0, std::to_string(r.mismatched) + " mismatched documents");
  for (const auto& p : r.problems) c.expect(false, p);
  return c.done("200 kill points, 0 torn, " + std::to_string(r.in_flight_new) + " in-flight writes landed, " +
                std::to_string(r.in_flight_old) + " rolled back");
}

Outcome p10_golden() {
  const fs::path work = fs::path(WOUNDCARE_BINARY_DIR) / "acceptance_golden";
  const fs::path log = work.string() + ".log";
  const std::string cmd = std::string("\"") + CMAKE_COMMAND_PATH + "\" -DWOUNDCTL=\"" + WOUNDCTL_PATH +
                          "\" -DGOLDEN_DIR=\"" + WOUNDCARE_SOURCE_DIR + "/tests/golden\" -DWORK_DIR=\"" + work.string() +
                          "\" -DRUNS=2 -P \"" + WOUNDCARE_SOURCE_DIR + "/tests/cli/run_golden.cmake\" > \"" +
                          log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  std::ifstream in(log);
  std::size_t ok = 0;
  std::string line, failures;
  while (std::getline(in, line)) {
    if (line.rfind("ok ", 0) == 0) ++ok;
    if (line.rfind("FAIL", 0) == 0) failures += (failures.empty() ? "" : "; ") + line;
  }
  if (rc != 0) return {false, failures.empty() ? "runner exited with " + std::to_string(rc) : failures};
  return {true, std::to_string(ok) + " golden cases identical across two runs and to the recorded files"};
}

struct Criterion {
  const char* id;
  const char* title;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"P1", "parameter count", 1, p1_parameter_count},
      {"P2", "shape pipeline", 30, p2_shape_pipeline},
      {"P3", "kernel oracles", 0, p3_kernel_oracles},
      {"P4", "threshold semantics", 0, p4_threshold},
      {"P5", "sizing accuracy", 0, p5_sizing},
      {"P6", "live-loop contract", 0, p6_live_loop},
      {"P7", "appointment state machine", 0, p7_state_machine},
      {"P8", "end-to-end store-and-forward", 60, p8_end_to_end},
      {"P9", "durability", 0, p9_durability},
      {"P10", "CLI golden files", 0, p10_golden},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && cr.limit_s > 0 && secs >= cr.limit_s) {
      o.pass = false;
      o.detail += "; took longer than " + fmt("%g", cr.limit_s) + " s";
    }
    failed += !o.pass;
    std::printf("%s %-3s %-29s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", cr.id, cr.title, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu primary criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
