#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "doctest.h"
#include "support/models.hpp"
#include "support/oracles.hpp"
#include "woundcare/error.hpp"
#include "woundcare/seg/live_loop.hpp"
#include "woundcare/seg/pipeline.hpp"

using namespace woundcare;
using namespace woundcare::seg;

namespace {

RgbImage noise_image(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  RgbImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

Mask random_mask(int w, int h, double density, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::bernoulli_distribution on(density);
  Mask m(w, h);
  for (auto& b : m.bits) b = on(rng) ? 1 : 0;
  return m;
}

void fill_rect(Mask& m, int x0, int y0, int w, int h) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) m.set(x, y, true);
}

// Union-find labeling, independent of the flood fill under test.
std::map<int, std::size_t> union_find_sizes(const Mask& m, int connectivity) {
  const int w = m.width, h = m.height;
  std::vector<int> parent(m.bits.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.get(x, y)) continue;
      const int i = y * w + x;
      if (x > 0 && m.get(x - 1, y)) unite(i, i - 1);
      if (y > 0 && m.get(x, y - 1)) unite(i, i - w);
      if (connectivity == 8 && y > 0) {
        if (x > 0 && m.get(x - 1, y - 1)) unite(i, i - w - 1);
        if (x + 1 < w && m.get(x + 1, y - 1)) unite(i, i - w + 1);
      }
    }
  }
  std::map<int, std::size_t> sizes;
  for (int i = 0; i < w * h; ++i)
    if (m.bits[i]) ++sizes[find(i)];
  return sizes;
}

struct SimEvent {
  std::size_t index;
  bool processed;
};

// Tick-by-tick simulation in whole milliseconds: arrivals at tick t land before the
// consumer, idle from tick t, picks up the newest pending frame.
std::vector<SimEvent> simulate_live(std::size_t frames, int interval, int inference) {
  std::vector<SimEvent> out;
  std::optional<std::size_t> pending;
  int busy_until = 0;
  const int horizon = static_cast<int>(frames) * interval + inference * static_cast<int>(frames) + 1;
  for (int t = 0; t <= horizon; ++t) {
    for (std::size_t i = 0; i < frames; ++i) {
      if (static_cast<int>(i) * interval != t) continue;
      if (pending) out.push_back({*pending, false});
      pending = i;
    }
    if (t >= busy_until && pending) {
      out.push_back({*pending, true});
      pending.reset();
      busy_until = t + inference;
    }
  }
  std::sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.index < b.index; });
  return out;
}

FrameProcessor fake_inference(VirtualClock& clock, double ms) {
  return [&clock, ms](const Frame&) {
    clock.advance(ms);
    SegmentationResult r;
    r.mask = Mask(4, 4);
    return r;
  };
}

}  // namespace

TEST_CASE("png and jpeg round trips") {
  const RgbImage img = noise_image(37, 21, 1);
  const auto png = encode_png(img);
  CHECK(sniff_media_type(png) == "image/png");
  CHECK(decode_image(png) == img);

  RgbImage flat(64, 48, 0);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      auto* p = flat.at(x, y);
      p[0] = 200;
      p[1] = 90;
      p[2] = 40;
    }
  const auto jpg = encode_jpeg(flat, 95);
  CHECK(sniff_media_type(jpg) == "image/jpeg");
  const RgbImage back = decode_image(jpg);
  REQUIRE(back.width == 64);
  REQUIRE(back.height == 48);
  int worst = 0;
  for (std::size_t i = 0; i < back.pixels.size(); ++i) worst = std::max(worst, std::abs(back.pixels[i] - flat.pixels[i]));
  CHECK(worst <= 4);

  Mask m = random_mask(30, 20, 0.4, 2);
  CHECK(decode_mask(encode_mask_png(m)) == m);
}

TEST_CASE("undecodable bytes are a format error") {
  const std::vector<std::uint8_t> junk = {'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'a', 'g', 'e'};
  try {
    decode_image(junk);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
  auto png = encode_png(noise_image(8, 8, 3));
  png.resize(png.size() / 2);
  CHECK_THROWS_AS(decode_image(png), Error);
  std::vector<std::uint8_t> bad_jpeg = {0xff, 0xd8, 0xff, 0xe0, 0, 0x10, 'J', 'F', 'I', 'F'};
  CHECK_THROWS_AS(decode_image(bad_jpeg), Error);
}

TEST_CASE("preprocess crop geometry") {
  const topformer::Normalization norm;
  SUBCASE("640x480") {
    const auto pre = preprocess(noise_image(640, 480, 4), norm);
    CHECK(pre.crop_rect == CropRect{208, 128, 224, 224, 1.0});
    CHECK(pre.tensor.shape() == Shape{1, 3, 224, 224});
  }
  SUBCASE("224x224 identity") {
    const RgbImage img = noise_image(224, 224, 5);
    const auto pre = preprocess(img, norm);
    CHECK(pre.crop_rect == CropRect{0, 0, 224, 224, 1.0});
    for (int c = 0; c < 3; ++c) {
      const double want = (img.at(17, 33)[c] - norm.mean[c]) / norm.std[c];
      CHECK(pre.tensor.at(0, c, 33, 17) == doctest::Approx(want).epsilon(1e-6));
    }
  }
  SUBCASE("100x300 scales then crops") {
    // Shorter side 100 -> 224 gives 224x672; the centered 224 window starts at row
    // (672-224)/2 = 224 of the resized image, i.e. source row 224*100/224 = 100.
    const RgbImage img = noise_image(100, 300, 6);
    const auto pre = preprocess(img, norm);
    CHECK(pre.crop_rect.x == 0);
    CHECK(pre.crop_rect.y == 100);
    CHECK(pre.crop_rect.width == 100);
    CHECK(pre.crop_rect.height == 100);
    CHECK(pre.crop_rect.source_px_per_mask_px == doctest::Approx(100.0 / 224.0));

    Tensor crop(Shape{1, 3, 100, 100});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 100; ++y)
        for (int x = 0; x < 100; ++x) crop.at(0, c, y, x) = img.at(x, 100 + y)[c];
    double worst = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 224; i += 7)
        for (std::size_t j = 0; j < 224; j += 5) {
          const double want = (oracle::bilinear_at(crop, 0, c, 224, 224, i, j) - norm.mean[c]) / norm.std[c];
          worst = std::max(worst, std::abs(want - pre.tensor.at(0, c, i, j)));
        }
    CHECK(worst < 1e-4);
  }
  SUBCASE("tiny source") {
    const auto pre = preprocess(noise_image(1, 1, 7), norm);
    CHECK(pre.crop_rect == CropRect{0, 0, 1, 1, 1.0 / 224.0});
  }
  CHECK_THROWS_AS(preprocess(RgbImage(0, 5), norm), Error);
}

TEST_CASE("pixels outside the crop never influence preprocessing") {
  const topformer::Normalization norm;
  for (auto [w, h] : {std::pair{640, 480}, std::pair{100, 300}, std::pair{150, 90}}) {
    RgbImage a = noise_image(w, h, 8);
    RgbImage b = noise_image(w, h, 9);
    const CropRect r = crop_rect_for(w, h);
    for (int y = r.y; y < r.y + r.height; ++y)
      for (int x = r.x; x < r.x + r.width; ++x) std::copy(a.at(x, y), a.at(x, y) + 3, b.at(x, y));
    CHECK(preprocess(a, norm).tensor == preprocess(b, norm).tensor);
  }
}

TEST_CASE("threshold is inclusive and monotone") {
  Tensor p(Shape{1, 1, 1, 4}, std::vector<float>{0.76f, 0.7499f, 0.75f, 1.0f});
  const Mask m = threshold_mask(p, 0.75);
  CHECK(m.bits == std::vector<std::uint8_t>{1, 0, 1, 1});
  CHECK(threshold_mask(Tensor(Shape{1, 1, 8, 8}, 0.5f), 0.75).popcount() == 0);
  CHECK(threshold_mask(p, 1.0).bits == std::vector<std::uint8_t>{0, 0, 0, 1});

  std::mt19937 rng(10);
  const Tensor probs = oracle::random_tensor(Shape{1, 1, 40, 40}, rng, 0.0f, 1.0f);
  std::size_t prev = probs.size() + 1;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const Mask cur = threshold_mask(probs, t);
    CHECK(cur.popcount() <= prev);
    if (t > 0) {
      const Mask lower = threshold_mask(probs, t - 0.05);
      for (std::size_t i = 0; i < cur.bits.size(); ++i) CHECK_FALSE((cur.bits[i] && !lower.bits[i]));
    }
    prev = cur.popcount();
  }
  CHECK_THROWS_AS(threshold_mask(Tensor(Shape{1, 2, 2, 2}), 0.5), Error);
}

TEST_CASE("component extraction examples") {
  SegmentationParams params;
  SUBCASE("two disjoint 5x5 squares") {
    Mask m(20, 10);
    fill_rect(m, 1, 1, 5, 5);
    fill_rect(m, 12, 3, 5, 5);
    const auto cs = extract_components(m, params);
    REQUIRE(cs.components.size() == 2);
    CHECK(cs.components[0].pixel_count == 25);
    CHECK(cs.components[1].pixel_count == 25);
    CHECK(cs.components[0].bbox == BoundingBox{1, 1, 5, 5});
    CHECK(cs.components[1].bbox == BoundingBox{12, 3, 5, 5});
    CHECK(cs.components[0].centroid_x == doctest::Approx(3.0));
    CHECK(cs.components[1].centroid_y == doctest::Approx(5.0));
    CHECK(cs.components[0].id == 1);
    CHECK(cs.components[1].id == 2);
  }
  SUBCASE("small blob dropped") {
    Mask m(10, 10);
    fill_rect(m, 2, 2, 3, 3);
    const auto cs = extract_components(m, params);
    CHECK(cs.components.empty());
    CHECK(cs.dropped_px == 9);
  }
  SUBCASE("diagonal neighbours") {
    Mask m(2, 2);
    m.set(0, 0, true);
    m.set(1, 1, true);
    params.min_component_px = 0;
    params.connectivity = 8;
    CHECK(extract_components(m, params).components.size() == 1);
    params.connectivity = 4;
    CHECK(extract_components(m, params).components.size() == 2);
  }
  SUBCASE("ordering by size then scan order") {
    Mask m(30, 30);
    fill_rect(m, 20, 0, 5, 5);   // 25, first in scan order among the equal pair
    fill_rect(m, 0, 10, 5, 5);   // 25
    fill_rect(m, 10, 20, 6, 6);  // 36
    const auto cs = extract_components(m, params);
    REQUIRE(cs.components.size() == 3);
    CHECK(cs.components[0].pixel_count == 36);
    CHECK(cs.components[1].bbox.x == 20);
    CHECK(cs.components[2].bbox.x == 0);
  }
}

TEST_CASE("components agree with a union-find oracle") {
  for (std::uint32_t seed = 0; seed < 40; ++seed) {
    const Mask m = random_mask(48, 37, 0.35 + 0.01 * seed, seed);
    for (int conn : {4, 8}) {
      SegmentationParams params;
      params.connectivity = conn;
      params.min_component_px = static_cast<int>(seed % 7);
      const auto cs = extract_components(m, params);
      std::vector<std::size_t> want;
      std::size_t dropped = 0;
      for (auto [root, n] : union_find_sizes(m, conn)) {
        if (n >= static_cast<std::size_t>(params.min_component_px)) {
          want.push_back(n);
        } else {
          dropped += n;
        }
      }
      std::sort(want.rbegin(), want.rend());
      std::vector<std::size_t> got;
      std::size_t kept = 0;
      for (const auto& c : cs.components) {
        got.push_back(c.pixel_count);
        kept += c.pixel_count;
        CHECK(c.pixel_count >= static_cast<std::size_t>(params.min_component_px));
      }
      CHECK(got == want);
      CHECK(cs.dropped_px == dropped);
      CHECK(kept + cs.dropped_px == m.popcount());
    }
  }
}

TEST_CASE("mirrored blobs in a probability map give equal components") {
  Tensor p(Shape{1, 1, 64, 128}, 0.1f);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double v = std::exp(-(std::pow(x - 30.5, 2) + std::pow(y - 28.0, 2)) / 150.0);
      p.at(0, 0, y, x) = static_cast<float>(v);
      p.at(0, 0, y, 127 - x) = static_cast<float>(v);
    }
  const auto cs = extract_components(threshold_mask(p, 0.75), SegmentationParams{});
  REQUIRE(cs.components.size() == 2);
  CHECK(cs.components[0].pixel_count == cs.components[1].pixel_count);
  CHECK(cs.components[0].centroid_x + cs.components[1].centroid_x == doctest::Approx(127.0));
}

TEST_CASE("segment with a zero model") {
  const auto config = testmodels::small_config();
  const auto model = topformer::Model::build(config, topformer::make_bundle(config, topformer::BundleInit::zeros));
  const RgbImage img = noise_image(300, 260, 11);
  const auto r = segment(model, img, SegmentationParams{});
  CHECK(r.mask.popcount() == 0);
  CHECK(r.components.empty());
  CHECK(r.crop_rect == CropRect{38, 18, 224, 224, 1.0});
  CHECK(r.latency_ms >= 0);
  CHECK(r.prob_map.shape() == Shape{1, 1, 224, 224});

  SegmentationParams bad;
  bad.threshold = 1.0;
  CHECK_THROWS_AS(segment(model, img, bad), Error);
  bad = {};
  bad.connectivity = 6;
  CHECK_THROWS_AS(segment(model, img, bad), Error);
}

TEST_CASE("segment is deterministic and mask follows prob_map") {
  const auto config = testmodels::small_config();
  const auto model = topformer::Model::build(config, topformer::make_bundle(config, topformer::BundleInit::random, 3));
  const RgbImage img = noise_image(240, 240, 12);
  SegmentationParams params;
  params.threshold = 0.5;
  const auto a = segment(model, img, params);
  const auto b = segment(model, img, params);
  CHECK(a.prob_map == b.prob_map);
  CHECK(a.mask == b.mask);
  CHECK(a.mask == threshold_mask(a.prob_map, 0.5));
  std::size_t kept = 0;
  for (const auto& c : a.components) kept += c.pixel_count;
  CHECK(kept + a.dropped_px == a.mask.popcount());
}

TEST_CASE("overlay rendering") {
  const RgbImage img = noise_image(300, 260, 13);
  SegmentationResult r;
  r.crop_rect = crop_rect_for(300, 260);
  r.mask = Mask(224, 224);
  CHECK(render_overlay(img, r, FeedbackMode::a_posteriori) == img);

  fill_rect(r.mask, 0, 0, 224, 224);
  CHECK(render_overlay(img, r, FeedbackMode::basic) == img);

  const RgbImage out = render_overlay(img, r, FeedbackMode::live);
  const CropRect& c = r.crop_rect;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const bool inside = x >= c.x && x < c.x + c.width && y >= c.y && y < c.y + c.height;
      const bool ring = inside && (x == c.x || y == c.y || x == c.x + c.width - 1 || y == c.y + c.height - 1);
      const auto* got = out.at(x, y);
      if (ring) {
        CHECK((got[0] == 0 && got[1] == 255 && got[2] == 0));
      } else {
        CHECK(std::equal(got, got + 3, img.at(x, y)));
      }
    }
  }
}

TEST_CASE("overlay on an upscaled crop marks only its outer ring") {
  const RgbImage img = noise_image(80, 120, 14);
  SegmentationResult r;
  r.crop_rect = crop_rect_for(80, 120);
  r.mask = Mask(224, 224);
  fill_rect(r.mask, 0, 0, 224, 224);
  const RgbImage out = render_overlay(img, r, FeedbackMode::a_posteriori);
  std::size_t painted = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) painted += !std::equal(out.at(x, y), out.at(x, y) + 3, img.at(x, y));
  CHECK(painted <= 4 * 80 - 4);
  CHECK(painted >= 4 * 80 - 4 - 8);
  CHECK(out.at(0, 20)[1] == 255);
  CHECK(std::equal(out.at(40, 60), out.at(40, 60) + 3, img.at(40, 60)));
}

TEST_CASE("live loop matches the tick simulation") {
  for (auto [frames, interval, inference] : {std::tuple{10, 100, 250}, std::tuple{10, 100, 10}, std::tuple{1, 33, 500},
                                             std::tuple{25, 40, 95}, std::tuple{12, 50, 50}, std::tuple{30, 7, 61}}) {
    CAPTURE(frames);
    CAPTURE(interval);
    CAPTURE(inference);
    VirtualClock clock;
    SyntheticFrameSource source(static_cast<std::size_t>(frames), interval, 16, 16);
    LiveLoopStats stats;
    const auto results = live_loop(source, fake_inference(clock, inference), clock, &stats);
    const auto want = simulate_live(static_cast<std::size_t>(frames), interval, inference);
    REQUIRE(results.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(results[i].frame_index == want[i].index);
      CHECK(results[i].skipped == !want[i].processed);
      CHECK(results[i].result.has_value() == want[i].processed);
    }
    CHECK(stats.max_pending <= 1);
    CHECK(stats.processed + stats.skipped == static_cast<std::size_t>(frames));
  }
}

TEST_CASE("live loop examples") {
  SUBCASE("slow inference skips between every processed pair") {
    VirtualClock clock;
    SyntheticFrameSource source(10, 100, 8, 8);
    const auto results = live_loop(source, fake_inference(clock, 250), clock);
    std::vector<std::size_t> processed;
    for (const auto& r : results)
      if (!r.skipped) processed.push_back(r.frame_index);
    for (std::size_t i = 1; i < processed.size(); ++i) CHECK(processed[i] - processed[i - 1] >= 2);
    const double total = 9 * 100 + 250;
    CHECK(processed.size() == static_cast<std::size_t>(std::ceil(total / 250.0)));
  }
  SUBCASE("fast inference never skips") {
    VirtualClock clock;
    SyntheticFrameSource source(10, 100, 8, 8);
    for (const auto& r : live_loop(source, fake_inference(clock, 10), clock)) CHECK_FALSE(r.skipped);
  }
  SUBCASE("single and empty sources") {
    VirtualClock clock;
    SyntheticFrameSource one(1, 100, 8, 8);
    const auto r = live_loop(one, fake_inference(clock, 10), clock);
    REQUIRE(r.size() == 1);
    CHECK_FALSE(r[0].skipped);
    SyntheticFrameSource none(0, 100, 8, 8);
    CHECK(live_loop(none, fake_inference(clock, 10), clock).empty());
  }
}

TEST_CASE("live loop with a real model") {
  const auto config = testmodels::small_config();
  const auto model = topformer::Model::build(config, testmodels::constant_logit_bundle(config, 4.0f));
  VirtualClock clock;
  SyntheticFrameSource source(3, 100, 224, 224);
  const auto results = live_loop(source, model, SegmentationParams{}, clock);
  REQUIRE(results.size() == 3);
  for (const auto& r : results) {
    REQUIRE(r.result);
    CHECK(r.result->mask.popcount() == 224u * 224u);
    REQUIRE(r.result->components.size() == 1);
  }
}

TEST_CASE("threaded live loop keeps the mailbox bounded") {
  SyntheticFrameSource source(12, 5, 8, 8);
  LiveLoopStats stats;
  const auto results = threaded_live_loop(
      source,
      [](const Frame&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(12));
        return SegmentationResult{};
      },
      &stats);
  REQUIRE(results.size() == 12);
  std::size_t last = 0;
  bool first = true;
  for (const auto& r : results) {
    if (r.skipped) {
      CHECK_FALSE(r.result.has_value());
      continue;
    }
    if (!first) CHECK(r.frame_index > last);
    last = r.frame_index;
    first = false;
  }
  CHECK_FALSE(results.back().skipped);
  CHECK(stats.processed >= 1);
  CHECK(stats.processed + stats.skipped == 12);
}

TEST_CASE("directory frame source") {
  const auto dir = std::filesystem::temp_directory_path() / "woundcare_frames_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 3; ++i) write_file(dir / ("f" + std::to_string(i) + ".png"), encode_png(noise_image(5, 4, i)));
  write_file(dir / "notes.txt", std::vector<std::uint8_t>{'x'});
  DirectoryFrameSource src(dir, 40);
  CHECK(src.size() == 3);
  for (int i = 0; i < 3; ++i) {
    auto f = src.next();
    REQUIRE(f);
    CHECK(f->index == static_cast<std::size_t>(i));
    CHECK(f->timestamp_ms == doctest::Approx(40.0 * i));
    CHECK(f->image == noise_image(5, 4, i));
  }
  CHECK_FALSE(src.next());
  std::filesystem::remove_all(dir);
}
