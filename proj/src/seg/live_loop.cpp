#include "woundcare/seg/live_loop.hpp"

#include <cmath>
#include <thread>

#include "woundcare/error.hpp"

namespace woundcare::seg {
namespace {

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

FrameResult skipped_result(const Frame& f) {
  FrameResult r;
  r.frame_index = f.index;
  r.timestamp_ms = f.timestamp_ms;
  r.skipped = true;
  return r;
}

void finish(std::vector<FrameResult>& results, LiveLoopStats* stats) {
  std::sort(results.begin(), results.end(),
            [](const FrameResult& a, const FrameResult& b) { return a.frame_index < b.frame_index; });
  if (!stats) return;
  for (const FrameResult& r : results) {
    if (r.skipped) {
      ++stats->skipped;
    } else {
      ++stats->processed;
      stats->latencies_ms.push_back(r.finished_ms - r.started_ms);
    }
  }
}

}  // namespace

DirectoryFrameSource::DirectoryFrameSource(const std::filesystem::path& dir, double interval_ms)
    : interval_ms_(interval_ms) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::not_found, "not a directory: " + dir.string());
  if (!(interval_ms >= 0)) throw_invalid("frame interval must be >= 0");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files_.push_back(entry.path());
  }
  std::sort(files_.begin(), files_.end());
}

std::optional<Frame> DirectoryFrameSource::next() {
  if (cursor_ >= files_.size()) return std::nullopt;
  Frame f;
  f.index = cursor_;
  f.timestamp_ms = static_cast<double>(cursor_) * interval_ms_;
  f.image = load_image(files_[cursor_]);
  ++cursor_;
  return f;
}

SyntheticFrameSource::SyntheticFrameSource(std::size_t count, double interval_ms, int width, int height)
    : count_(count), interval_ms_(interval_ms), width_(width), height_(height) {
  if (width < 1 || height < 1) throw_invalid("synthetic frame extent must be positive");
}

std::optional<Frame> SyntheticFrameSource::next() {
  if (cursor_ >= count_) return std::nullopt;
  Frame f;
  f.index = cursor_;
  f.timestamp_ms = static_cast<double>(cursor_) * interval_ms_;
  f.image = RgbImage(width_, height_);
  const double r = std::min(width_, height_) / 6.0;
  const double cx = width_ / 2.0 + (width_ / 4.0) * std::sin(0.3 * static_cast<double>(cursor_));
  const double cy = height_ / 2.0;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      auto* p = f.image.at(x, y);
      const bool inside = std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r;
      p[0] = inside ? 120 : 224;
      p[1] = inside ? 30 : 180;
      p[2] = inside ? 40 : 160;
    }
  }
  ++cursor_;
  return f;
}

SteadyClock::SteadyClock() : origin_(std::chrono::steady_clock::now()) {}

double SteadyClock::now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_).count();
}

void SteadyClock::sleep_until_ms(double t) {
  std::this_thread::sleep_until(origin_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                              std::chrono::duration<double, std::milli>(t)));
}

std::vector<FrameResult> live_loop(FrameSource& source, const FrameProcessor& process, Clock& clock,
                                   LiveLoopStats* stats) {
  std::vector<FrameResult> results;
  LatestMailbox<Frame> mailbox;
  std::optional<Frame> upcoming = source.next();
  std::size_t max_pending = 0;
  const double origin = clock.now_ms();

  for (;;) {
    const double now = clock.now_ms() - origin;
    while (upcoming && upcoming->timestamp_ms <= now) {
      if (auto displaced = mailbox.put(std::move(*upcoming))) results.push_back(skipped_result(*displaced));
      max_pending = 1;
      upcoming = source.next();
    }
    std::optional<Frame> frame = mailbox.try_take();
    if (!frame) {
      if (!upcoming) break;
      clock.sleep_until_ms(origin + upcoming->timestamp_ms);
      continue;
    }
    FrameResult r;
    r.frame_index = frame->index;
    r.timestamp_ms = frame->timestamp_ms;
    r.started_ms = clock.now_ms() - origin;
    r.result = process(*frame);
    r.finished_ms = clock.now_ms() - origin;
    results.push_back(std::move(r));
  }
  finish(results, stats);
  if (stats) stats->max_pending = std::max(stats->max_pending, max_pending);
  return results;
}

std::vector<FrameResult> live_loop(FrameSource& source, const topformer::Model& model,
                                   const SegmentationParams& params, Clock& clock, LiveLoopStats* stats) {
  params.validate();
  return live_loop(
      source, [&](const Frame& f) { return segment(model, f.image, params); }, clock, stats);
}

std::vector<FrameResult> threaded_live_loop(FrameSource& source, const FrameProcessor& process,
                                            LiveLoopStats* stats) {
  LatestMailbox<Frame> mailbox;
  std::mutex results_mu;
  std::vector<FrameResult> results;
  SteadyClock clock;
  std::exception_ptr producer_error;

  std::thread producer([&] {
    try {
      while (auto f = source.next()) {
        clock.sleep_until_ms(f->timestamp_ms);
        if (mailbox.closed()) break;
        if (auto displaced = mailbox.put(std::move(*f))) {
          std::lock_guard lock(results_mu);
          results.push_back(skipped_result(*displaced));
        }
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    mailbox.close();
  });

  std::exception_ptr consumer_error;
  try {
    while (auto frame = mailbox.take()) {
      FrameResult r;
      r.frame_index = frame->index;
      r.timestamp_ms = frame->timestamp_ms;
      r.started_ms = clock.now_ms();
      r.result = process(*frame);
      r.finished_ms = clock.now_ms();
      std::lock_guard lock(results_mu);
      results.push_back(std::move(r));
    }
  } catch (...) {
    consumer_error = std::current_exception();
    mailbox.close();
  }
  producer.join();
  if (consumer_error) std::rethrow_exception(consumer_error);
  if (producer_error) std::rethrow_exception(producer_error);
  finish(results, stats);
  if (stats) stats->max_pending = std::max<std::size_t>(stats->max_pending, 1);
  return results;
}

}  // namespace woundcare::seg
