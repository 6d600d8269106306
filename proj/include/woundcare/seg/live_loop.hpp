#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "woundcare/seg/pipeline.hpp"

namespace woundcare::seg {

struct Frame {
  std::size_t index = 0;
  double timestamp_ms = 0;
  RgbImage image;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Frames come out in timestamp order; nullopt when exhausted.
  virtual std::optional<Frame> next() = 0;
};

/// Every PNG/JPEG in a directory, sorted by file name, spaced `interval_ms` apart.
class DirectoryFrameSource : public FrameSource {
 public:
  DirectoryFrameSource(const std::filesystem::path& dir, double interval_ms);
  std::optional<Frame> next() override;
  std::size_t size() const noexcept { return files_.size(); }

 private:
  std::vector<std::filesystem::path> files_;
  double interval_ms_;
  std::size_t cursor_ = 0;
};

/// Synthetic frames: a dark disk drifting across a skin-toned background.
class SyntheticFrameSource : public FrameSource {
 public:
  SyntheticFrameSource(std::size_t count, double interval_ms, int width = 224, int height = 224);
  std::optional<Frame> next() override;

 private:
  std::size_t count_;
  double interval_ms_;
  int width_, height_;
  std::size_t cursor_ = 0;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() = 0;
  virtual void sleep_until_ms(double t) = 0;
};

class SteadyClock : public Clock {
 public:
  SteadyClock();
  double now_ms() override;
  void sleep_until_ms(double t) override;

 private:
  std::chrono::steady_clock::time_point origin_;
};

/// Time only moves when told to; thread-compatible, not thread-safe.
class VirtualClock : public Clock {
 public:
  double now_ms() override { return now_; }
  void sleep_until_ms(double t) override { now_ = std::max(now_, t); }
  void advance(double ms) { now_ += ms; }

 private:
  double now_ = 0;
};

/// One-slot latest-wins mailbox. put() returns the frame it displaced, if any.
template <typename T>
class LatestMailbox {
 public:
  std::optional<T> put(T value) {
    std::optional<T> displaced;
    {
      std::lock_guard lock(mu_);
      if (closed_) return value;
      displaced = std::move(slot_);
      slot_ = std::move(value);
    }
    cv_.notify_one();
    return displaced;
  }

  std::optional<T> try_take() {
    std::lock_guard lock(mu_);
    std::optional<T> out = std::move(slot_);
    slot_.reset();
    return out;
  }

  /// Blocks until a value arrives or the mailbox is closed and drained.
  std::optional<T> take() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return slot_.has_value() || closed_; });
    std::optional<T> out = std::move(slot_);
    slot_.reset();
    return out;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  bool empty() const {
    std::lock_guard lock(mu_);
    return !slot_.has_value();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<T> slot_;
  bool closed_ = false;
};

struct FrameResult {
  std::size_t frame_index = 0;
  double timestamp_ms = 0;
  bool skipped = false;
  std::optional<SegmentationResult> result;
  double started_ms = 0;
  double finished_ms = 0;
};

struct LiveLoopStats {
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::size_t max_pending = 0;
  std::vector<double> latencies_ms;
};

using FrameProcessor = std::function<SegmentationResult(const Frame&)>;

/// Single-consumer loop driven by `clock`. A frame whose timestamp is <= now when the consumer
/// becomes idle counts as arrived; only the newest arrived frame is processed.
std::vector<FrameResult> live_loop(FrameSource& source, const FrameProcessor& process, Clock& clock,
                                   LiveLoopStats* stats = nullptr);

std::vector<FrameResult> live_loop(FrameSource& source, const topformer::Model& model,
                                   const SegmentationParams& params, Clock& clock, LiveLoopStats* stats = nullptr);

/// Real-time variant: a producer thread releases frames on the wall clock into the mailbox.
std::vector<FrameResult> threaded_live_loop(FrameSource& source, const FrameProcessor& process,
                                            LiveLoopStats* stats = nullptr);

}  // namespace woundcare::seg
