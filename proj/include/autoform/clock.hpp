#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>

namespace autoform {

/// Time source abstraction. The production clock sleeps for real; the
/// virtual clock advances instantly so rate-limit and backoff behavior
/// can be asserted without waiting.
class Clock {
public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
  virtual void sleep_ms(std::int64_t ms) = 0;
};

class SystemClock : public Clock {
public:
  std::int64_t now_ms() override;
  void sleep_ms(std::int64_t ms) override;
};

class VirtualClock : public Clock {
public:
  explicit VirtualClock(std::int64_t start_ms = 0) : now_(start_ms) {}
  std::int64_t now_ms() override;
  void sleep_ms(std::int64_t ms) override;
  void advance_ms(std::int64_t ms);

private:
  std::mutex mu_;
  std::int64_t now_;
};

/// Process-wide default clock (a SystemClock).
Clock& system_clock();

/// Wall-clock timestamp in milliseconds since the epoch, for log records.
std::int64_t wall_time_ms();

}  // namespace autoform
