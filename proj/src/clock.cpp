#include "autoform/clock.hpp"

#include <thread>

namespace autoform {

std::int64_t SystemClock::now_ms() {
  auto d = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
}

void SystemClock::sleep_ms(std::int64_t ms) {
  if (ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }
}

std::int64_t VirtualClock::now_ms() {
  std::lock_guard<std::mutex> lock(mu_);
  return now_;
}

void VirtualClock::sleep_ms(std::int64_t ms) {
  advance_ms(ms);
}

void VirtualClock::advance_ms(std::int64_t ms) {
  if (ms <= 0) return;
  std::lock_guard<std::mutex> lock(mu_);
  now_ += ms;
}

Clock& system_clock() {
  static SystemClock clock;
  return clock;
}

std::int64_t wall_time_ms() {
  auto d = std::chrono::system_clock::now().time_since_epoch();
  return std::chrono::duration_cast<std::chrono::milliseconds>(d).count();
}

}  // namespace autoform
