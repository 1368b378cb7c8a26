#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace lungcrowd::log {

inline std::atomic<bool>& quiet_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void set_quiet(bool quiet) { quiet_flag() = quiet; }

inline void warn(std::string_view message) {
  if (!quiet_flag()) std::cerr << "warning: " << message << '\n';
}

inline void info(std::string_view message) {
  if (!quiet_flag()) std::cerr << message << '\n';
}

}  // namespace lungcrowd::log
