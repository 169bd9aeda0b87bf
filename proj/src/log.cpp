#include "urbangen/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace urbangen {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink_slot() {
  static LogSink sink = [](LogLevel level, std::string_view msg) {
    if (level == LogLevel::kWarning) std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

void emit(LogLevel level, std::string_view message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  if (sink_slot()) sink_slot()(level, message);
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  return std::exchange(sink_slot(), std::move(sink));
}

void log_info(std::string_view message) { emit(LogLevel::kInfo, message); }
void log_warning(std::string_view message) { emit(LogLevel::kWarning, message); }

}  // namespace urbangen
