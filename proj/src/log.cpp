#include "gnf/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace gnf {
namespace {

// function-local so a sink installed during static initialization survives
struct SinkState {
  std::mutex mutex;
  LogSink sink;
};

SinkState& state() {
  static SinkState s;
  return s;
}

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  SinkState& s = state();
  std::lock_guard<std::mutex> lock(s.mutex);
  return std::exchange(s.sink, std::move(sink));
}

void log_warning(const std::string& message) {
  SinkState& s = state();
  std::lock_guard<std::mutex> lock(s.mutex);
  if (s.sink) {
    s.sink(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace gnf
