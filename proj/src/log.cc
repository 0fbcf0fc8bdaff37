// src/log.cc

#include "joinss/log.h"

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

namespace joinss {

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = std::make_shared<spdlog::logger>("joinss", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_pattern("[joinss %l] %v");
    spdlog::level::level_enum level = spdlog::level::warn;
    if (const char* env = std::getenv("JOINSS_LOG")) level = spdlog::level::from_str(env);
    l->set_level(level);
    return l;
  }();
  return *logger;
}

}  // namespace joinss
