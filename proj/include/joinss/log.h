// include/joinss/log.h
//
// Diagnostics go through spdlog on stderr. The level comes from the JOINSS_LOG
// environment variable (trace|debug|info|warn|error|off; default warn).

#pragma once

#include <spdlog/spdlog.h>

namespace joinss {

// Shared logger; configured on first use.
spdlog::logger& log();

}  // namespace joinss
