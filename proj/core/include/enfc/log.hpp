#pragma once

#include <spdlog/spdlog.h>

namespace enfc {

/// Library logger writing to stderr. Level comes from the ENFC_LOG environment
/// variable (trace, debug, info, warn, error, off); default is warn.
spdlog::logger& logger();

}  // namespace enfc
