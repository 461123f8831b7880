#include "enfc/log.hpp"

#include <cstdlib>
#include <memory>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace enfc {

spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto l = spdlog::stderr_color_mt("enfc");
        l->set_pattern("[%l] %v");
        spdlog::level::level_enum level = spdlog::level::warn;
        if (const char* env = std::getenv("ENFC_LOG")) level = spdlog::level::from_str(env);
        l->set_level(level);
        return l;
    }();
    return *instance;
}

}  // namespace enfc
