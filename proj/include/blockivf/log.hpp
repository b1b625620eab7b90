#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace blockivf {

// Verbosity comes from BLOCKIVF_LOG (quiet|warn|info|debug), nothing else.
inline int log_level() {
    static const int level = [] {
        const char* env = std::getenv("BLOCKIVF_LOG");
        if (!env) return 1;
        if (std::strcmp(env, "quiet") == 0) return 0;
        if (std::strcmp(env, "info") == 0) return 2;
        if (std::strcmp(env, "debug") == 0) return 3;
        return 1;
    }();
    return level;
}

template <class... Args>
void log_warn(const char* fmt, Args... args) {
    if (log_level() >= 1) {
        std::fprintf(stderr, "[blockivf] ");
        std::fprintf(stderr, fmt, args...);
        std::fprintf(stderr, "\n");
    }
}

template <class... Args>
void log_info(const char* fmt, Args... args) {
    if (log_level() >= 2) {
        std::fprintf(stderr, "[blockivf] ");
        std::fprintf(stderr, fmt, args...);
        std::fprintf(stderr, "\n");
    }
}

}  // namespace blockivf
