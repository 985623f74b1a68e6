#include "htp/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>
#include <string>

namespace htp::log {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_mutex;
std::set<std::string, std::less<>> g_seen;
}  // namespace

void warn(std::string_view message) {
    if (g_quiet.load()) return;
    std::lock_guard lock(g_mutex);
    std::cerr << "warning: " << message << '\n';
}

void warn_once(std::string_view key, std::string_view message) {
    {
        std::lock_guard lock(g_mutex);
        if (!g_seen.emplace(key).second) return;
    }
    warn(message);
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }

}  // namespace htp::log
