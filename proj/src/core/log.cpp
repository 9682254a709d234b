#include "log.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

#include "parallel.hpp"

namespace typoprobe {

namespace {
std::atomic<bool> g_quiet{false};
std::mutex g_log_mutex;
}  // namespace

void set_log_quiet(bool quiet) noexcept { g_quiet.store(quiet); }

bool log_quiet() noexcept { return g_quiet.load(); }

void log_event(std::string_view level, std::string_view event, nlohmann::json fields) {
    if (g_quiet.load() && level != "error") return;
    nlohmann::json line = {{"level", level}, {"event", event}};
    if (fields.is_object()) {
        for (auto& [k, v] : fields.items()) line[k] = v;
    }
    const std::string text = line.dump() + "\n";
    std::lock_guard lock(g_log_mutex);
    std::fwrite(text.data(), 1, text.size(), stderr);
    std::fflush(stderr);
}

std::size_t resolve_thread_count(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("TYPOPROBE_THREADS")) {
        std::size_t n = 0;
        const std::string_view s(env);
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
        if (ec == std::errc{} && ptr == s.data() + s.size() && n > 0) return n;
    }
    const auto hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

}  // namespace typoprobe
