#include "onsep/log.hpp"

#include <iostream>
#include <mutex>

namespace onsep {

namespace {

std::mutex g_mutex;

WarningHandler& handler() {
    static WarningHandler h = [](std::string_view msg) { std::cerr << "onsep: warning: " << msg << '\n'; };
    return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler next) {
    std::lock_guard lock(g_mutex);
    auto prev = std::move(handler());
    handler() = std::move(next);
    return prev;
}

void warn(std::string_view message) {
    std::lock_guard lock(g_mutex);
    if (handler()) handler()(message);
}

}  // namespace onsep
