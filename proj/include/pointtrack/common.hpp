#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pointtrack {

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct param_error : std::runtime_error {
    explicit param_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct version_error : io_error {
    explicit version_error(const std::string& msg) : io_error(msg) {}
};

struct corrupt_error : io_error {
    explicit corrupt_error(const std::string& msg) : io_error(msg) {}
};

struct capacity_error : std::runtime_error {
    explicit capacity_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct stream_error : std::runtime_error {
    explicit stream_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void format_into(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string format_msg(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

}  // namespace pointtrack

#define PTK_CHECK(cond, ...)                                                          \
    do {                                                                              \
        if (!(cond))                                                                  \
            throw std::runtime_error(::pointtrack::format_msg("check failed: ", __VA_ARGS__)); \
    } while (0)

#define PTK_CHECK_SHAPE(cond, ...)                                                    \
    do {                                                                              \
        if (!(cond))                                                                  \
            throw ::pointtrack::shape_error(::pointtrack::format_msg(__VA_ARGS__));   \
    } while (0)

#define PTK_CHECK_PARAM(cond, ...)                                                    \
    do {                                                                              \
        if (!(cond))                                                                  \
            throw ::pointtrack::param_error(::pointtrack::format_msg(__VA_ARGS__));   \
    } while (0)
