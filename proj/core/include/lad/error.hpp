#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace lad {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string format_msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(format_msg(args...));
}

}  // namespace lad

#define LAD_CHECK(cond, ...)                                    \
  do {                                                          \
    if (!(cond)) ::lad::fail("check failed: ", __VA_ARGS__);    \
  } while (0)
