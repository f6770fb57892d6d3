#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace sgsln {

// Library-wide exception type. Everything thrown inside sgsln derives from
// this so the C boundary can translate it into an error code + message.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void str_append(std::ostringstream&) {}
template <class T, class... Rest>
void str_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  str_append(os, rest...);
}
}  // namespace detail

template <class... Args>
std::string str(const Args&... args) {
  std::ostringstream os;
  detail::str_append(os, args...);
  return os.str();
}

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(str(args...));
}

template <class... Args>
void check(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

}  // namespace sgsln
