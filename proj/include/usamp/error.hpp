#ifndef USAMP_ERROR_HPP
#define USAMP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace usamp {

// Coarse failure classes; the CLI maps them onto exit codes.
enum class ErrorKind { usage, data, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) {
  return Error(ErrorKind::usage, what);
}
inline Error data_error(const std::string& what) {
  return Error(ErrorKind::data, what);
}
inline Error runtime_error(const std::string& what) {
  return Error(ErrorKind::runtime, what);
}

}  // namespace usamp

#endif  // USAMP_ERROR_HPP
