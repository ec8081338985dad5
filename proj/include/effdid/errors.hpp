#pragma once

#include <stdexcept>
#include <string>

namespace effdid {

// Library-wide error with a machine-readable code; the CLI maps codes to
// exit statuses and stderr messages.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

private:
  std::string code_;
};

} // namespace effdid
