#pragma once

#include <stdexcept>
#include <string>

namespace sm4 {

// Bad input data or an inconsistent model file.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sm4
