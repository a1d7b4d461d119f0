#pragma once

#include <doctest.h>

#include <functional>
#include <string>

#include "lsplit/error.hpp"

namespace lsplit::testing {

// Code of the lsplit::Error thrown by `fn`; fails the test when none is thrown.
inline ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an lsplit::Error");
  return ErrorCode::IoError;
}

inline std::string detail_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.detail();
  }
  FAIL("expected an lsplit::Error");
  return {};
}

}  // namespace lsplit::testing
