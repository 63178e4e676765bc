#pragma once

#include <gtest/gtest.h>

#include "generators.hpp"

namespace testutil {

template <class Fn>
missurv::ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const missurv::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a missurv::Error";
  return missurv::ErrorCode::InvalidArgument;
}

}  // namespace testutil
