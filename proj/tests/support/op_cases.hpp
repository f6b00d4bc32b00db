#pragma once

#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace hiercas::testing {

struct OpCase {
  std::string name;
  GraphFn fn;
  std::vector<ad::Tensor> inputs;
};

/// One gradient-check case per differentiable tape operation.
std::vector<OpCase> op_gradient_cases();

}  // namespace hiercas::testing
