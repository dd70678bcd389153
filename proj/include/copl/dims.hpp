#pragma once

#include <algorithm>

namespace copl {

/// Dimensions shared across the prompt learner and the frozen encoders.
/// token_dim, patch_dim and joint_dim are independent knobs (the token,
/// patch-feature and joint embedding spaces are distinct in general).
struct ModelDims {
  int prompt_len = 4;  // M, number of learnable context tokens
  int token_dim = 16;  // d
  int patch_dim = 16;  // d_img
  int joint_dim = 16;  // d_joint

  int stub_hidden() const { return 4 * joint_dim; }
  int meta_hidden() const { return std::max(token_dim / 16, 4); }
};

}  // namespace copl
