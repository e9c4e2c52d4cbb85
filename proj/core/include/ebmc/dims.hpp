#pragma once

#include <cstddef>

namespace ebmc {

/// Layer widths shared by every network in the model.
struct ModelDims {
  std::size_t mlp_hidden = 16;     // hidden width of every two-layer perceptron
  std::size_t rep = 16;            // encoder output h
  std::size_t shared = 8;          // h_c
  std::size_t specific = 8;        // h_s
  std::size_t noise = 4;           // width of the enhancement noise input
  std::size_t fusion_hidden = 16;  // h_f, the z_fusion width
};

}  // namespace ebmc
