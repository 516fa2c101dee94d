#pragma once

#include <vector>

#include "tsfm/tensor.hpp"

namespace tsfm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Holds first/second moments per
// parameter; parameters are updated in place.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  // grads must align one-to-one with the parameter list.
  void step(const std::vector<Tensor>& grads);

  int64_t step_count() const { return step_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  int64_t step_ = 0;
};

}  // namespace tsfm
