#include "tsfm/adam.hpp"

#include <cmath>

#include "tsfm/errors.hpp"

namespace tsfm {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size())
    raise(errc::shape_mismatch, "adam: gradient count does not match parameter count");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const Tensor& g = grads[i];
    if (!g.same_shape(p.value))
      raise(errc::shape_mismatch, "adam: gradient shape mismatch for " + p.name);
    double* theta = p.value.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const double* gd = g.data();
    const int64_t n = p.value.size();
    for (int64_t j = 0; j < n; ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gd[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gd[j] * gd[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace tsfm
