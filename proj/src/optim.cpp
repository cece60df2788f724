#include "zslmetric/optim.hpp"

#include <cmath>

#include "zslmetric/errors.hpp"

namespace zslmetric {

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0.0) throw ParamError("adam: learning rate must be positive");
  for (const auto& p : params_) {
    if (!p.tracked()) throw ContractError("adam: parameters must be tracked leaves");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    if (!params_[p].has_grad()) {
      throw ContractError("adam: parameter " + std::to_string(p) +
                          " has no gradient; run backward first");
    }
    auto g = params_[p].grad();
    auto& vals = params_[p].mutable_values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double gi = grad_scale * g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      vals[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

}  // namespace zslmetric
