#ifndef ZSLMETRIC_OPTIM_HPP
#define ZSLMETRIC_OPTIM_HPP

#include <vector>

#include "zslmetric/tensor.hpp"

namespace zslmetric {

/// Adam over one parameter group. Parameters must carry fresh gradients
/// from the tape backward that preceded step().
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  /// One update; grad_scale premultiplies every gradient (used to apply a
  /// positive lambda to the classifier phase).
  void step(double grad_scale = 1.0);

  double lr() const { return lr_; }
  std::size_t param_count() const { return params_.size(); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace zslmetric

#endif  // ZSLMETRIC_OPTIM_HPP
