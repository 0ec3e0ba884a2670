#pragma once

#include <vector>

#include "lad/nn.hpp"
#include "lad/tensor.hpp"

namespace lad {

// AdamW with decoupled weight decay and bias correction.
class AdamW {
 public:
  AdamW(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.01)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  // Applies one update. Every parameter must have a gradient in `grads`
  // (the training loop fills genuinely unused parameters with zeros).
  void step(ParamSet& params, const GradStore& grads);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, wd_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Adds zero gradients for parameters missing from the store.
void fill_missing_grads(const ParamSet& params, GradStore& grads);

}  // namespace lad
