#include "lad/optim.hpp"

#include <cmath>

namespace lad {

void AdamW::step(ParamSet& params, const GradStore& grads) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const int64_t n = params.items()[i].second.size();
      m_[i].assign(static_cast<size_t>(n), 0.0);
      v_[i].assign(static_cast<size_t>(n), 0.0);
    }
  }
  LAD_CHECK(m_.size() == params.size(),
            "AdamW: parameter set size changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params.items()[i];
    const std::vector<double>* g = grads.find(p);
    LAD_CHECK(g != nullptr, "AdamW: missing gradient for parameter ", name);
    LAD_CHECK(static_cast<int64_t>(g->size()) == p.size(),
              "AdamW: gradient size ", g->size(), " vs parameter ", name, " size ",
              p.size());
    auto& vals = const_cast<Tensor&>(p).vals();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t e = 0; e < vals.size(); ++e) {
      const double ge = (*g)[e];
      m[e] = beta1_ * m[e] + (1.0 - beta1_) * ge;
      v[e] = beta2_ * v[e] + (1.0 - beta2_) * ge * ge;
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      vals[e] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * vals[e]);
    }
  }
}

void fill_missing_grads(const ParamSet& params, GradStore& grads) {
  for (const auto& [name, p] : params.items()) {
    if (!grads.find(p)) {
      std::vector<double> zeros(static_cast<size_t>(p.size()), 0.0);
      grads.add(p.impl(), zeros.data(), p.size());
    }
  }
}

}  // namespace lad
