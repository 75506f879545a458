// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "reno/nn/tensor.hpp"

namespace reno::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
public:
  Adam(std::vector<ParamTensor<T>*> params, AdamConfig config = {})
    : params_(std::move(params)), config_(config)
  {
    for (const ParamTensor<T>* p : params_) {
      m_.emplace_back(p->values.size(), 0.0);
      v_.emplace_back(p->values.size(), 0.0);
    }
  }

  /// Applies one bias-corrected update. A non-finite gradient anywhere
  /// leaves every parameter untouched and returns false.
  bool step()
  {
    for (const ParamTensor<T>* p : params_)
      for (T g : p->grad)
        if (!std::isfinite(g)) {
          ++skipped_;
          return false;
        }

    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      ParamTensor<T>& p = *params_[k];
      std::vector<double>& m = m_[k];
      std::vector<double>& v = v_[k];
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p.values[i] = static_cast<T>(static_cast<double>(p.values[i]) -
                                     config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
      }
    }
    return true;
  }

  void zero_grad()
  {
    for (ParamTensor<T>* p : params_)
      p->zero_grad();
  }

  std::int64_t steps() const noexcept { return t_; }
  std::int64_t skipped() const noexcept { return skipped_; }
  AdamConfig& config() noexcept { return config_; }

private:
  std::vector<ParamTensor<T>*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
  std::int64_t skipped_ = 0;
};

}  // namespace reno::nn
