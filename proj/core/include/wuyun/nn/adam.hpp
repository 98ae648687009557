#pragma once

#include <cmath>
#include <vector>

#include "wuyun/nn/model.hpp"

namespace wuyun::nn {

/// Adam over a ParamStore, defaults from the training recipe
/// (beta1 = 0.9, beta2 = 0.98, lr = 1e-3).
template <class T>
class Adam {
  public:
    Adam(const ParamStore<T>& params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.98,
         double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.resize(params.entries.size());
        v_.resize(params.entries.size());
        for (size_t i = 0; i < params.entries.size(); ++i) {
            m_[i].assign(params.entries[i].tensor.numel(), T(0));
            v_[i].assign(params.entries[i].tensor.numel(), T(0));
        }
    }

    void step(ParamStore<T>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (size_t i = 0; i < params.entries.size(); ++i) {
            auto& tensor = params.entries[i].tensor;
            auto& value = tensor.value();
            const auto& grad = tensor.grad();
            for (size_t j = 0; j < value.size(); ++j) {
                const double g = double(grad[j]);
                m_[i][j] = T(beta1_ * double(m_[i][j]) + (1.0 - beta1_) * g);
                v_[i][j] = T(beta2_ * double(v_[i][j]) + (1.0 - beta2_) * g * g);
                const double mhat = double(m_[i][j]) / bc1;
                const double vhat = double(v_[i][j]) / bc2;
                value[j] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    long steps_taken() const { return t_; }
    double learning_rate() const { return lr_; }
    std::vector<std::vector<T>>& m() { return m_; }
    std::vector<std::vector<T>>& v() { return v_; }
    void set_steps_taken(long t) { t_ = t; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace wuyun::nn
