#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "pfcvr/autograd.hpp"
#include "pfcvr/config.hpp"

namespace pfcvr {

// Adam with per-group learning rates. Only parameters bound to the current
// tape are updated, so modules outside the active graph stay untouched.
class Adam {
  public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const ag::Tape& tape, const std::array<double, 2>& group_lr) {
        for (const auto& [param, node] : tape.bound_params()) {
            check(node->requires_grad, "Adam::step: bound param without gradient");
            Param& p = *param;
            const Mat& g = node->grad;
            check(g.same_shape(p.value), "Adam::step: gradient shape mismatch");
            p.adam_t += 1;
            double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(p.adam_t));
            double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(p.adam_t));
            double lr = group_lr[static_cast<size_t>(p.group)];
            for (size_t i = 0; i < p.value.size(); ++i) {
                double gi = g.data[i];
                p.m.data[i] = beta1_ * p.m.data[i] + (1.0 - beta1_) * gi;
                p.v.data[i] = beta2_ * p.v.data[i] + (1.0 - beta2_) * gi * gi;
                double mhat = p.m.data[i] / bc1;
                double vhat = p.v.data[i] / bc2;
                p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

  private:
    double beta1_, beta2_, eps_;
};

// Linear warmup from warmup_start_lr to `target` over warmup_epochs, then
// cosine decay to zero at `epochs`. `epoch_float` is epoch + in-epoch progress.
inline double scheduled_lr(const RunConfig& rc, double target, double epoch_float) {
    check(epoch_float >= 0.0, "scheduled_lr: negative epoch");
    double w = static_cast<double>(rc.warmup_epochs);
    if (epoch_float < w)
        return rc.warmup_start_lr + (target - rc.warmup_start_lr) * (epoch_float / w);
    double span = static_cast<double>(rc.epochs) - w;
    if (span <= 0.0) return target;
    double p = (epoch_float - w) / span;
    if (p > 1.0) p = 1.0;
    return target * 0.5 * (1.0 + std::cos(M_PI * p));
}

inline std::array<double, 2> scheduled_group_lrs(const RunConfig& rc, double epoch_float) {
    return {scheduled_lr(rc, rc.base_lr, epoch_float), scheduled_lr(rc, rc.module_lr, epoch_float)};
}

}  // namespace pfcvr
