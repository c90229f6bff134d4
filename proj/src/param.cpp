#include "hpqa/param.hpp"

#include <cmath>

#include "hpqa/error.hpp"

namespace hpqa {

void adamw_step(Param& p, const AdamConfig& cfg) {
    ++p.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
        double g = p.grad.data[i];
        if (!std::isfinite(g))
            throw RuntimeFault("non-finite gradient in " + p.name + " at flat index " +
                               std::to_string(i));
        p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
        p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
        double mhat = p.m.data[i] / bc1;
        double vhat = p.v.data[i] / bc2;
        p.value.data[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                     cfg.weight_decay * p.value.data[i]);
    }
}

}  // namespace hpqa
