#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpqa/tensor.hpp"

namespace hpqa {

// Trainable tensor with its gradient buffer and adaptive-moment state.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;
    Matrix v;
    std::int64_t step = 0;

    Param() = default;
    Param(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols), m(rows, cols), v(rows, cols) {}

    void zero_grad() { grad.zero(); }
    void reset_optimizer() {
        m.zero();
        v.zero();
        step = 0;
    }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// One AdamW step (decoupled weight decay). Throws on non-finite gradients.
void adamw_step(Param& p, const AdamConfig& cfg);

}  // namespace hpqa
