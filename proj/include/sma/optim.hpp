#pragma once

#include <vector>

#include "sma/core.hpp"

namespace sma {

struct OptimConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double weight_decay = 0.0;
};

// Per-parameter momentum buffers, zero-initialized, shape-locked to the
// parameter list handed to the first step.
class LionOptimizer {
   public:
    explicit LionOptimizer(OptimConfig cfg) : cfg_(cfg) {}

    // c = b1*m + (1-b1)*g;  p -= lr*(sign(c) + wd*p);  m = b2*m + (1-b2)*g.
    // sign(0) = 0. Throws NumericError on non-finite gradients (params are
    // left untouched).
    void step(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads);

    std::size_t step_count() const { return step_count_; }
    const OptimConfig& config() const { return cfg_; }

   private:
    OptimConfig cfg_;
    std::vector<Matrix> momentum_;
    std::size_t step_count_ = 0;
};

class SgdOptimizer {
   public:
    explicit SgdOptimizer(OptimConfig cfg) : cfg_(cfg) {}
    void step(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads);
    std::size_t step_count() const { return step_count_; }

   private:
    OptimConfig cfg_;
    std::size_t step_count_ = 0;
};

}  // namespace sma
