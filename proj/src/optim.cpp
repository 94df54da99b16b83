#include "sma/optim.hpp"

#include <cmath>
#include <string>

namespace sma {

namespace {

void check_shapes(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                  const char* who) {
    if (params.size() != grads.size()) {
        throw ShapeError(std::string(who) + ": param/grad count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
            throw ShapeError(std::string(who) + ": shape mismatch at parameter " +
                             std::to_string(i));
        }
        if (!grads[i]->all_finite()) {
            throw NumericError(std::string(who) + ": non-finite gradient at parameter " +
                               std::to_string(i) + "; step rejected");
        }
    }
}

double sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

void LionOptimizer::step(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads) {
    check_shapes(params, grads, "lion_step");
    if (momentum_.empty()) {
        for (const Matrix* p : params) momentum_.emplace_back(p->rows(), p->cols());
    }
    if (momentum_.size() != params.size()) {
        throw ShapeError("lion_step: parameter list changed size across steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        Matrix& m = momentum_[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gv = g.data()[k];
            const double mv = m.data()[k];
            const double c = cfg_.beta1 * mv + (1.0 - cfg_.beta1) * gv;
            const double pv = p.data()[k];
            p.data()[k] = static_cast<float>(
                pv - cfg_.lr * (sign_of(c) + cfg_.weight_decay * pv));
            m.data()[k] = static_cast<float>(cfg_.beta2 * mv + (1.0 - cfg_.beta2) * gv);
        }
    }
    ++step_count_;
}

void SgdOptimizer::step(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads) {
    check_shapes(params, grads, "sgd_step");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            p.data()[k] = static_cast<float>(p.data()[k] - cfg_.lr * g.data()[k]);
        }
    }
    ++step_count_;
}

}  // namespace sma
