#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace vp2p {

// Adam update rule, beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
    double lr = 1e-2;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    long step = 0;

    explicit AdamState(size_t size, double learning_rate)
        : lr(learning_rate), m(size, 0.0), v(size, 0.0) {}

    void update(double* params, const double* grad, size_t size) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, double(step));
        const double bc2 = 1.0 - std::pow(beta2, double(step));
        for (size_t i = 0; i < size; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

}  // namespace vp2p
