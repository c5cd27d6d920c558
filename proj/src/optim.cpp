#include "prunelab/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace prunelab {

void TrainingConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
    if (epochs <= 0) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size <= 0) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw std::invalid_argument("config: beta1/beta2 must lie in (0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
}

template <typename T>
void OptimizerState<T>::init(Network<T>& net) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : trainable_params(net)) {
        m.emplace_back(p.size, T(0));
        v.emplace_back(p.size, T(0));
    }
}

template <typename T>
bool OptimizerState<T>::matches(Network<T>& net) const {
    auto params = trainable_params(net);
    if (m.size() != params.size() || v.size() != params.size()) return false;
    for (size_t i = 0; i < params.size(); ++i)
        if (m[i].size() != params[i].size || v[i].size() != params[i].size) return false;
    return true;
}

template <typename T>
void optimizer_step(Network<T>& net, Gradients<T>& grads, OptimizerState<T>& state,
                    const TrainingConfig& cfg) {
    cfg.validate();
    auto params = trainable_params(net);
    if (!state.matches(net))
        throw std::invalid_argument("optimizer: state does not match network parameters");

    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = cfg.learning_rate;

    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        const T* g = grad_data(grads, p);
        if (!g)
            throw std::invalid_argument("optimizer: missing gradient for " + p.name);
        for (size_t i = 0; i < p.size; ++i)
            if (!std::isfinite(static_cast<double>(g[i])))
                throw std::runtime_error("optimizer: non-finite gradient in " + p.name);

        const bool decay =
            p.cls == ParamClass::ConvWeight || p.cls == ParamClass::DenseWeight;
        std::vector<T>& mm = state.m[pi];
        std::vector<T>& vv = state.v[pi];
        for (size_t i = 0; i < p.size; ++i) {
            const double gi = g[i];
            const double mi = b1 * static_cast<double>(mm[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(vv[i]) + (1.0 - b2) * gi * gi;
            mm[i] = static_cast<T>(mi);
            vv[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            double upd = mhat / (std::sqrt(vhat) + cfg.adam_eps);
            if (decay) upd += cfg.weight_decay * static_cast<double>(p.data[i]);
            p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - lr * upd);
        }
    }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void optimizer_step<float>(Network<float>&, Gradients<float>&, OptimizerState<float>&,
                                    const TrainingConfig&);
template void optimizer_step<double>(Network<double>&, Gradients<double>&,
                                     OptimizerState<double>&, const TrainingConfig&);

}  // namespace prunelab
