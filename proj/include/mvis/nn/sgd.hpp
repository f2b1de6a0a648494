#ifndef MVIS_NN_SGD_HPP_
#define MVIS_NN_SGD_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mvis/error.hpp"
#include "mvis/tensor.hpp"

namespace mvis::nn {

struct OptimizerState {
	std::vector<Tensor> velocity; ///< one per trainable tensor, lazily sized on the first step
	float learning_rate = 1e-4f;
	float momentum = 0.9f;
};

/**
 * Momentum SGD in the Keras form:
 *
 *     v <- momentum * v - lr * g
 *     w <- w + v
 *
 * Callers pass only trainable tensors; frozen ones never reach the optimizer.
 */
inline void sgd_momentum_step(std::span<const std::reference_wrapper<Tensor>> params, std::span<const Tensor> grads,
		OptimizerState& opt) {
	if (params.size() != grads.size())
		throw Error("shape mismatch: " + std::to_string(params.size()) + " parameters but "
				+ std::to_string(grads.size()) + " gradients");
	if (opt.velocity.empty())
		for (const auto& p : params)
			opt.velocity.emplace_back(p.get().dims());
	if (opt.velocity.size() != params.size())
		throw Error("shape mismatch: optimizer state tracks " + std::to_string(opt.velocity.size()) + " tensors, got "
				+ std::to_string(params.size()));
	for (std::size_t i = 0; i < params.size(); ++i) {
		Tensor& w = params[i].get();
		require_dims(grads[i], w.dims(), "gradient");
		require_dims(opt.velocity[i], w.dims(), "velocity");
	}
	for (std::size_t i = 0; i < params.size(); ++i) {
		Tensor& w = params[i].get();
		Tensor& v = opt.velocity[i];
		const Tensor& g = grads[i];
		for (std::size_t j = 0; j < w.size(); ++j) {
			v[j] = opt.momentum * v[j] - opt.learning_rate * g[j];
			w[j] = w[j] + v[j];
		}
	}
}

} // namespace mvis::nn

#endif // MVIS_NN_SGD_HPP_
