#ifndef MVIS_NN_NETWORK_HPP_
#define MVIS_NN_NETWORK_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mvis/error.hpp"
#include "mvis/nn/kernels.hpp"
#include "mvis/random.hpp"
#include "mvis/tensor.hpp"

namespace mvis::nn {

enum class LayerKind { conv, relu, maxpool, flatten, dense, dropout, softmax };

inline const char* kind_name(LayerKind k) {
	switch (k) {
	case LayerKind::conv: return "conv";
	case LayerKind::relu: return "relu";
	case LayerKind::maxpool: return "maxpool";
	case LayerKind::flatten: return "flatten";
	case LayerKind::dense: return "dense";
	case LayerKind::dropout: return "dropout";
	case LayerKind::softmax: return "softmax";
	}
	return "?";
}

struct Conv2d {
	Tensor weights; ///< [F,C,k,k]
	Tensor bias;    ///< [F]
	std::size_t stride = 1;
	std::size_t pad = 1;
};
struct Relu { };
struct MaxPool {
	std::size_t size = 2;
	std::size_t stride = 2;
};
struct Flatten { };
struct Dense {
	Tensor weights; ///< [M,N]
	Tensor bias;    ///< [M]
};
struct Dropout {
	float rate = 0.5f;
};
struct Softmax { };

using LayerOp = std::variant<Conv2d, Relu, MaxPool, Flatten, Dense, Dropout, Softmax>;

/// One layer plus its freeze flag.
struct Layer {
	LayerOp op;
	bool frozen = false;

	LayerKind kind() const { return static_cast<LayerKind>(op.index()); }
	bool has_params() const { return kind() == LayerKind::conv || kind() == LayerKind::dense; }

	Tensor* weights() {
		if (auto* c = std::get_if<Conv2d>(&op)) return &c->weights;
		if (auto* d = std::get_if<Dense>(&op)) return &d->weights;
		return nullptr;
	}
	Tensor* bias() {
		if (auto* c = std::get_if<Conv2d>(&op)) return &c->bias;
		if (auto* d = std::get_if<Dense>(&op)) return &d->bias;
		return nullptr;
	}
	const Tensor* weights() const { return const_cast<Layer*>(this)->weights(); }
	const Tensor* bias() const { return const_cast<Layer*>(this)->bias(); }
};

static_assert(std::is_same_v<std::variant_alternative_t<static_cast<std::size_t>(LayerKind::softmax), LayerOp>, Softmax>);

/// A parameter tensor with its portable name, e.g. "layer3.weights".
struct NamedParam {
	std::string name;
	std::reference_wrapper<Tensor> tensor;
	std::size_t layer;
	bool frozen;
};

inline std::vector<NamedParam> named_params(std::vector<Layer>& layers) {
	std::vector<NamedParam> out;
	for (std::size_t i = 0; i < layers.size(); ++i) {
		auto& l = layers[i];
		if (!l.has_params())
			continue;
		const auto prefix = "layer" + std::to_string(i);
		out.push_back({prefix + ".weights", *l.weights(), i, l.frozen});
		out.push_back({prefix + ".bias", *l.bias(), i, l.frozen});
	}
	return out;
}

/// Per-layer activations kept by a training-mode forward pass.
struct Trace {
	std::vector<Tensor> inputs;                 ///< input of layer i
	std::vector<std::optional<PoolResult>> pools;
	std::vector<Tensor> masks;                  ///< dropout masks (empty tensor when unused)
	Tensor logits;
};

namespace detail {

// Number of layers evaluated by forward(): a trailing softmax is folded into the loss.
inline std::size_t logit_depth(const std::vector<Layer>& layers) {
	if (!layers.empty() && layers.back().kind() == LayerKind::softmax)
		return layers.size() - 1;
	return layers.size();
}

inline Error at_layer(std::size_t i, const Layer& l, const std::exception& e) {
	return Error("layer " + std::to_string(i) + " (" + kind_name(l.kind()) + "): " + e.what());
}

} // namespace detail

struct ForwardOptions {
	bool training = false;
	Rng* dropout_rng = nullptr; ///< required when training with dropout
	Trace* trace = nullptr;     ///< filled when non-null
};

/**
 * Runs the chain up to the logits. A final Softmax layer is not applied
 * here; training fuses it into the cross-entropy loss and inference takes
 * the argmax, which softmax does not change.
 */
inline Tensor forward(const std::vector<Layer>& layers, Tensor x, const ForwardOptions& opts = {}) {
	const std::size_t depth = detail::logit_depth(layers);
	if (opts.trace) {
		opts.trace->inputs.assign(depth, Tensor());
		opts.trace->pools.assign(depth, std::nullopt);
		opts.trace->masks.assign(depth, Tensor());
	}
	for (std::size_t i = 0; i < depth; ++i) {
		const auto& l = layers[i];
		try {
			Tensor y;
			switch (l.kind()) {
			case LayerKind::conv: {
				const auto& c = std::get<Conv2d>(l.op);
				y = conv2d_forward(x, c.weights, c.bias, c.stride, c.pad);
				break;
			}
			case LayerKind::relu:
				y = relu_forward(x);
				break;
			case LayerKind::maxpool: {
				const auto& p = std::get<MaxPool>(l.op);
				auto r = maxpool_forward(x, p.size, p.stride);
				y = r.output;
				if (opts.trace)
					opts.trace->pools[i] = std::move(r);
				break;
			}
			case LayerKind::flatten:
				y = x.reshaped({x.size()});
				break;
			case LayerKind::dense: {
				const auto& d = std::get<Dense>(l.op);
				y = dense_forward(x, d.weights, d.bias);
				break;
			}
			case LayerKind::dropout: {
				const float rate = std::get<Dropout>(l.op).rate;
				if (opts.training && rate > 0.0f) {
					if (!opts.dropout_rng)
						throw Error("dropout in training mode needs a seeded generator");
					auto mask = dropout_mask(x.dims(), rate, *opts.dropout_rng);
					y = apply_mask(x, mask);
					if (opts.trace)
						opts.trace->masks[i] = std::move(mask);
				} else {
					y = x;
				}
				break;
			}
			case LayerKind::softmax:
				y = softmax_forward(x);
				break;
			}
			if (opts.trace)
				opts.trace->inputs[i] = std::move(x);
			x = std::move(y);
		} catch (const Error& e) {
			throw detail::at_layer(i, l, e);
		}
	}
	if (opts.trace)
		opts.trace->logits = x;
	return x;
}

/// Gradient slots matching the parameter layout; empty for layers without params.
struct Gradients {
	std::vector<Tensor> weights;
	std::vector<Tensor> bias;

	static Gradients zeros_like(const std::vector<Layer>& layers) {
		Gradients g;
		g.weights.resize(layers.size());
		g.bias.resize(layers.size());
		for (std::size_t i = 0; i < layers.size(); ++i)
			if (layers[i].has_params() && !layers[i].frozen) {
				g.weights[i] = Tensor(layers[i].weights()->dims());
				g.bias[i] = Tensor(layers[i].bias()->dims());
			}
		return g;
	}
};

/// Lowest layer index whose parameters train; backward stops there.
inline std::optional<std::size_t> first_trainable(const std::vector<Layer>& layers) {
	for (std::size_t i = 0; i < layers.size(); ++i)
		if (layers[i].has_params() && !layers[i].frozen)
			return i;
	return std::nullopt;
}

namespace detail {

inline void add_into(Tensor& acc, const Tensor& g) {
	for (std::size_t j = 0; j < acc.size(); ++j)
		acc[j] += g[j];
}

} // namespace detail

/**
 * Back-propagates grad_logits through the traced pass and adds parameter
 * gradients of trainable layers into `acc`. Returns the gradient w.r.t.
 * the network input when `want_input` is set (used by gradient checks),
 * otherwise stops at the first trainable layer.
 */
inline std::optional<Tensor> backward(const std::vector<Layer>& layers, const Trace& trace, Tensor grad,
		Gradients& acc, bool want_input = false) {
	const std::size_t depth = detail::logit_depth(layers);
	if (trace.inputs.size() != depth)
		throw Error("mismatched cache: trace holds " + std::to_string(trace.inputs.size()) + " layers, model has "
				+ std::to_string(depth));
	auto lowest = first_trainable(layers);
	std::size_t stop = want_input ? 0 : (lowest ? *lowest : depth);
	for (std::size_t i = depth; i-- > stop;) {
		const auto& l = layers[i];
		const Tensor& in = trace.inputs[i];
		const bool need_input = want_input || i > stop;
		const bool need_params = l.has_params() && !l.frozen;
		try {
			switch (l.kind()) {
			case LayerKind::conv: {
				const auto& c = std::get<Conv2d>(l.op);
				auto g = conv2d_backward(grad, in, c.weights, c.stride, c.pad, need_input, need_params);
				if (need_params) {
					detail::add_into(acc.weights[i], g.weights);
					detail::add_into(acc.bias[i], g.bias);
				}
				grad = std::move(g.input);
				break;
			}
			case LayerKind::dense: {
				const auto& d = std::get<Dense>(l.op);
				auto g = dense_backward(grad, in, d.weights, need_input, need_params);
				if (need_params) {
					detail::add_into(acc.weights[i], g.weights);
					detail::add_into(acc.bias[i], g.bias);
				}
				if (need_input)
					grad = std::move(g.input).reshaped(in.dims());
				break;
			}
			case LayerKind::relu:
				grad = relu_backward(grad, in);
				break;
			case LayerKind::maxpool:
				if (!trace.pools[i])
					throw Error("mismatched cache: no pooling record");
				grad = maxpool_backward(grad, *trace.pools[i]);
				break;
			case LayerKind::flatten:
				grad = std::move(grad).reshaped(in.dims());
				break;
			case LayerKind::dropout:
				if (!trace.masks[i].empty())
					grad = apply_mask(grad, trace.masks[i]);
				break;
			case LayerKind::softmax:
				grad = softmax_backward(grad, softmax_forward(in));
				break;
			}
		} catch (const Error& e) {
			throw detail::at_layer(i, l, e);
		}
		if (!need_input)
			break;
	}
	if (want_input)
		return grad;
	return std::nullopt;
}

/// Glorot-uniform weights, zero bias, from a seeded generator.
inline void glorot_init(Tensor& weights, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
	const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
	for (auto& v : weights.values())
		v = static_cast<float>(rng.uniform(-limit, limit));
}

inline Layer make_conv(std::size_t in_channels, std::size_t filters, std::size_t kernel, Rng& rng,
		std::size_t stride = 1, std::size_t pad = 1) {
	Conv2d c{Tensor({filters, in_channels, kernel, kernel}), Tensor({filters}), stride, pad};
	glorot_init(c.weights, in_channels * kernel * kernel, filters * kernel * kernel, rng);
	return Layer{std::move(c)};
}

inline Layer make_dense(std::size_t in, std::size_t out, Rng& rng) {
	Dense d{Tensor({out, in}), Tensor({out})};
	glorot_init(d.weights, in, out, rng);
	return Layer{std::move(d)};
}

/**
 * Static shape propagation through the chain; throws the first mismatch
 * with its layer index. Returns the dims of every layer output.
 */
inline std::vector<Dims> infer_shapes(const std::vector<Layer>& layers, Dims input) {
	std::vector<Dims> out;
	for (std::size_t i = 0; i < layers.size(); ++i) {
		const auto& l = layers[i];
		try {
			switch (l.kind()) {
			case LayerKind::conv: {
				const auto& c = std::get<Conv2d>(l.op);
				auto g = conv_geometry(input, c.weights.dims(), c.stride, c.pad);
				require_dims(c.bias, {g.filters}, "conv bias");
				input = {g.filters, g.out_height, g.out_width};
				break;
			}
			case LayerKind::maxpool: {
				const auto& p = std::get<MaxPool>(l.op);
				if (input.size() != 3 || input[1] < p.size || input[2] < p.size)
					throw Error("shape mismatch: maxpool over " + dims_string(input));
				input = {input[0], (input[1] - p.size) / p.stride + 1, (input[2] - p.size) / p.stride + 1};
				break;
			}
			case LayerKind::flatten:
				input = {dims_product(input)};
				break;
			case LayerKind::dense: {
				const auto& d = std::get<Dense>(l.op);
				if (d.weights.rank() != 2 || d.weights.dim(1) != dims_product(input))
					throw Error("shape mismatch: dense weights " + dims_string(d.weights.dims()) + " against input "
							+ dims_string(input));
				input = {d.weights.dim(0)};
				break;
			}
			default:
				break;
			}
		} catch (const Error& e) {
			throw detail::at_layer(i, l, e);
		}
		out.push_back(input);
	}
	return out;
}

} // namespace mvis::nn

#endif // MVIS_NN_NETWORK_HPP_
