#ifndef MVIS_NN_KERNELS_HPP_
#define MVIS_NN_KERNELS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mvis/error.hpp"
#include "mvis/random.hpp"
#include "mvis/tensor.hpp"

namespace mvis::nn {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip)
// ---------------------------------------------------------------------------

struct ConvGeometry {
	std::size_t channels, height, width;
	std::size_t filters, kernel, stride, pad;
	std::size_t out_height, out_width;

	std::size_t patch() const { return channels * kernel * kernel; }
	std::size_t out_pixels() const { return out_height * out_width; }
};

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
	if (stride == 0)
		throw Error("shape mismatch: stride 0");
	const std::size_t padded = in + 2 * pad;
	if (padded < kernel || (padded - kernel) % stride != 0)
		throw Error("shape mismatch: extent " + std::to_string(in) + " with kernel " + std::to_string(kernel)
				+ ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad) + " is not integral");
	return (padded - kernel) / stride + 1;
}

inline ConvGeometry conv_geometry(const Dims& input, const Dims& weights, std::size_t stride, std::size_t pad) {
	if (input.size() != 3)
		throw Error("shape mismatch: conv input must be [C,H,W], got " + dims_string(input));
	if (weights.size() != 4 || weights[2] != weights[3])
		throw Error("shape mismatch: conv weights must be [F,C,k,k], got " + dims_string(weights));
	if (weights[1] != input[0])
		throw Error("shape mismatch: conv weights " + dims_string(weights) + " against input " + dims_string(input));
	ConvGeometry g{input[0], input[1], input[2], weights[0], weights[2], stride, pad, 0, 0};
	g.out_height = conv_out_extent(g.height, g.kernel, stride, pad);
	g.out_width = conv_out_extent(g.width, g.kernel, stride, pad);
	return g;
}

namespace detail {

// cols[(c*k + ky)*k + kx][oy*Wo + ox] = padded input at the tap
inline void im2col(const float* in, const ConvGeometry& g, float* cols) {
	const std::size_t P = g.out_pixels();
	for (std::size_t c = 0; c < g.channels; ++c)
		for (std::size_t ky = 0; ky < g.kernel; ++ky)
			for (std::size_t kx = 0; kx < g.kernel; ++kx) {
				float* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
				for (std::size_t oy = 0; oy < g.out_height; ++oy) {
					const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
					float* dst = row + oy * g.out_width;
					if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
						std::fill(dst, dst + g.out_width, 0.0f);
						continue;
					}
					const float* src = in + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
					for (std::size_t ox = 0; ox < g.out_width; ++ox) {
						const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
						dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0f : src[ix];
					}
				}
			}
}

inline void col2im_add(const float* cols, const ConvGeometry& g, float* out) {
	const std::size_t P = g.out_pixels();
	for (std::size_t c = 0; c < g.channels; ++c)
		for (std::size_t ky = 0; ky < g.kernel; ++ky)
			for (std::size_t kx = 0; kx < g.kernel; ++kx) {
				const float* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * P;
				for (std::size_t oy = 0; oy < g.out_height; ++oy) {
					const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
					if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height))
						continue;
					float* dst = out + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
					for (std::size_t ox = 0; ox < g.out_width; ++ox) {
						const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
						if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width))
							dst[ix] += row[oy * g.out_width + ox];
					}
				}
			}
}

} // namespace detail

inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
		std::size_t pad) {
	const auto g = conv_geometry(input.dims(), weights.dims(), stride, pad);
	require_dims(bias, {g.filters}, "conv bias");
	const std::size_t P = g.out_pixels();
	const std::size_t Q = g.patch();
	std::vector<float> cols(Q * P);
	detail::im2col(input.data(), g, cols.data());
	Tensor out({g.filters, g.out_height, g.out_width});
	for (std::size_t f = 0; f < g.filters; ++f) {
		float* dst = out.data() + f * P;
		std::fill(dst, dst + P, bias[f]);
		const float* w = weights.data() + f * Q;
		for (std::size_t q = 0; q < Q; ++q) {
			const float wq = w[q];
			const float* src = cols.data() + q * P;
			for (std::size_t p = 0; p < P; ++p)
				dst[p] += wq * src[p];
		}
	}
	return out;
}

struct ParamGrads {
	Tensor input;
	Tensor weights;
	Tensor bias;
};

/**
 * Gradients of a convolution given the forward input. Either half can be
 * skipped: frozen layers need no weight gradient, and the lowest trainable
 * layer needs no input gradient.
 */
inline ParamGrads conv2d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights,
		std::size_t stride, std::size_t pad, bool want_input = true, bool want_params = true) {
	const auto g = conv_geometry(input.dims(), weights.dims(), stride, pad);
	require_dims(upstream, {g.filters, g.out_height, g.out_width}, "conv upstream gradient");
	const std::size_t P = g.out_pixels();
	const std::size_t Q = g.patch();
	ParamGrads grads;
	if (want_params) {
		std::vector<float> cols(Q * P);
		detail::im2col(input.data(), g, cols.data());
		grads.weights = Tensor(weights.dims());
		grads.bias = Tensor({g.filters});
		for (std::size_t f = 0; f < g.filters; ++f) {
			const float* gf = upstream.data() + f * P;
			float sb = 0.0f;
			for (std::size_t p = 0; p < P; ++p)
				sb += gf[p];
			grads.bias[f] = sb;
			float* dw = grads.weights.data() + f * Q;
			for (std::size_t q = 0; q < Q; ++q) {
				const float* src = cols.data() + q * P;
				float s = 0.0f;
				for (std::size_t p = 0; p < P; ++p)
					s += gf[p] * src[p];
				dw[q] = s;
			}
		}
	}
	if (want_input) {
		std::vector<float> dcols(Q * P, 0.0f);
		for (std::size_t f = 0; f < g.filters; ++f) {
			const float* gf = upstream.data() + f * P;
			const float* w = weights.data() + f * Q;
			for (std::size_t q = 0; q < Q; ++q) {
				const float wq = w[q];
				float* dst = dcols.data() + q * P;
				for (std::size_t p = 0; p < P; ++p)
					dst[p] += wq * gf[p];
			}
		}
		grads.input = Tensor(input.dims());
		detail::col2im_add(dcols.data(), g, grads.input.data());
	}
	return grads;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// W x + b; the input is read as a flat vector whatever its dims.
inline Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
	if (weights.rank() != 2 || weights.dim(1) != input.size())
		throw Error("shape mismatch: dense weights " + dims_string(weights.dims()) + " against input of "
				+ std::to_string(input.size()) + " values");
	const std::size_t M = weights.dim(0), N = weights.dim(1);
	require_dims(bias, {M}, "dense bias");
	Tensor out({M});
	for (std::size_t m = 0; m < M; ++m) {
		const float* w = weights.data() + m * N;
		float s = 0.0f;
		for (std::size_t n = 0; n < N; ++n)
			s += w[n] * input[n];
		out[m] = s + bias[m];
	}
	return out;
}

inline ParamGrads dense_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights,
		bool want_input = true, bool want_params = true) {
	if (weights.rank() != 2 || weights.dim(1) != input.size())
		throw Error("shape mismatch: dense cache does not match weights");
	const std::size_t M = weights.dim(0), N = weights.dim(1);
	require_dims(upstream, {M}, "dense upstream gradient");
	ParamGrads grads;
	if (want_params) {
		grads.weights = Tensor(weights.dims());
		grads.bias = Tensor({M});
		for (std::size_t m = 0; m < M; ++m) {
			const float gm = upstream[m];
			float* dw = grads.weights.data() + m * N;
			for (std::size_t n = 0; n < N; ++n)
				dw[n] = gm * input[n];
			grads.bias[m] = gm;
		}
	}
	if (want_input) {
		grads.input = Tensor(input.dims());
		for (std::size_t m = 0; m < M; ++m) {
			const float gm = upstream[m];
			const float* w = weights.data() + m * N;
			for (std::size_t n = 0; n < N; ++n)
				grads.input[n] += gm * w[n];
		}
	}
	return grads;
}

// ---------------------------------------------------------------------------
// Elementwise and pooling
// ---------------------------------------------------------------------------

inline Tensor relu_forward(const Tensor& input) {
	Tensor out = input;
	for (auto& v : out.values())
		v = v > 0.0f ? v : 0.0f;
	return out;
}

/// Subgradient 0 at the origin.
inline Tensor relu_backward(const Tensor& upstream, const Tensor& input) {
	if (!upstream.same_shape(input))
		throw Error("shape mismatch: relu cache " + dims_string(input.dims()) + " vs upstream "
				+ dims_string(upstream.dims()));
	Tensor out(input.dims());
	for (std::size_t i = 0; i < input.size(); ++i)
		out[i] = input[i] > 0.0f ? upstream[i] : 0.0f;
	return out;
}

struct PoolResult {
	Tensor output;
	std::vector<std::uint32_t> argmax; ///< flat input index chosen for each output value
	Dims input_dims;
};

/// Max pooling, floor mode. Ties go to the first position in row-major window order.
inline PoolResult maxpool_forward(const Tensor& input, std::size_t size, std::size_t stride) {
	if (input.rank() != 3)
		throw Error("shape mismatch: maxpool input must be [C,H,W], got " + dims_string(input.dims()));
	if (size == 0 || stride == 0 || input.dim(1) < size || input.dim(2) < size)
		throw Error("shape mismatch: maxpool window " + std::to_string(size) + " over " + dims_string(input.dims()));
	const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
	const std::size_t Ho = (H - size) / stride + 1, Wo = (W - size) / stride + 1;
	PoolResult r{Tensor({C, Ho, Wo}), std::vector<std::uint32_t>(C * Ho * Wo), input.dims()};
	for (std::size_t c = 0; c < C; ++c)
		for (std::size_t oy = 0; oy < Ho; ++oy)
			for (std::size_t ox = 0; ox < Wo; ++ox) {
				std::size_t best = (c * H + oy * stride) * W + ox * stride;
				for (std::size_t ky = 0; ky < size; ++ky)
					for (std::size_t kx = 0; kx < size; ++kx) {
						const std::size_t idx = (c * H + oy * stride + ky) * W + ox * stride + kx;
						if (input[idx] > input[best])
							best = idx;
					}
				const std::size_t o = (c * Ho + oy) * Wo + ox;
				r.output[o] = input[best];
				r.argmax[o] = static_cast<std::uint32_t>(best);
			}
	return r;
}

inline Tensor maxpool_backward(const Tensor& upstream, const PoolResult& cache) {
	if (upstream.dims() != cache.output.dims() || cache.argmax.size() != upstream.size())
		throw Error("shape mismatch: maxpool cache " + dims_string(cache.output.dims()) + " vs upstream "
				+ dims_string(upstream.dims()));
	Tensor out(cache.input_dims);
	for (std::size_t o = 0; o < upstream.size(); ++o)
		out[cache.argmax[o]] += upstream[o];
	return out;
}

/// Inverted dropout: kept units are scaled by 1/(1-rate) so inference is the identity.
inline Tensor dropout_mask(const Dims& dims, float rate, Rng& rng) {
	if (!(rate >= 0.0f && rate < 1.0f))
		throw Error("dropout rate must lie in [0,1)");
	Tensor mask(dims);
	const float keep_scale = 1.0f / (1.0f - rate);
	for (auto& v : mask.values())
		v = rng.uniform() < static_cast<double>(rate) ? 0.0f : keep_scale;
	return mask;
}

inline Tensor apply_mask(const Tensor& t, const Tensor& mask) {
	if (!t.same_shape(mask))
		throw Error("shape mismatch: dropout mask " + dims_string(mask.dims()) + " vs " + dims_string(t.dims()));
	Tensor out(t.dims());
	for (std::size_t i = 0; i < t.size(); ++i)
		out[i] = t[i] * mask[i];
	return out;
}

// ---------------------------------------------------------------------------
// Softmax and loss
// ---------------------------------------------------------------------------

inline Tensor softmax_forward(const Tensor& logits) {
	if (logits.empty())
		throw Error("softmax of empty tensor");
	float mx = -std::numeric_limits<float>::infinity();
	for (auto v : logits.values())
		mx = std::max(mx, v);
	Tensor out(logits.dims());
	float sum = 0.0f;
	for (std::size_t i = 0; i < logits.size(); ++i) {
		out[i] = std::exp(logits[i] - mx);
		sum += out[i];
	}
	for (auto& v : out.values())
		v /= sum;
	return out;
}

/// Vector-Jacobian product of softmax given its output.
inline Tensor softmax_backward(const Tensor& upstream, const Tensor& output) {
	if (!upstream.same_shape(output))
		throw Error("shape mismatch: softmax cache vs upstream");
	float dot = 0.0f;
	for (std::size_t i = 0; i < output.size(); ++i)
		dot += upstream[i] * output[i];
	Tensor out(output.dims());
	for (std::size_t i = 0; i < output.size(); ++i)
		out[i] = output[i] * (upstream[i] - dot);
	return out;
}

struct LossAndGrad {
	double loss;
	Tensor grad_logits;
};

/// -log softmax(logits)[target] with max subtraction; gradient softmax - onehot.
inline LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t target) {
	const std::size_t K = logits.size();
	if (K == 0)
		throw Error("cross entropy over zero classes");
	if (target >= K)
		throw Error("target class " + std::to_string(target) + " out of range for " + std::to_string(K) + " classes");
	double mx = -std::numeric_limits<double>::infinity();
	for (auto v : logits.values())
		mx = std::max(mx, static_cast<double>(v));
	double sum = 0.0;
	for (auto v : logits.values())
		sum += std::exp(static_cast<double>(v) - mx);
	const double log_sum = std::log(sum);
	LossAndGrad r{log_sum - (static_cast<double>(logits[target]) - mx), Tensor(logits.dims())};
	for (std::size_t i = 0; i < K; ++i)
		r.grad_logits[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - mx - log_sum));
	r.grad_logits[target] -= 1.0f;
	return r;
}

} // namespace mvis::nn

#endif // MVIS_NN_KERNELS_HPP_
