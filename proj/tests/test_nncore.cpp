#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "mvis/nn/kernels.hpp"
#include "mvis/nn/network.hpp"
#include "mvis/nn/sgd.hpp"
#include "oracles.hpp"

using namespace mvis;
using namespace mvis::nn;

namespace {

bool bit_identical(const Tensor& a, const Tensor& b) {
	return a.dims() == b.dims() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

} // namespace

TEST(Conv2d, IdentityKernel) {
	Rng rng(1);
	auto in = oracle::random_tensor({1, 4, 5}, rng);
	auto out = conv2d_forward(in, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}), 1, 0);
	EXPECT_EQ(out, in);
}

TEST(Conv2d, ZeroInputGivesBias) {
	Tensor in({2, 3, 3});
	Tensor w({3, 2, 3, 3}, 0.7f);
	Tensor b({3}, std::vector<float>{0.5f, -1.0f, 2.0f});
	auto out = conv2d_forward(in, w, b, 1, 1);
	ASSERT_EQ(out.dims(), (Dims{3, 3, 3}));
	for (std::size_t f = 0; f < 3; ++f)
		for (std::size_t i = 0; i < 9; ++i)
			EXPECT_EQ(out[f * 9 + i], b[f]);
}

TEST(Conv2d, MatchesLoopOracle) {
	Rng rng(2);
	auto in = oracle::random_tensor({1, 5, 5}, rng);
	auto w = oracle::random_tensor({2, 1, 3, 3}, rng);
	auto b = oracle::random_tensor({2}, rng);
	auto out = conv2d_forward(in, w, b, 1, 1);
	std::size_t ho, wo;
	auto ref = oracle::conv(oracle::to_vec(in), 1, 5, 5, oracle::to_vec(w), 2, 3, oracle::to_vec(b), 1, 1, ho, wo);
	ASSERT_EQ(out.dims(), (Dims{2, ho, wo}));
	for (std::size_t i = 0; i < ref.size(); ++i)
		EXPECT_NEAR(out[i], ref[i], 1e-6);

	// strided, multi-channel
	auto in3 = oracle::random_tensor({3, 7, 7}, rng);
	auto w3 = oracle::random_tensor({4, 3, 3, 3}, rng);
	auto b3 = oracle::random_tensor({4}, rng);
	auto out3 = conv2d_forward(in3, w3, b3, 2, 1);
	auto ref3 = oracle::conv(oracle::to_vec(in3), 3, 7, 7, oracle::to_vec(w3), 4, 3, oracle::to_vec(b3), 2, 1, ho, wo);
	ASSERT_EQ(out3.dims(), (Dims{4, 4, 4}));
	for (std::size_t i = 0; i < ref3.size(); ++i)
		EXPECT_NEAR(out3[i], ref3[i], 1e-5);
}

TEST(Conv2d, ShapeErrors) {
	Tensor in({1, 4, 4});
	EXPECT_THROW(conv2d_forward(in, Tensor({1, 1, 3, 3}), Tensor({1}), 2, 0), Error); // (4-3)/2 not integral
	EXPECT_THROW(conv2d_forward(in, Tensor({1, 2, 3, 3}), Tensor({1}), 1, 1), Error); // channel mismatch
	EXPECT_THROW(conv2d_forward(in, Tensor({1, 1, 3, 3}), Tensor({2}), 1, 1), Error); // bias
	EXPECT_THROW(conv2d_backward(Tensor({1, 3, 3}), in, Tensor({1, 1, 3, 3}), 1, 1), Error); // wrong cache
	try {
		conv2d_forward(in, Tensor({1, 1, 3, 3}), Tensor({1}), 2, 0);
	} catch (const Error& e) {
		EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
	}
}

TEST(Relu, Subgradient) {
	Tensor in({2}, std::vector<float>{-1.0f, 1.0f});
	auto g = relu_backward(Tensor({2}, std::vector<float>{5.0f, 7.0f}), in);
	EXPECT_EQ(g[0], 0.0f);
	EXPECT_EQ(g[1], 7.0f);
	EXPECT_EQ(relu_forward(in)[0], 0.0f);
	EXPECT_THROW(relu_backward(Tensor({3}), in), Error);
}

TEST(MaxPool, RoutesToOneArgmaxAndConservesSum) {
	Rng rng(4);
	auto in = oracle::random_tensor({2, 6, 6}, rng);
	auto fwd = maxpool_forward(in, 2, 2);
	auto up = oracle::random_tensor(fwd.output.dims(), rng);
	auto g = maxpool_backward(up, fwd);
	double s_up = 0, s_g = 0;
	std::size_t nonzero = 0;
	for (auto v : up.values())
		s_up += v;
	for (auto v : g.values()) {
		s_g += v;
		nonzero += v != 0.0f;
	}
	EXPECT_NEAR(s_up, s_g, 1e-5);
	EXPECT_EQ(nonzero, up.size()); // non-overlapping windows: one slot each
}

TEST(MaxPool, TiesGoToFirstRowMajor) {
	Tensor in({1, 2, 2}, std::vector<float>{3, 3, 3, 3});
	auto fwd = maxpool_forward(in, 2, 2);
	EXPECT_EQ(fwd.argmax[0], 0u);
	auto g = maxpool_backward(Tensor({1, 1, 1}, 1.0f), fwd);
	EXPECT_EQ(g.values(), (std::vector<float>{1, 0, 0, 0}));
	EXPECT_THROW(maxpool_backward(Tensor({1, 2, 1}), fwd), Error);
}

TEST(MaxPool, FloorMode) {
	auto fwd = maxpool_forward(Tensor({1, 7, 7}), 2, 2);
	EXPECT_EQ(fwd.output.dims(), (Dims{1, 3, 3}));
}

TEST(Dense, IdentityAndBias) {
	Tensor x({3}, std::vector<float>{1.5f, -2.0f, 0.25f});
	Tensor eye({3, 3});
	for (std::size_t i = 0; i < 3; ++i)
		eye[i * 3 + i] = 1.0f;
	EXPECT_EQ(dense_forward(x, eye, Tensor({3})), x);
	auto y = dense_forward(x, Tensor({3, 3}), Tensor({3}, std::vector<float>{1, 2, 3}));
	EXPECT_EQ(y.values(), (std::vector<float>{1, 2, 3}));
}

TEST(Dense, MatchesHandMultiply) {
	Rng rng(6);
	auto x = oracle::random_tensor({4}, rng);
	auto w = oracle::random_tensor({3, 4}, rng);
	auto b = oracle::random_tensor({3}, rng);
	auto y = dense_forward(x, w, b);
	auto ref = oracle::dense(oracle::to_vec(x), oracle::to_vec(w), oracle::to_vec(b));
	for (std::size_t i = 0; i < 3; ++i)
		EXPECT_NEAR(y[i], ref[i], 1e-6);
	EXPECT_THROW(dense_forward(Tensor({5}), w, b), Error);
	EXPECT_THROW(dense_forward(x, w, Tensor({4})), Error);
}

TEST(SoftmaxCrossEntropy, Limits) {
	Tensor peaked({25});
	peaked[3] = 100.0f;
	EXPECT_LT(softmax_cross_entropy(peaked, 3).loss, 1e-10);
	auto uniform = softmax_cross_entropy(Tensor({25}, 0.5f), 7);
	EXPECT_NEAR(uniform.loss, std::log(25.0), 1e-7);
	EXPECT_NEAR(uniform.loss, 3.2188758, 1e-7);
	double gsum = 0;
	for (auto v : uniform.grad_logits.values())
		gsum += v;
	EXPECT_NEAR(gsum, 0.0, 1e-6);
}

TEST(SoftmaxCrossEntropy, StableAtLargeLogits) {
	for (float mag : {1e2f, 1e3f, 1e4f}) {
		Tensor l({4}, std::vector<float>{mag, -mag, 0.0f, mag / 2});
		for (std::size_t t = 0; t < 4; ++t) {
			auto r = softmax_cross_entropy(l, t);
			EXPECT_TRUE(std::isfinite(r.loss));
			for (auto v : r.grad_logits.values())
				EXPECT_TRUE(std::isfinite(v));
		}
	}
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifference) {
	Rng rng(8);
	for (int i = 0; i < 20; ++i)
		EXPECT_LT(gradcheck::cross_entropy(rng, 1e-5).max_rel_error, 1e-4);
}

TEST(SoftmaxCrossEntropy, Errors) {
	EXPECT_THROW(softmax_cross_entropy(Tensor({3}), 3), Error);
	EXPECT_THROW(softmax_cross_entropy(Tensor(), 0), Error);
}

TEST(Sgd, HandComputedSteps) {
	Tensor w({1}, 1.0f);
	OptimizerState opt{{}, 0.1f, 0.9f};
	std::vector<std::reference_wrapper<Tensor>> params{w};
	std::vector<Tensor> grads{Tensor({1}, 0.5f)};
	sgd_momentum_step(params, grads, opt);
	EXPECT_EQ(opt.velocity[0][0], -0.05f);
	EXPECT_EQ(w[0], 0.95f);
	sgd_momentum_step(params, grads, opt);
	EXPECT_EQ(opt.velocity[0][0], -0.095f);
	EXPECT_EQ(w[0], 0.855f);
}

TEST(Sgd, ZeroMomentumIsPlainDescent) {
	Rng rng(9);
	auto w = oracle::random_tensor({3, 4}, rng);
	auto g = oracle::random_tensor({3, 4}, rng);
	const Tensor before = w;
	OptimizerState opt{{}, 0.01f, 0.0f};
	std::vector<std::reference_wrapper<Tensor>> params{w};
	std::vector<Tensor> grads{g};
	sgd_momentum_step(params, grads, opt);
	for (std::size_t i = 0; i < w.size(); ++i)
		EXPECT_EQ(w[i], before[i] + (0.0f * 0.0f - 0.01f * g[i]));
}

TEST(Sgd, DimMismatch) {
	Tensor w({2});
	OptimizerState opt;
	std::vector<std::reference_wrapper<Tensor>> params{w};
	std::vector<Tensor> bad{Tensor({3})};
	EXPECT_THROW(sgd_momentum_step(params, bad, opt), Error);
	std::vector<Tensor> none;
	EXPECT_THROW(sgd_momentum_step(params, none, opt), Error);
}

TEST(Forward, ZeroDropoutTrainingEqualsInference) {
	Rng rng(10);
	std::vector<Layer> layers;
	layers.push_back(make_dense(6, 5, rng));
	layers.push_back({Relu{}});
	layers.push_back({Dropout{0.0f}});
	layers.push_back(make_dense(5, 3, rng));
	auto x = oracle::random_tensor({6}, rng);
	Rng drop(1);
	EXPECT_EQ(forward(layers, x), forward(layers, x, {.training = true, .dropout_rng = &drop}));
}

TEST(Forward, SingleDenseIsDenseForward) {
	Rng rng(11);
	std::vector<Layer> layers{make_dense(4, 2, rng)};
	auto x = oracle::random_tensor({4}, rng);
	const auto& d = std::get<Dense>(layers[0].op);
	EXPECT_EQ(forward(layers, x), dense_forward(x, d.weights, d.bias));
}

TEST(Forward, ThreeLayerComposition) {
	Rng rng(12);
	std::vector<Layer> layers;
	layers.push_back(make_conv(1, 2, 3, rng));
	layers.push_back({Relu{}});
	layers.push_back({Flatten{}});
	layers.push_back(make_dense(2 * 4 * 4, 3, rng));
	layers.push_back({Softmax{}});
	auto x = oracle::random_tensor({1, 4, 4}, rng);
	const auto& c = std::get<Conv2d>(layers[0].op);
	const auto& d = std::get<Dense>(layers[3].op);
	auto manual = dense_forward(relu_forward(conv2d_forward(x, c.weights, c.bias, 1, 1)).reshaped({32}), d.weights, d.bias);
	EXPECT_EQ(forward(layers, x), manual);
	std::size_t ho, wo;
	auto ref = oracle::dense(oracle::relu(oracle::conv(oracle::to_vec(x), 1, 4, 4, oracle::to_vec(c.weights), 2, 3,
								  oracle::to_vec(c.bias), 1, 1, ho, wo)),
			oracle::to_vec(d.weights), oracle::to_vec(d.bias));
	auto got = forward(layers, x);
	for (std::size_t i = 0; i < 3; ++i)
		EXPECT_NEAR(got[i], ref[i], 1e-5);
}

TEST(Forward, ReportsFailingLayerIndex) {
	Rng rng(13);
	std::vector<Layer> layers;
	layers.push_back(make_dense(4, 3, rng));
	layers.push_back({Relu{}});
	layers.push_back(make_dense(5, 2, rng));
	try {
		forward(layers, Tensor({4}));
		FAIL();
	} catch (const Error& e) {
		EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
	}
	EXPECT_THROW(infer_shapes(layers, {4}), Error);
	EXPECT_THROW(forward({{Dropout{0.5f}}}, Tensor({3}), {.training = true}), Error);
}

TEST(Backward, MismatchedTrace) {
	Rng rng(14);
	std::vector<Layer> layers{make_dense(3, 2, rng)};
	Trace empty;
	auto g = Gradients::zeros_like(layers);
	EXPECT_THROW(backward(layers, empty, Tensor({2}), g), Error);
}

TEST(GradientCheck, EveryLayerKind) {
	Rng rng(15);
	for (int i = 0; i < 5; ++i) {
		for (auto r : {gradcheck::conv(rng), gradcheck::dense(rng), gradcheck::relu(rng), gradcheck::maxpool(rng),
				 gradcheck::dropout(rng), gradcheck::flatten(rng), gradcheck::softmax(rng), gradcheck::cross_entropy(rng),
				 gradcheck::model(rng)})
			EXPECT_LT(r.max_rel_error, 1e-3) << r.shape;
	}
}

TEST(Training, FrozenLayersStayBitIdentical) {
	Rng rng(16);
	std::vector<Layer> layers;
	layers.push_back(make_conv(1, 2, 3, rng));
	layers.push_back({Relu{}});
	layers.push_back(make_conv(2, 2, 3, rng));
	layers.push_back({Relu{}});
	layers.push_back({Flatten{}});
	layers.push_back(make_dense(2 * 16, 2, rng));
	layers[0].frozen = true;
	const auto frozen_w = *layers[0].weights(), frozen_b = *layers[0].bias();
	const auto trained_w = *layers[2].weights();
	OptimizerState opt{{}, 0.1f, 0.9f};
	for (int step = 0; step < 25; ++step) {
		auto x = oracle::random_tensor({1, 4, 4}, rng);
		Trace trace;
		auto logits = forward(layers, x, {.trace = &trace});
		auto lg = softmax_cross_entropy(logits, step % 2);
		auto g = Gradients::zeros_like(layers);
		backward(layers, trace, lg.grad_logits, g);
		EXPECT_TRUE(g.weights[0].empty());
		std::vector<std::reference_wrapper<Tensor>> params{*layers[2].weights(), *layers[2].bias(), *layers[5].weights(),
				*layers[5].bias()};
		std::vector<Tensor> grads{g.weights[2], g.bias[2], g.weights[5], g.bias[5]};
		sgd_momentum_step(params, grads, opt);
	}
	EXPECT_TRUE(bit_identical(*layers[0].weights(), frozen_w));
	EXPECT_TRUE(bit_identical(*layers[0].bias(), frozen_b));
	EXPECT_FALSE(bit_identical(*layers[2].weights(), trained_w));
}

TEST(Training, LossDecreasesOnSeparableData) {
	Rng rng(17);
	std::vector<Layer> layers;
	layers.push_back(make_dense(2, 8, rng));
	layers.push_back({Relu{}});
	layers.push_back(make_dense(8, 2, rng));
	layers.push_back({Softmax{}});
	std::vector<std::pair<Tensor, std::size_t>> data;
	for (int i = 0; i < 40; ++i) {
		const std::size_t label = i % 2;
		const float cx = label ? 1.0f : -1.0f;
		data.push_back({Tensor({2}, std::vector<float>{cx + static_cast<float>(rng.uniform(-0.3, 0.3)),
								   cx + static_cast<float>(rng.uniform(-0.3, 0.3))}),
				label});
	}
	OptimizerState opt{{}, 0.05f, 0.9f};
	std::vector<double> epoch_loss;
	for (int epoch = 0; epoch < 100; ++epoch) {
		double total = 0;
		auto g = Gradients::zeros_like(layers);
		for (const auto& [x, y] : data) {
			Trace trace;
			auto lg = softmax_cross_entropy(forward(layers, x, {.trace = &trace}), y);
			total += lg.loss;
			backward(layers, trace, lg.grad_logits, g);
		}
		for (auto* v : {&g.weights[0], &g.bias[0], &g.weights[2], &g.bias[2]})
			for (auto& e : v->values())
				e /= static_cast<float>(data.size());
		std::vector<std::reference_wrapper<Tensor>> params{*layers[0].weights(), *layers[0].bias(), *layers[2].weights(),
				*layers[2].bias()};
		std::vector<Tensor> grads{g.weights[0], g.bias[0], g.weights[2], g.bias[2]};
		sgd_momentum_step(params, grads, opt);
		epoch_loss.push_back(total / data.size());
	}
	EXPECT_LT(epoch_loss.back(), epoch_loss.front());
	EXPECT_LT(epoch_loss.back(), 0.1);
}
