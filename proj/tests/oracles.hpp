// Independent reference implementations used only by tests. Everything here
// is written from the definitions in double precision and shares no code
// with the library kernels.
#ifndef MVIS_TESTS_ORACLES_HPP_
#define MVIS_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mvis/random.hpp"
#include "mvis/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec to_vec(const mvis::Tensor& t) { return Vec(t.values().begin(), t.values().end()); }

inline mvis::Tensor to_tensor(const mvis::Dims& dims, const Vec& v) {
	std::vector<float> f(v.begin(), v.end());
	return mvis::Tensor(dims, std::move(f));
}

inline mvis::Tensor random_tensor(const mvis::Dims& dims, mvis::Rng& rng, double lo = -1.0, double hi = 1.0) {
	mvis::Tensor t(dims);
	for (auto& v : t.values())
		v = static_cast<float>(rng.uniform(lo, hi));
	return t;
}

/// Values with |v| >= margin, so ReLU kinks stay out of finite-difference reach.
inline mvis::Tensor away_from_zero(const mvis::Dims& dims, mvis::Rng& rng, double margin = 0.05) {
	mvis::Tensor t(dims);
	for (auto& v : t.values()) {
		double x = rng.uniform(margin, 1.0);
		v = static_cast<float>(rng.below(2) ? x : -x);
	}
	return t;
}

// out[f][oy][ox] = b[f] + sum_c sum_ky sum_kx w[f][c][ky][kx] * in[c][oy*s+ky-p][ox*s+kx-p]
inline Vec conv(const Vec& in, std::size_t C, std::size_t H, std::size_t W, const Vec& w, std::size_t F,
		std::size_t k, const Vec& b, std::size_t stride, std::size_t pad, std::size_t& Ho, std::size_t& Wo) {
	Ho = (H + 2 * pad - k) / stride + 1;
	Wo = (W + 2 * pad - k) / stride + 1;
	Vec out(F * Ho * Wo, 0.0);
	for (std::size_t f = 0; f < F; ++f)
		for (std::size_t oy = 0; oy < Ho; ++oy)
			for (std::size_t ox = 0; ox < Wo; ++ox) {
				double s = b[f];
				for (std::size_t c = 0; c < C; ++c)
					for (std::size_t ky = 0; ky < k; ++ky)
						for (std::size_t kx = 0; kx < k; ++kx) {
							long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
							long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
							if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
								continue;
							s += w[((f * C + c) * k + ky) * k + kx] * in[(c * H + iy) * W + ix];
						}
				out[(f * Ho + oy) * Wo + ox] = s;
			}
	return out;
}

inline Vec dense(const Vec& in, const Vec& w, const Vec& b) {
	const std::size_t M = b.size(), N = in.size();
	Vec out(M);
	for (std::size_t m = 0; m < M; ++m) {
		double s = b[m];
		for (std::size_t n = 0; n < N; ++n)
			s += w[m * N + n] * in[n];
		out[m] = s;
	}
	return out;
}

inline Vec relu(Vec v) {
	for (auto& x : v)
		x = std::max(0.0, x);
	return v;
}

inline Vec maxpool(const Vec& in, std::size_t C, std::size_t H, std::size_t W, std::size_t size, std::size_t stride) {
	const std::size_t Ho = (H - size) / stride + 1, Wo = (W - size) / stride + 1;
	Vec out(C * Ho * Wo);
	for (std::size_t c = 0; c < C; ++c)
		for (std::size_t oy = 0; oy < Ho; ++oy)
			for (std::size_t ox = 0; ox < Wo; ++ox) {
				double m = -1e300;
				for (std::size_t ky = 0; ky < size; ++ky)
					for (std::size_t kx = 0; kx < size; ++kx)
						m = std::max(m, in[(c * H + oy * stride + ky) * W + ox * stride + kx]);
				out[(c * Ho + oy) * Wo + ox] = m;
			}
	return out;
}

inline Vec softmax(const Vec& x) {
	double mx = *std::max_element(x.begin(), x.end());
	Vec out(x.size());
	double s = 0;
	for (std::size_t i = 0; i < x.size(); ++i)
		s += (out[i] = std::exp(x[i] - mx));
	for (auto& v : out)
		v /= s;
	return out;
}

inline double cross_entropy(const Vec& logits, std::size_t target) { return -std::log(softmax(logits)[target]); }

inline double dot(const Vec& a, const Vec& b) {
	double s = 0;
	for (std::size_t i = 0; i < a.size(); ++i)
		s += a[i] * b[i];
	return s;
}

/// Central differences of a scalar function, step eps.
inline Vec finite_diff(const std::function<double(const Vec&)>& f, Vec x, double eps = 1e-3) {
	Vec g(x.size());
	for (std::size_t i = 0; i < x.size(); ++i) {
		const double keep = x[i];
		x[i] = keep + eps;
		const double up = f(x);
		x[i] = keep - eps;
		const double down = f(x);
		x[i] = keep;
		g[i] = (up - down) / (2 * eps);
	}
	return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const Vec& a, const Vec& b) {
	double diff = 0, na = 0, nb = 0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		diff += (a[i] - b[i]) * (a[i] - b[i]);
		na += a[i] * a[i];
		nb += b[i] * b[i];
	}
	const double denom = std::max(std::sqrt(na), std::sqrt(nb));
	return denom < 1e-12 ? 0.0 : std::sqrt(diff) / denom;
}

/// Bilinear sample: weighted average of the four neighbours around (sy, sx).
inline double bilinear_at(const std::vector<std::uint8_t>& px, std::size_t w, std::size_t h, double sy, double sx) {
	const double fy = std::floor(sy), fx = std::floor(sx);
	double total = 0;
	for (int dy = 0; dy <= 1; ++dy)
		for (int dx = 0; dx <= 1; ++dx) {
			const double wy = dy ? sy - fy : 1.0 - (sy - fy);
			const double wx = dx ? sx - fx : 1.0 - (sx - fx);
			const auto y = std::min<std::size_t>(static_cast<std::size_t>(fy) + dy, h - 1);
			const auto x = std::min<std::size_t>(static_cast<std::size_t>(fx) + dx, w - 1);
			total += wy * wx * px[y * w + x];
		}
	return total;
}

using Rational = boost::multiprecision::cpp_rational;

struct BruteMetrics {
	Rational accuracy, precision_micro, precision_macro, recall_micro, recall_macro;
	std::vector<Rational> precision, recall;
};

/// Per-sample evaluation straight from the label lists, no matrix involved.
inline BruteMetrics brute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
		std::size_t k) {
	BruteMetrics m;
	long long correct = 0, tp_all = 0, fp_all = 0, fn_all = 0;
	Rational p_sum = 0, r_sum = 0;
	for (std::size_t i = 0; i < truth.size(); ++i)
		correct += truth[i] == pred[i];
	for (std::size_t c = 0; c < k; ++c) {
		long long tp = 0, fp = 0, fn = 0;
		for (std::size_t i = 0; i < truth.size(); ++i) {
			if (pred[i] == c && truth[i] == c)
				++tp;
			else if (pred[i] == c)
				++fp;
			else if (truth[i] == c)
				++fn;
		}
		Rational p = tp + fp ? Rational(tp) / (tp + fp) : Rational(0);
		Rational r = tp + fn ? Rational(tp) / (tp + fn) : Rational(0);
		m.precision.push_back(p);
		m.recall.push_back(r);
		p_sum += p;
		r_sum += r;
		tp_all += tp;
		fp_all += fp;
		fn_all += fn;
	}
	m.accuracy = Rational(correct) / static_cast<long long>(truth.size());
	m.precision_micro = Rational(tp_all) / (tp_all + fp_all);
	m.recall_micro = Rational(tp_all) / (tp_all + fn_all);
	m.precision_macro = p_sum / static_cast<long long>(k);
	m.recall_macro = r_sum / static_cast<long long>(k);
	return m;
}

} // namespace oracle

#endif // MVIS_TESTS_ORACLES_HPP_
