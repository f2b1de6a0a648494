#ifndef MVIS_TENSOR_HPP_
#define MVIS_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mvis/error.hpp"

namespace mvis {

using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& dims) {
	return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string dims_string(const Dims& dims) {
	std::ostringstream os;
	os << '[';
	for (std::size_t i = 0; i < dims.size(); ++i)
		os << (i ? "," : "") << dims[i];
	os << ']';
	return os.str();
}

/// Dense row-major float32 tensor.
class Tensor {
public:
	Tensor() = default;

	explicit Tensor(Dims dims, float fill = 0.0f)
		: dims_(std::move(dims)), data_(dims_product(dims_), fill) {
		check_dims();
	}

	Tensor(Dims dims, std::vector<float> data) : dims_(std::move(dims)), data_(std::move(data)) {
		check_dims();
		if (data_.size() != dims_product(dims_))
			throw Error("shape mismatch: " + std::to_string(data_.size()) + " values for dims "
					+ dims_string(dims_));
	}

	const Dims& dims() const { return dims_; }
	std::size_t dim(std::size_t i) const { return dims_.at(i); }
	std::size_t rank() const { return dims_.size(); }
	std::size_t size() const { return data_.size(); }
	bool empty() const { return data_.empty(); }

	float* data() { return data_.data(); }
	const float* data() const { return data_.data(); }
	std::vector<float>& values() { return data_; }
	const std::vector<float>& values() const { return data_; }

	float& operator[](std::size_t i) { return data_[i]; }
	float operator[](std::size_t i) const { return data_[i]; }

	float& at(std::size_t c, std::size_t y, std::size_t x) {
		return data_[(c * dims_[1] + y) * dims_[2] + x];
	}
	float at(std::size_t c, std::size_t y, std::size_t x) const {
		return data_[(c * dims_[1] + y) * dims_[2] + x];
	}

	/// Same data, new dims; product must match.
	Tensor reshaped(Dims dims) const& { return Tensor(std::move(dims), data_); }
	Tensor reshaped(Dims dims) && { return Tensor(std::move(dims), std::move(data_)); }

	void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

	bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

	friend bool operator==(const Tensor&, const Tensor&) = default;

private:
	void check_dims() const {
		for (auto d : dims_)
			if (d == 0)
				throw Error("shape mismatch: zero-sized dimension in " + dims_string(dims_));
	}

	Dims dims_;
	std::vector<float> data_;
};

/// Throws "shape mismatch" with context unless the dims agree.
inline void require_dims(const Tensor& t, const Dims& expected, const char* what) {
	if (t.dims() != expected)
		throw Error(std::string("shape mismatch: ") + what + " has dims " + dims_string(t.dims())
				+ ", expected " + dims_string(expected));
}

} // namespace mvis

#endif // MVIS_TENSOR_HPP_
