#ifndef MVIS_MODELS_HPP_
#define MVIS_MODELS_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mvis/error.hpp"
#include "mvis/nn/network.hpp"
#include "mvis/random.hpp"
#include "mvis/tensor.hpp"

namespace mvis {

/// A built network with its freeze boundary.
struct ModelSpec {
	std::string name;
	std::vector<nn::Layer> layers;
	std::size_t conv_layer_count = 0;
	double freeze_fraction = 0.0;
	std::size_t class_count = 0;
	std::size_t input_side = 224;
	std::size_t input_channels = 3;
};

/**
 * Number of leading conv layers to freeze: round-half-up of
 * fraction * conv_count, clamped to [0, conv_count].
 */
inline std::size_t frozen_count(double freeze_fraction, std::size_t conv_layer_count) {
	const double n = static_cast<double>(conv_layer_count);
	// epsilon keeps 0.5-products that land a hair below .5 rounding up
	double r = std::floor(freeze_fraction * n + 0.5 + 1e-9);
	r = std::clamp(r, 0.0, n);
	return static_cast<std::size_t>(r);
}

/// Freezes the first frozen_count conv layers; everything else trains.
inline void apply_freeze(ModelSpec& m, double freeze_fraction) {
	if (!(freeze_fraction >= 0.0 && freeze_fraction <= 1.0))
		throw Error("freeze fraction must lie in [0,1]");
	std::size_t to_freeze = frozen_count(freeze_fraction, m.conv_layer_count);
	for (auto& l : m.layers) {
		if (l.kind() == nn::LayerKind::conv) {
			l.frozen = to_freeze > 0;
			if (to_freeze > 0)
				--to_freeze;
		} else {
			l.frozen = false;
		}
	}
	m.freeze_fraction = freeze_fraction;
}

struct VggLayout {
	std::string name;
	std::vector<std::size_t> convs_per_block;
	std::vector<std::size_t> channels_per_block;
};

struct HeadConfig {
	std::size_t units = 256;
	float dropout = 0.5f;
};

enum class VggVariant { vgg16, vgg19 };

inline VggLayout vgg_layout(VggVariant v) {
	switch (v) {
	case VggVariant::vgg16: return {"VGG16", {2, 2, 3, 3, 3}, {64, 128, 256, 512, 512}};
	case VggVariant::vgg19: return {"VGG19", {2, 2, 4, 4, 4}, {64, 128, 256, 512, 512}};
	}
	throw Error("unknown model variant");
}

/// Three-block desk-scale layout used for the synthetic end-to-end runs.
inline VggLayout vgg_mini_layout() { return {"VGG-mini", {1, 2, 2}, {8, 16, 32}}; }

/**
 * 3x3 same-padded conv + relu stacks, each block closed by a 2x2 max-pool,
 * then flatten -> dense(units) -> relu -> dropout -> dense(classes) -> softmax.
 */
inline ModelSpec build_vgg_layout(const VggLayout& layout, std::size_t class_count, double freeze_fraction,
		std::size_t input_side, std::size_t input_channels, std::uint64_t seed = 0, HeadConfig head = {}) {
	if (class_count < 2)
		throw Error("class count must be at least 2");
	if (layout.convs_per_block.size() != layout.channels_per_block.size() || layout.convs_per_block.empty())
		throw Error("malformed layout " + layout.name);
	if (input_side == 0 || input_channels == 0)
		throw Error("input dims must be positive");
	ModelSpec m;
	m.name = layout.name;
	m.class_count = class_count;
	m.input_side = input_side;
	m.input_channels = input_channels;
	Rng rng(seed);
	std::size_t channels = input_channels;
	std::size_t side = input_side;
	for (std::size_t b = 0; b < layout.convs_per_block.size(); ++b) {
		for (std::size_t i = 0; i < layout.convs_per_block[b]; ++i) {
			m.layers.push_back(nn::make_conv(channels, layout.channels_per_block[b], 3, rng));
			m.layers.push_back({nn::Relu{}});
			channels = layout.channels_per_block[b];
			++m.conv_layer_count;
		}
		if (side < 2)
			throw Error("shape mismatch: input side " + std::to_string(input_side) + " too small for "
					+ std::to_string(layout.convs_per_block.size()) + " pooled blocks");
		m.layers.push_back({nn::MaxPool{2, 2}});
		side /= 2;
	}
	m.layers.push_back({nn::Flatten{}});
	m.layers.push_back(nn::make_dense(channels * side * side, head.units, rng));
	m.layers.push_back({nn::Relu{}});
	m.layers.push_back({nn::Dropout{head.dropout}});
	m.layers.push_back(nn::make_dense(head.units, class_count, rng));
	m.layers.push_back({nn::Softmax{}});
	apply_freeze(m, freeze_fraction);
	return m;
}

inline ModelSpec build_vgg(VggVariant variant, std::size_t class_count, double freeze_fraction,
		std::size_t input_side = 224, std::size_t input_channels = 3, std::uint64_t seed = 0, HeadConfig head = {}) {
	return build_vgg_layout(vgg_layout(variant), class_count, freeze_fraction, input_side, input_channels, seed, head);
}

/// Lowercase alphanumerics only: "DenseNet 201" and "densenet201" compare equal.
inline std::string normalize_model_name(std::string_view name) {
	std::string out;
	for (unsigned char c : name)
		if (std::isalnum(c))
			out.push_back(static_cast<char>(std::tolower(c)));
	return out;
}

inline bool is_buildable(std::string_view name) {
	auto n = normalize_model_name(name);
	return n == "vgg16" || n == "vgg19" || n == "vggmini";
}

/// Builds vgg16, vgg19 or vgg-mini by (case-insensitive) name.
inline ModelSpec build_model(std::string_view name, std::size_t class_count, double freeze_fraction,
		std::size_t input_side = 224, std::size_t input_channels = 3, std::uint64_t seed = 0, HeadConfig head = {}) {
	const auto n = normalize_model_name(name);
	if (n == "vgg16")
		return build_vgg(VggVariant::vgg16, class_count, freeze_fraction, input_side, input_channels, seed, head);
	if (n == "vgg19")
		return build_vgg(VggVariant::vgg19, class_count, freeze_fraction, input_side, input_channels, seed, head);
	if (n == "vggmini")
		return build_vgg_layout(vgg_mini_layout(), class_count, freeze_fraction, input_side, input_channels, seed, head);
	throw Error("unknown model variant " + std::string(name));
}

inline std::size_t frozen_conv_layers(const ModelSpec& m) {
	return static_cast<std::size_t>(std::count_if(m.layers.begin(), m.layers.end(),
			[](const nn::Layer& l) { return l.kind() == nn::LayerKind::conv && l.frozen; }));
}

// ---------------------------------------------------------------------------
// MVW1 weights files
//
// little-endian: "MVW1", u32 count, then per tensor
//   u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 values[prod(dims)]
// ---------------------------------------------------------------------------

struct NamedTensor {
	std::string name;
	Tensor tensor;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
	for (int i = 0; i < 4; ++i)
		out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float f) {
	std::uint32_t bits;
	std::memcpy(&bits, &f, 4);
	put_u32(out, bits);
}

class ByteReader {
public:
	explicit ByteReader(std::string data) : data_(std::move(data)) { }

	std::uint32_t u32() {
		need(4);
		std::uint32_t v = 0;
		for (int i = 0; i < 4; ++i)
			v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
		pos_ += 4;
		return v;
	}
	float f32() {
		std::uint32_t bits = u32();
		float f;
		std::memcpy(&f, &bits, 4);
		return f;
	}
	std::string bytes(std::size_t n) {
		need(n);
		std::string s = data_.substr(pos_, n);
		pos_ += n;
		return s;
	}
	bool done() const { return pos_ == data_.size(); }

private:
	void need(std::size_t n) const {
		if (data_.size() - pos_ < n)
			throw Error("unexpected end of weights file");
	}

	std::string data_;
	std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_weights(const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
	std::string out = "MVW1";
	detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
	for (const auto& [name, t] : tensors) {
		detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
		out += name;
		detail::put_u32(out, static_cast<std::uint32_t>(t->rank()));
		for (auto d : t->dims())
			detail::put_u32(out, static_cast<std::uint32_t>(d));
		for (auto v : t->values())
			detail::put_f32(out, v);
	}
	return out;
}

inline std::vector<NamedTensor> decode_weights(std::string bytes) {
	detail::ByteReader in(std::move(bytes));
	if (in.bytes(4) != "MVW1")
		throw Error("not an MVW1 weights file");
	const auto count = in.u32();
	std::vector<NamedTensor> out;
	std::set<std::string> seen;
	for (std::uint32_t i = 0; i < count; ++i) {
		NamedTensor nt;
		nt.name = in.bytes(in.u32());
		if (!seen.insert(nt.name).second)
			throw Error("duplicate tensor " + nt.name + " in weights file");
		const auto rank = in.u32();
		Dims dims;
		for (std::uint32_t r = 0; r < rank; ++r)
			dims.push_back(in.u32());
		const auto n = dims_product(dims);
		std::vector<float> values(n);
		for (auto& v : values)
			v = in.f32();
		nt.tensor = Tensor(std::move(dims), std::move(values));
		out.push_back(std::move(nt));
	}
	if (!in.done())
		throw Error("trailing bytes after weights data");
	return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
	std::ofstream out(path, std::ios::binary);
	if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
		throw Error("cannot write " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path.string());
	return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace detail

/// All parameters, or only the conv backbone when `backbone_only` is set.
inline void save_weights(ModelSpec& model, const std::filesystem::path& path, bool backbone_only = false) {
	std::vector<std::pair<std::string, const Tensor*>> list;
	for (auto& p : nn::named_params(model.layers))
		if (!backbone_only || model.layers[p.layer].kind() == nn::LayerKind::conv)
			list.emplace_back(p.name, &p.tensor.get());
	detail::write_file(path, encode_weights(list));
}

/**
 * Replaces model parameters with those in the file. The file is fully
 * validated before anything is assigned. With allow_partial, tensors
 * missing from the file keep their current values and file tensors
 * with no counterpart in the model are ignored.
 */
inline void load_weights(ModelSpec& model, const std::filesystem::path& path, bool allow_partial = false) {
	auto entries = decode_weights(detail::read_file(path));
	auto params = nn::named_params(model.layers);
	std::map<std::string, Tensor*> by_name;
	for (auto& p : params)
		by_name.emplace(p.name, &p.tensor.get());
	std::vector<std::pair<Tensor*, Tensor*>> assignments;
	std::set<std::string> loaded;
	for (auto& e : entries) {
		auto it = by_name.find(e.name);
		if (it == by_name.end()) {
			if (allow_partial)
				continue;
			throw Error("unknown tensor " + e.name + " in weights file");
		}
		if (it->second->dims() != e.tensor.dims())
			throw Error("dims mismatch for tensor " + e.name + ": file " + dims_string(e.tensor.dims()) + ", model "
					+ dims_string(it->second->dims()));
		assignments.emplace_back(it->second, &e.tensor);
		loaded.insert(e.name);
	}
	if (!allow_partial)
		for (const auto& p : params)
			if (!loaded.count(p.name))
				throw Error("missing tensor " + p.name + " in weights file");
	for (auto& [dst, src] : assignments)
		*dst = std::move(*src);
}

// ---------------------------------------------------------------------------
// Benchmark catalog (ImageNet figures for reference architectures)
// ---------------------------------------------------------------------------

struct ModelCatalogEntry {
	std::string_view name;
	int year;
	double flops_m;
	double params_m;
	double top1;
	double top5;
};

inline const std::vector<ModelCatalogEntry>& catalog() {
	static const std::vector<ModelCatalogEntry> rows = {
		{"AlexNet", 2012, 955.21, 61.10, 56.52, 79.07},
		{"VGG11", 2014, 8171.57, 132.86, 69.02, 88.63},
		{"VGG13", 2014, 11895.04, 133.05, 69.93, 89.25},
		{"VGG16", 2014, 16063.36, 138.36, 71.59, 90.38},
		{"VGG19", 2014, 20231.68, 143.67, 72.38, 90.88},
		{"ResNet18", 2015, 1836.82, 11.69, 69.76, 89.08},
		{"ResNet34", 2015, 3692.78, 21.80, 73.31, 91.42},
		{"ResNet50", 2015, 4154.96, 25.56, 76.13, 92.86},
		{"ResNet101", 2015, 7892.77, 44.55, 77.37, 93.55},
		{"ResNet152", 2015, 11636.60, 60.19, 78.31, 94.05},
		{"Inception-v3", 2015, 5730.17, 27.16, 75.64, 92.59},
		{"Inception-v4", 2015, 12561.10, 42.68, 80.08, 94.89},
		{"SqueezeNet-v1", 2016, 865.78, 1.25, 58.09, 80.42},
		{"SqueezeNet-v1.1", 2016, 377.80, 1.24, 58.18, 80.62},
		{"DenseNet 121", 2017, 2928.89, 7.98, 74.43, 91.97},
		{"DenseNet 169", 2017, 3473.88, 14.15, 75.60, 92.81},
		{"DenseNet 201", 2017, 4435.03, 20.01, 76.87, 93.37},
		{"DenseNet 161", 2017, 7902.37, 28.68, 77.14, 93.56},
		{"Xception", 2017, 8494.59, 22.86, 78.89, 94.29},
		{"MobileNetV2", 2017, 336.43, 3.50, 71.81, 90.42},
		{"ShuffleNet-v2.05", 2018, 52.32, 1.37, 60.55, 81.75},
		{"ShuffleNet-v2.1", 2018, 160.09, 2.28, 69.36, 88.32},
		{"MnasNet", 2018, 649.51, 4.38, 61.95, 84.73},
		{"PNASNet", 2018, 25945.87, 86.06, 82.74, 95.99},
		{"NasNet", 2018, 24882.21, 88.75, 82.51, 96.02},
		{"NasNet mobile", 2018, 667.75, 5.29, 74.08, 91.74},
	};
	return rows;
}

inline const ModelCatalogEntry& catalog_lookup(std::string_view name) {
	const auto key = normalize_model_name(name);
	for (const auto& e : catalog())
		if (normalize_model_name(e.name) == key)
			return e;
	throw Error("unknown model " + std::string(name));
}

} // namespace mvis

#endif // MVIS_MODELS_HPP_
