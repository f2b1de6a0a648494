#ifndef MVIS_VISUALIZE_HPP_
#define MVIS_VISUALIZE_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "mvis/error.hpp"
#include "mvis/tensor.hpp"

namespace mvis {

/// Raw bytes of one sample file.
struct RawBinary {
	std::vector<std::uint8_t> bytes;
	std::string source_id;

	std::size_t size_bytes() const { return bytes.size(); }
};

/// Row-major 8-bit luminance raster.
struct GrayscaleImage {
	std::size_t width = 0;
	std::size_t height = 0;
	std::vector<std::uint8_t> pixels;
	std::string source_id;

	std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

	bool valid() const { return width > 0 && height > 0 && pixels.size() == width * height; }

	friend bool operator==(const GrayscaleImage&, const GrayscaleImage&) = default;
};

/// Fixed-size square model input, channel-major, values in [0,1].
struct NetworkInput {
	std::size_t side = 0;
	std::size_t channels = 0;
	std::vector<float> values;

	Tensor to_tensor() const & { return Tensor({channels, side, side}, values); }
	Tensor to_tensor() && { return Tensor({channels, side, side}, std::move(values)); }
};

inline constexpr std::size_t kMinInputSide = 8;

/**
 * Image width for a file of the given size.
 *
 * Follows the usual malware-visualization table: small files get narrow
 * images, large ones wide. Ranges are half-open in KiB.
 */
inline std::size_t width_for_size(std::size_t size_bytes) {
	struct Row {
		std::size_t upper_kib;
		std::size_t width;
	};
	static constexpr Row table[] = {
		{10, 32}, {30, 64}, {60, 128}, {100, 256}, {200, 384}, {500, 512}, {1000, 768},
	};
	for (const auto& row : table)
		if (size_bytes < row.upper_kib * 1024)
			return row.width;
	return 1024;
}

/**
 * One byte per pixel, row-major. The final partial row is zero-padded so
 * no input byte is dropped.
 */
inline GrayscaleImage bytes_to_image(const RawBinary& bin, std::optional<std::size_t> width_override = {}) {
	if (bin.bytes.empty())
		throw Error("empty binary");
	if (width_override && *width_override == 0)
		throw Error("invalid width");
	GrayscaleImage img;
	img.width = width_override ? *width_override : width_for_size(bin.size_bytes());
	img.height = (bin.size_bytes() + img.width - 1) / img.width;
	img.pixels.assign(img.width * img.height, 0);
	std::copy(bin.bytes.begin(), bin.bytes.end(), img.pixels.begin());
	img.source_id = bin.source_id;
	return img;
}

inline RawBinary read_binary(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path.string());
	RawBinary bin;
	bin.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
	bin.source_id = path.string();
	return bin;
}

/**
 * Corner-aligned bilinear resize to side x side, luminance scaled to [0,1].
 * Output pixel (i, j) samples the source at (i * (h-1)/(side-1), j * (w-1)/(side-1)).
 */
inline std::vector<float> resize_bilinear(const GrayscaleImage& img, std::size_t side) {
	if (!img.valid())
		throw Error("invalid image");
	if (side == 0)
		throw Error("input too small");
	std::vector<float> out(side * side);
	auto coord = [side](std::size_t i, std::size_t extent) {
		if (side == 1 || extent == 1)
			return 0.0;
		return static_cast<double>(i) * static_cast<double>(extent - 1) / static_cast<double>(side - 1);
	};
	for (std::size_t i = 0; i < side; ++i) {
		double sy = coord(i, img.height);
		auto y0 = std::min(static_cast<std::size_t>(sy), img.height - 1);
		auto y1 = std::min(y0 + 1, img.height - 1);
		double fy = sy - static_cast<double>(y0);
		for (std::size_t j = 0; j < side; ++j) {
			double sx = coord(j, img.width);
			auto x0 = std::min(static_cast<std::size_t>(sx), img.width - 1);
			auto x1 = std::min(x0 + 1, img.width - 1);
			double fx = sx - static_cast<double>(x0);
			double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
			double bottom = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
			double v = (1.0 - fy) * top + fy * bottom;
			out[i * side + j] = static_cast<float>(v / 255.0);
		}
	}
	return out;
}

/// Resize, scale and replicate the grayscale plane across channels.
inline NetworkInput image_to_input(const GrayscaleImage& img, std::size_t side, std::size_t channels) {
	if (side < kMinInputSide)
		throw Error("input too small");
	if (channels != 1 && channels != 3)
		throw Error("unsupported channel count " + std::to_string(channels));
	auto plane = resize_bilinear(img, side);
	NetworkInput in;
	in.side = side;
	in.channels = channels;
	in.values.reserve(channels * plane.size());
	for (std::size_t c = 0; c < channels; ++c)
		in.values.insert(in.values.end(), plane.begin(), plane.end());
	return in;
}

} // namespace mvis

#endif // MVIS_VISUALIZE_HPP_
