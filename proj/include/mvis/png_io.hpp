#ifndef MVIS_PNG_IO_HPP_
#define MVIS_PNG_IO_HPP_

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <png.h>

#include "mvis/error.hpp"
#include "mvis/visualize.hpp"

namespace mvis {

namespace detail {

// IHDR sits at a fixed offset: 8-byte signature, 4-byte length, "IHDR",
// width, height, bit depth, color type.
inline void require_gray8_png(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path.string());
	std::array<unsigned char, 26> head{};
	in.read(reinterpret_cast<char*>(head.data()), head.size());
	static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
	if (in.gcount() != static_cast<std::streamsize>(head.size()) || std::memcmp(head.data(), sig, 8) != 0
			|| std::memcmp(head.data() + 12, "IHDR", 4) != 0)
		throw Error("unsupported image format: " + path.string());
	const int bit_depth = head[24];
	const int color_type = head[25];
	if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_GRAY)
		throw Error("unsupported image format: " + path.string());
}

} // namespace detail

/// 8-bit grayscale, non-interlaced, no time chunk: identical images give identical files.
inline void write_image_png(const GrayscaleImage& img, const std::filesystem::path& path) {
	if (!img.valid())
		throw Error("invalid image");
	png_image desc;
	std::memset(&desc, 0, sizeof desc);
	desc.version = PNG_IMAGE_VERSION;
	desc.width = static_cast<png_uint_32>(img.width);
	desc.height = static_cast<png_uint_32>(img.height);
	desc.format = PNG_FORMAT_GRAY;
	if (!png_image_write_to_file(&desc, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
		std::string msg = desc.message;
		png_image_free(&desc);
		throw Error("cannot write " + path.string() + ": " + msg);
	}
}

inline GrayscaleImage read_image_png(const std::filesystem::path& path) {
	detail::require_gray8_png(path);
	png_image desc;
	std::memset(&desc, 0, sizeof desc);
	desc.version = PNG_IMAGE_VERSION;
	if (!png_image_begin_read_from_file(&desc, path.c_str()))
		throw Error("cannot read " + path.string() + ": " + desc.message);
	if (desc.format != PNG_FORMAT_GRAY) {
		png_image_free(&desc);
		throw Error("unsupported image format: " + path.string());
	}
	GrayscaleImage img;
	img.width = desc.width;
	img.height = desc.height;
	img.pixels.resize(PNG_IMAGE_SIZE(desc));
	img.source_id = path.string();
	if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
		std::string msg = desc.message;
		png_image_free(&desc);
		throw Error("cannot read " + path.string() + ": " + msg);
	}
	return img;
}

} // namespace mvis

#endif // MVIS_PNG_IO_HPP_
