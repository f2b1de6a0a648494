// Shared test fixtures: Malimg family counts, synthetic manifests and a
// synthetic malware-like corpus.
#ifndef MVIS_TESTS_FIXTURES_HPP_
#define MVIS_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvis/corpus.hpp"
#include "mvis/png_io.hpp"
#include "mvis/random.hpp"
#include "mvis/visualize.hpp"

namespace fixtures {

struct FamilyRow {
	const char* name;
	std::size_t original, max320, max240, max160, max80;
};

// Malimg family sample counts and the four capped variants.
inline const std::array<FamilyRow, 25>& malimg_table() {
	static const std::array<FamilyRow, 25> rows = {{
		{"Allaple.L", 1591, 320, 240, 160, 80},
		{"Allaple.A", 2949, 320, 240, 160, 80},
		{"Yuner.A", 800, 320, 240, 160, 80},
		{"Lolyda.AA1", 213, 213, 213, 160, 80},
		{"Lolyda.AA2", 184, 184, 184, 160, 80},
		{"Lolyda.AA3", 123, 123, 123, 123, 80},
		{"C2Lop.P", 146, 146, 146, 146, 80},
		{"C2Lop.gen!g", 200, 200, 200, 160, 80},
		{"Instantaccess", 431, 320, 240, 160, 80},
		{"Swizzor.gen!l", 132, 132, 132, 132, 80},
		{"Swizzor.gen!E", 128, 128, 128, 128, 80},
		{"VB.AT", 408, 320, 240, 160, 80},
		{"Fakerean", 381, 320, 240, 160, 80},
		{"Alueron.gen!J", 198, 198, 198, 160, 80},
		{"Malex.gen!J", 136, 136, 136, 136, 80},
		{"Lolyda.AT", 159, 159, 159, 159, 80},
		{"Adialer.C", 122, 122, 122, 122, 80},
		{"WinTrim.BX", 97, 97, 97, 97, 80},
		{"Dialplatform.B", 177, 177, 177, 160, 80},
		{"Dontovo.A", 162, 162, 162, 160, 80},
		{"Obfuscator.AD", 142, 142, 142, 142, 80},
		{"Agent.FYI", 116, 116, 116, 116, 80},
		{"Autorun.K", 106, 106, 106, 106, 80},
		{"Rbot!gen", 158, 158, 158, 158, 80},
		{"Skintrim.N", 80, 80, 80, 80, 80},
	}};
	return rows;
}

/// Unsplit manifest with the given per-family counts and synthetic paths.
inline mvis::CorpusManifest manifest_with_counts(const std::vector<std::string>& names,
		const std::vector<std::size_t>& counts) {
	mvis::CorpusManifest m;
	for (std::size_t f = 0; f < names.size(); ++f)
		m.family_table.push_back({names[f], f});
	char buf[32];
	for (std::size_t f = 0; f < names.size(); ++f)
		for (std::size_t i = 0; i < counts[f]; ++i) {
			std::snprintf(buf, sizeof buf, "/%05zu.png", i);
			m.records.push_back({"malimg/" + names[f] + buf, f, mvis::Split::none,
					mvis::sha256_hex(buf, std::char_traits<char>::length(buf))});
		}
	std::sort(m.records.begin(), m.records.end(),
			[](const auto& a, const auto& b) { return a.image_path < b.image_path; });
	return m;
}

inline mvis::CorpusManifest malimg_manifest() {
	std::vector<std::string> names;
	std::vector<std::size_t> counts;
	for (const auto& r : malimg_table()) {
		names.emplace_back(r.name);
		counts.push_back(r.original);
	}
	return manifest_with_counts(names, counts);
}

inline constexpr std::size_t kToyFamilies = 5;

/**
 * Bytes of one synthetic sample. Each family has its own structure, loosely
 * modelled on what packed code, padding and tables look like when rendered:
 *   0: horizontal ramp, 1: 4-byte stripes, 2: high-entropy noise,
 *   3: mostly zero padding with sparse bytes, 4: blocky 8x8 tiles.
 * Sizes vary so image heights differ within a family.
 */
inline std::vector<std::uint8_t> toy_sample(std::size_t family, mvis::Rng& rng) {
	const std::size_t size = 2048 + static_cast<std::size_t>(rng.below(4096));
	std::vector<std::uint8_t> bytes(size);
	for (std::size_t i = 0; i < size; ++i) {
		const std::size_t x = i % 32, y = i / 32;
		const int noise = static_cast<int>(rng.below(41)) - 20;
		int v = 0;
		switch (family) {
		case 0: v = static_cast<int>(x * 8); break;
		case 1: v = (x / 2) % 2 ? 230 : 20; break;
		case 2: v = static_cast<int>(rng.below(256)); break;
		case 3: v = rng.below(16) == 0 ? static_cast<int>(rng.below(256)) : 0; break;
		default: v = ((x / 8) + (y / 8)) % 2 ? 200 : 60; break;
		}
		if (family != 2 && family != 3)
			v += noise;
		bytes[i] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
	}
	return bytes;
}

/// Writes raw toy binaries under root/<family>/sample<i>.bin.
inline void write_toy_binaries(const std::filesystem::path& root, std::size_t per_family, std::uint64_t seed) {
	for (std::size_t f = 0; f < kToyFamilies; ++f) {
		auto dir = root / ("family" + std::to_string(f));
		std::filesystem::create_directories(dir);
		auto rng = mvis::Rng::keyed({seed, f});
		for (std::size_t i = 0; i < per_family; ++i) {
			auto bytes = toy_sample(f, rng);
			char name[32];
			std::snprintf(name, sizeof name, "sample%03zu.bin", i);
			std::ofstream out(dir / name, std::ios::binary);
			out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
		}
	}
}

/// Binaries -> PNGs in root/<family>/<name>.png, via the library conversion.
inline void convert_tree(const std::filesystem::path& bins, const std::filesystem::path& images) {
	namespace fs = std::filesystem;
	for (const auto& fam : fs::directory_iterator(bins)) {
		fs::create_directories(images / fam.path().filename());
		for (const auto& f : fs::directory_iterator(fam.path())) {
			auto img = mvis::bytes_to_image(mvis::read_binary(f.path()));
			mvis::write_image_png(img, images / fam.path().filename() / (f.path().stem().string() + ".png"));
		}
	}
}

/// In-memory toy corpus: unsplit manifest over "toy/family<f>/<i>" paths.
inline mvis::CorpusManifest toy_manifest(std::size_t per_family) {
	std::vector<std::string> names;
	for (std::size_t f = 0; f < kToyFamilies; ++f)
		names.push_back("family" + std::to_string(f));
	mvis::CorpusManifest m;
	for (std::size_t f = 0; f < names.size(); ++f)
		m.family_table.push_back({names[f], f});
	for (std::size_t f = 0; f < names.size(); ++f)
		for (std::size_t i = 0; i < per_family; ++i) {
			char buf[64];
			std::snprintf(buf, sizeof buf, "toy/family%zu/%04zu", f, i);
			m.records.push_back({buf, f, mvis::Split::none, mvis::sha256_hex(buf, std::char_traits<char>::length(buf))});
		}
	std::sort(m.records.begin(), m.records.end(),
			[](const auto& a, const auto& b) { return a.image_path < b.image_path; });
	return m;
}

/// Loader that synthesises the image for a toy_manifest record from its path.
inline auto toy_loader(std::uint64_t seed) {
	return [seed](const mvis::SampleRecord& r) {
		std::size_t f = 0, i = 0;
		std::sscanf(r.image_path.c_str(), "toy/family%zu/%zu", &f, &i);
		auto rng = mvis::Rng::keyed({seed, f, i});
		auto bytes = toy_sample(f, rng);
		mvis::RawBinary bin;
		bin.bytes = std::move(bytes);
		return mvis::bytes_to_image(bin);
	};
}

/// A fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
	auto dir = std::filesystem::temp_directory_path() / ("mvis_test_" + name);
	std::filesystem::remove_all(dir);
	std::filesystem::create_directories(dir);
	return dir;
}

} // namespace fixtures

#endif // MVIS_TESTS_FIXTURES_HPP_
