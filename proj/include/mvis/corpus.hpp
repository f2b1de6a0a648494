#ifndef MVIS_CORPUS_HPP_
#define MVIS_CORPUS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "mvis/error.hpp"
#include "mvis/random.hpp"
#include "mvis/text.hpp"

namespace mvis {

enum class Split { none, train, test };

inline const char* split_name(Split s) {
	switch (s) {
	case Split::train: return "train";
	case Split::test: return "test";
	default: return "none";
	}
}

inline std::optional<Split> parse_split(std::string_view s) {
	if (s == "train") return Split::train;
	if (s == "test") return Split::test;
	if (s == "none") return Split::none;
	return std::nullopt;
}

struct FamilyLabel {
	std::string name;
	std::size_t index = 0;

	friend bool operator==(const FamilyLabel&, const FamilyLabel&) = default;
};

struct SampleRecord {
	std::string image_path;
	std::size_t family = 0; ///< index into CorpusManifest::family_table
	Split split = Split::none;
	std::string content_hash;

	friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/**
 * A labeled sample list plus the knobs that produced it.
 *
 * Records stay in path order through every transformation; undersampling
 * removes records and splitting only relabels them.
 */
struct CorpusManifest {
	std::vector<SampleRecord> records;
	std::optional<std::size_t> cap;
	std::uint64_t seed = 0;
	std::optional<double> train_fraction;
	std::vector<FamilyLabel> family_table;
	std::vector<std::string> warnings;

	std::size_t family_count() const { return family_table.size(); }
	bool is_split() const { return train_fraction.has_value(); }

	std::vector<std::size_t> family_counts() const {
		std::vector<std::size_t> counts(family_table.size(), 0);
		for (const auto& r : records)
			++counts.at(r.family);
		return counts;
	}

	std::vector<std::size_t> indices_of(Split s) const {
		std::vector<std::size_t> out;
		for (std::size_t i = 0; i < records.size(); ++i)
			if (records[i].split == s)
				out.push_back(i);
		return out;
	}

	friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

/// Hex SHA-256 of a byte range.
inline std::string sha256_hex(const void* data, std::size_t size) {
	unsigned char digest[EVP_MAX_MD_SIZE];
	unsigned int len = 0;
	if (!EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr))
		throw Error("sha256 failed");
	std::ostringstream os;
	os << std::hex << std::setfill('0');
	for (unsigned int i = 0; i < len; ++i)
		os << std::setw(2) << static_cast<int>(digest[i]);
	return os.str();
}

inline std::string file_sha256(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path.string());
	std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
	return sha256_hex(bytes.data(), bytes.size());
}

/// floor(fraction * n), tolerant of products like 0.29 * 100 landing just below an integer.
inline std::size_t train_count(double fraction, std::size_t n) {
	return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

/// Checks every structural invariant; throws on the first violation.
inline void validate(const CorpusManifest& m) {
	for (std::size_t i = 0; i < m.family_table.size(); ++i)
		if (m.family_table[i].index != i)
			throw Error("family indices not contiguous at " + m.family_table[i].name);
	std::set<std::string> names;
	for (const auto& f : m.family_table)
		if (!names.insert(f.name).second)
			throw Error("duplicate family name " + f.name);
	std::set<std::string_view> paths;
	for (const auto& r : m.records) {
		if (r.family >= m.family_table.size())
			throw Error("unknown family index " + std::to_string(r.family));
		if (!paths.insert(r.image_path).second)
			throw Error("duplicate path " + r.image_path);
		if (m.is_split() == (r.split == Split::none))
			throw Error("split label of " + r.image_path + " inconsistent with manifest state");
	}
	if (m.is_split()) {
		std::vector<std::size_t> total(m.family_table.size(), 0), train(m.family_table.size(), 0);
		for (const auto& r : m.records) {
			++total[r.family];
			train[r.family] += r.split == Split::train;
		}
		for (std::size_t f = 0; f < total.size(); ++f) {
			auto expect = total[f] < 2 ? total[f] : train_count(*m.train_fraction, total[f]);
			if (train[f] != expect)
				throw Error("family " + m.family_table[f].name + " has " + std::to_string(train[f])
						+ " train records, expected " + std::to_string(expect));
		}
	}
	if (m.cap) {
		auto counts = m.family_counts();
		for (std::size_t f = 0; f < counts.size(); ++f)
			if (counts[f] > *m.cap)
				throw Error("family " + m.family_table[f].name + " exceeds cap");
	}
}

/**
 * Scans root/<family>/<image>.png. Families are the subdirectory names in
 * lexicographic order; records are sorted by path.
 */
inline CorpusManifest ingest(const std::filesystem::path& root) {
	namespace fs = std::filesystem;
	if (!fs::is_directory(root))
		throw Error("not a directory: " + root.string());
	std::vector<std::string> families;
	for (const auto& entry : fs::directory_iterator(root))
		if (entry.is_directory())
			families.push_back(entry.path().filename().string());
	if (families.empty())
		throw Error("no families found");
	std::sort(families.begin(), families.end());

	CorpusManifest m;
	for (std::size_t f = 0; f < families.size(); ++f) {
		m.family_table.push_back({families[f], f});
		std::vector<std::string> files;
		for (const auto& entry : fs::directory_iterator(root / families[f])) {
			if (!entry.is_regular_file())
				continue;
			auto ext = entry.path().extension().string();
			std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
			if (ext == ".png")
				files.push_back((root / families[f] / entry.path().filename()).generic_string());
		}
		if (files.empty())
			throw Error("empty family " + families[f]);
		for (auto& p : files)
			m.records.push_back({std::move(p), f, Split::none, {}});
	}
	std::sort(m.records.begin(), m.records.end(),
			[](const SampleRecord& a, const SampleRecord& b) { return a.image_path < b.image_path; });
	for (auto& r : m.records)
		r.content_hash = file_sha256(r.image_path);
	return m;
}

namespace detail {

enum : std::uint64_t { kUndersampleStream = 1, kSplitStream = 2 };

inline std::vector<std::vector<std::size_t>> records_by_family(const CorpusManifest& m) {
	std::vector<std::vector<std::size_t>> by_family(m.family_table.size());
	for (std::size_t i = 0; i < m.records.size(); ++i)
		by_family.at(m.records[i].family).push_back(i);
	return by_family;
}

} // namespace detail

/**
 * Keeps min(n, cap) records per family, drawn uniformly without
 * replacement from a generator keyed by (seed, family index). Families at
 * or under the cap pass through unchanged.
 */
inline CorpusManifest undersample(const CorpusManifest& m, std::size_t cap, std::uint64_t seed) {
	if (cap == 0)
		throw Error("cap must be positive");
	if (m.is_split())
		throw Error("undersample requires an unsplit manifest");
	std::vector<bool> keep(m.records.size(), true);
	auto by_family = detail::records_by_family(m);
	for (std::size_t f = 0; f < by_family.size(); ++f) {
		auto& idx = by_family[f];
		if (idx.size() <= cap)
			continue;
		auto rng = Rng::keyed({seed, f, detail::kUndersampleStream});
		// partial Fisher-Yates: the first `cap` slots end up a uniform subset
		for (std::size_t i = 0; i < cap; ++i) {
			auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
			std::swap(idx[i], idx[j]);
		}
		for (std::size_t i = cap; i < idx.size(); ++i)
			keep[idx[i]] = false;
	}
	CorpusManifest out = m;
	out.records.clear();
	for (std::size_t i = 0; i < m.records.size(); ++i)
		if (keep[i])
			out.records.push_back(m.records[i]);
	out.cap = cap;
	out.seed = seed;
	return out;
}

/**
 * Stratified split: each family is shuffled with a generator keyed by
 * (seed, family index) and its first floor(fraction * n) records go to
 * train. A family with fewer than two records goes entirely to train and
 * the manifest records a warning.
 */
inline CorpusManifest split(const CorpusManifest& m, double train_fraction, std::uint64_t seed) {
	if (!(train_fraction > 0.0 && train_fraction < 1.0))
		throw Error("train fraction must lie in (0,1)");
	if (m.is_split())
		throw Error("manifest is already split");
	CorpusManifest out = m;
	auto by_family = detail::records_by_family(m);
	for (std::size_t f = 0; f < by_family.size(); ++f) {
		auto& idx = by_family[f];
		if (idx.size() < 2) {
			for (auto i : idx)
				out.records[i].split = Split::train;
			out.warnings.push_back("family " + m.family_table[f].name + " has " + std::to_string(idx.size())
					+ " record(s); all assigned to train");
			continue;
		}
		auto rng = Rng::keyed({seed, f, detail::kSplitStream});
		rng.shuffle(std::span<std::size_t>(idx));
		const auto n_train = train_count(train_fraction, idx.size());
		for (std::size_t i = 0; i < idx.size(); ++i)
			out.records[idx[i]].split = i < n_train ? Split::train : Split::test;
	}
	out.train_fraction = train_fraction;
	out.seed = seed;
	return out;
}

/**
 * Manifest text format:
 *
 *     # mvis-manifest 1
 *     # cap=<n|none>
 *     # seed=<n>
 *     # train_fraction=<x|none>
 *     # warning=<text>            (zero or more)
 *     path<TAB>family_name<TAB>family_index<TAB>split<TAB>content_hash
 */
inline void write_manifest(const CorpusManifest& m, std::ostream& os) {
	os << "# mvis-manifest 1\n";
	os << "# cap=" << (m.cap ? std::to_string(*m.cap) : "none") << '\n';
	os << "# seed=" << m.seed << '\n';
	os << "# train_fraction=" << (m.train_fraction ? format_real(*m.train_fraction) : "none") << '\n';
	for (const auto& w : m.warnings)
		os << "# warning=" << w << '\n';
	for (const auto& r : m.records) {
		if (r.image_path.find_first_of("\t\n") != std::string::npos)
			throw Error("path contains tab or newline: " + r.image_path);
		os << r.image_path << '\t' << m.family_table.at(r.family).name << '\t' << r.family << '\t'
		   << split_name(r.split) << '\t' << r.content_hash << '\n';
	}
}

inline void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
	validate(m);
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error("cannot write " + path.string());
	write_manifest(m, out);
	if (!out)
		throw Error("cannot write " + path.string());
}

inline CorpusManifest read_manifest(std::istream& in) {
	CorpusManifest m;
	std::map<std::size_t, std::string> families;
	std::string line;
	std::size_t line_no = 0;
	auto fail = [&](const std::string& why) -> Error {
		return Error("manifest line " + std::to_string(line_no) + ": " + why);
	};
	while (std::getline(in, line)) {
		++line_no;
		if (line.empty())
			continue;
		if (line[0] == '#') {
			std::string_view body(line);
			body.remove_prefix(1);
			while (!body.empty() && body.front() == ' ')
				body.remove_prefix(1);
			auto eq = body.find('=');
			if (eq == std::string_view::npos)
				continue;
			auto key = body.substr(0, eq);
			auto value = body.substr(eq + 1);
			if (key == "cap") {
				if (value != "none") {
					auto v = parse_uint(value);
					if (!v || *v == 0)
						throw fail("bad cap");
					m.cap = *v;
				}
			} else if (key == "seed") {
				auto v = parse_uint(value);
				if (!v)
					throw fail("bad seed");
				m.seed = *v;
			} else if (key == "train_fraction") {
				if (value != "none") {
					auto v = parse_real(value);
					if (!v || !(*v > 0.0 && *v < 1.0))
						throw fail("bad train_fraction");
					m.train_fraction = *v;
				}
			} else if (key == "warning") {
				m.warnings.emplace_back(value);
			} else {
				throw fail("unknown header key");
			}
			continue;
		}
		auto fields = split_on(line, '\t');
		if (fields.size() != 5)
			throw fail("expected 5 tab-separated fields, got " + std::to_string(fields.size()));
		auto index = parse_uint(fields[2]);
		if (!index)
			throw fail("bad family index");
		auto s = parse_split(fields[3]);
		if (!s)
			throw fail("bad split label");
		if (fields[0].empty() || fields[1].empty())
			throw fail("empty field");
		auto [it, inserted] = families.emplace(*index, std::string(fields[1]));
		if (!inserted && it->second != fields[1])
			throw fail("family index " + std::to_string(*index) + " names both " + it->second + " and "
					+ std::string(fields[1]));
		m.records.push_back({std::string(fields[0]), *index, *s, std::string(fields[4])});
	}
	std::size_t expect = 0;
	for (const auto& [idx, name] : families) {
		if (idx != expect++)
			throw Error("unknown family index " + std::to_string(idx) + " (indices must be contiguous from 0)");
		m.family_table.push_back({name, idx});
	}
	validate(m);
	return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path.string());
	return read_manifest(in);
}

} // namespace mvis

#endif // MVIS_CORPUS_HPP_
