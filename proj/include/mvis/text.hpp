#ifndef MVIS_TEXT_HPP_
#define MVIS_TEXT_HPP_

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace mvis {

/// Shortest decimal that round-trips to the same double.
namespace detail {
// Shortest round-trip text; plain decimal notation for ordinary magnitudes.
template <typename T>
std::string shortest(T v) {
	char buf[400];
	const T a = v < 0 ? -v : v;
	const bool plain = a == 0 || (a >= T(1e-6) && a < T(1e15));
	auto res = plain ? std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed)
					 : std::to_chars(buf, buf + sizeof buf, v);
	return std::string(buf, res.ptr);
}
} // namespace detail

inline std::string format_real(double v) { return detail::shortest(v); }
inline std::string format_real(float v) { return detail::shortest(v); }

inline std::optional<double> parse_real(std::string_view s) {
	double v = 0;
	auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (res.ec != std::errc() || res.ptr != s.data() + s.size())
		return std::nullopt;
	return v;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
	std::uint64_t v = 0;
	auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
		return std::nullopt;
	return v;
}

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
	std::vector<std::string_view> out;
	std::size_t start = 0;
	for (;;) {
		auto pos = s.find(sep, start);
		out.push_back(s.substr(start, pos - start));
		if (pos == std::string_view::npos)
			break;
		start = pos + 1;
	}
	return out;
}

} // namespace mvis

#endif // MVIS_TEXT_HPP_
