#ifndef MVIS_RANDOM_HPP_
#define MVIS_RANDOM_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace mvis {

/**
 * Portable deterministic random source.
 *
 * std::mt19937_64 has a fully specified output sequence, but the standard
 * distributions do not, so bounded integers and uniform reals are derived
 * here by hand. Results are identical across standard libraries.
 */
class Rng {
public:
	explicit Rng(std::uint64_t seed) : engine_(seed) { }

	/// Seed from an ordered tuple of keys, e.g. (seed, family index).
	static Rng keyed(std::initializer_list<std::uint64_t> keys) {
		std::uint64_t h = 0x6a09e667f3bcc908ULL;
		for (auto k : keys)
			h = mix(h ^ mix(k + 0x9e3779b97f4a7c15ULL));
		return Rng(h);
	}

	std::uint64_t next() { return engine_(); }

	/// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
	std::uint64_t below(std::uint64_t bound) {
		if (bound <= 1)
			return 0;
		const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
		std::uint64_t x;
		do {
			x = engine_();
		} while (x >= limit);
		return x % bound;
	}

	/// Uniform double in [0, 1) with 53 random bits.
	double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

	/// Uniform double in [lo, hi).
	double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

	template<typename T>
	void shuffle(std::span<T> items) {
		for (std::size_t i = items.size(); i > 1; --i) {
			std::size_t j = static_cast<std::size_t>(below(i));
			std::swap(items[i - 1], items[j]);
		}
	}

private:
	static std::uint64_t mix(std::uint64_t z) {
		// splitmix64 finalizer
		z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
		z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
		return z ^ (z >> 31);
	}

	std::mt19937_64 engine_;
};

} // namespace mvis

#endif // MVIS_RANDOM_HPP_
