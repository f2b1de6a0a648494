#ifndef MVIS_DATA_HPP_
#define MVIS_DATA_HPP_

#include <cstddef>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "mvis/corpus.hpp"
#include "mvis/png_io.hpp"
#include "mvis/tensor.hpp"
#include "mvis/visualize.hpp"

namespace mvis {

/**
 * Turns manifest records into network inputs. Images come from a loader
 * (PNG on disk by default) and the resized plane is cached per path, so
 * each file is decoded once per source.
 */
class DataSource {
public:
	using Loader = std::function<GrayscaleImage(const SampleRecord&)>;

	DataSource(std::size_t side, std::size_t channels, Loader loader = png_loader())
		: side_(side), channels_(channels), loader_(std::move(loader)) { }

	static Loader png_loader() {
		return [](const SampleRecord& r) { return read_image_png(r.image_path); };
	}

	std::size_t side() const { return side_; }
	std::size_t channels() const { return channels_; }

	Tensor input(const SampleRecord& r) {
		auto it = cache_.find(r.image_path);
		if (it == cache_.end()) {
			auto in = image_to_input(loader_(r), side_, 1);
			it = cache_.emplace(r.image_path, std::move(in.values)).first;
		}
		const auto& plane = it->second;
		std::vector<float> values;
		values.reserve(channels_ * plane.size());
		for (std::size_t c = 0; c < channels_; ++c)
			values.insert(values.end(), plane.begin(), plane.end());
		return Tensor({channels_, side_, side_}, std::move(values));
	}

private:
	std::size_t side_;
	std::size_t channels_;
	Loader loader_;
	std::map<std::string, std::vector<float>> cache_;
};

} // namespace mvis

#endif // MVIS_DATA_HPP_
