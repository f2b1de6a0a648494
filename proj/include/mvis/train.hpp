#ifndef MVIS_TRAIN_HPP_
#define MVIS_TRAIN_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvis/corpus.hpp"
#include "mvis/data.hpp"
#include "mvis/error.hpp"
#include "mvis/models.hpp"
#include "mvis/nn/kernels.hpp"
#include "mvis/nn/network.hpp"
#include "mvis/nn/sgd.hpp"
#include "mvis/random.hpp"
#include "mvis/text.hpp"

namespace mvis {

struct TrainConfig {
	double learning_rate = 1e-4;
	double momentum = 0.9;
	std::size_t batch_size = 32;
	std::size_t epochs = 50;
	std::uint64_t seed = 42;
	bool shuffle_each_epoch = true;
	std::string loss = "categorical_crossentropy";

	/// Checkpoints go to <checkpoint_dir>/<run_id>.epoch<N>.mvw every N epochs (0 = never).
	std::filesystem::path checkpoint_dir;
	std::string run_id = "run";
	std::size_t checkpoint_every = 0;

	std::string to_string() const {
		std::ostringstream os;
		os << "lr=" << format_real(learning_rate) << " momentum=" << format_real(momentum) << " batch=" << batch_size
		   << " epochs=" << epochs << " seed=" << seed << " loss=" << loss
		   << " shuffle=" << (shuffle_each_epoch ? "true" : "false");
		return os.str();
	}
};

struct EpochRecord {
	std::size_t epoch = 0;
	double acc = 0.0;
	double loss = 0.0;
	std::optional<double> val_acc;
	std::optional<double> val_loss;

	friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainCurve {
	std::vector<EpochRecord> epochs;
	std::size_t optimizer_steps = 0;

	friend bool operator==(const TrainCurve&, const TrainCurve&) = default;
};

struct Batch {
	std::vector<std::size_t> records; ///< indices into the manifest
	std::vector<std::size_t> labels;
};

namespace detail {
enum : std::uint64_t { kBatchStream = 3, kDropoutStream = 4 };
}

/**
 * Batches over one split for one epoch. The order is a permutation keyed by
 * (seed, epoch); the last batch may be short.
 */
inline std::vector<Batch> batch_iterator(const CorpusManifest& m, Split split, std::size_t batch_size,
		std::uint64_t seed, std::size_t epoch, bool shuffle = true) {
	if (batch_size == 0)
		throw Error("batch size must be positive");
	auto idx = m.indices_of(split);
	if (shuffle) {
		auto rng = Rng::keyed({seed, epoch, detail::kBatchStream});
		rng.shuffle(std::span<std::size_t>(idx));
	}
	std::vector<Batch> out;
	for (std::size_t start = 0; start < idx.size(); start += batch_size) {
		Batch b;
		for (std::size_t i = start; i < std::min(idx.size(), start + batch_size); ++i) {
			b.records.push_back(idx[i]);
			b.labels.push_back(m.records[idx[i]].family);
		}
		out.push_back(std::move(b));
	}
	return out;
}

/// Index of the largest logit; ties go to the lower class.
inline std::size_t argmax(const Tensor& t) {
	std::size_t best = 0;
	for (std::size_t i = 1; i < t.size(); ++i)
		if (t[i] > t[best])
			best = i;
	return best;
}

struct SplitScore {
	double accuracy = 0.0;
	double loss = 0.0;
	std::size_t count = 0;
};

/// Inference-mode mean loss and accuracy over a split.
inline SplitScore score_split(const ModelSpec& model, const CorpusManifest& m, Split split, DataSource& data) {
	SplitScore s;
	std::size_t correct = 0;
	double loss = 0.0;
	for (auto i : m.indices_of(split)) {
		auto logits = nn::forward(model.layers, data.input(m.records[i]));
		auto target = m.records[i].family;
		loss += nn::softmax_cross_entropy(logits, target).loss;
		correct += argmax(logits) == target;
		++s.count;
	}
	if (s.count) {
		s.accuracy = static_cast<double>(correct) / static_cast<double>(s.count);
		s.loss = loss / static_cast<double>(s.count);
	}
	return s;
}

inline std::vector<std::reference_wrapper<Tensor>> trainable_tensors(ModelSpec& model) {
	std::vector<std::reference_wrapper<Tensor>> out;
	for (auto& l : model.layers)
		if (l.has_params() && !l.frozen) {
			out.emplace_back(*l.weights());
			out.emplace_back(*l.bias());
		}
	return out;
}

/**
 * Mini-batch momentum SGD over the train split; the test split doubles as
 * the validation set evaluated after every epoch. Frozen layers receive no
 * update. Train accuracy and loss are the running values observed during
 * the epoch (training mode, pre-update weights), as Keras reports them.
 */
inline TrainCurve train_model(ModelSpec& model, const CorpusManifest& corpus, const TrainConfig& cfg,
		DataSource& data) {
	if (!corpus.is_split())
		throw Error("corpus has no train/test split");
	if (model.class_count != corpus.family_count())
		throw Error("class count mismatch: model has " + std::to_string(model.class_count) + " classes, corpus has "
				+ std::to_string(corpus.family_count()) + " families");
	if (corpus.indices_of(Split::train).empty())
		throw Error("empty train split");
	if (cfg.epochs == 0)
		throw Error("epochs must be positive");
	if (data.side() != model.input_side || data.channels() != model.input_channels)
		throw Error("data source shape does not match model input");

	nn::OptimizerState opt;
	opt.learning_rate = static_cast<float>(cfg.learning_rate);
	opt.momentum = static_cast<float>(cfg.momentum);
	const bool has_val = !corpus.indices_of(Split::test).empty();

	TrainCurve curve;
	for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
		auto dropout_rng = Rng::keyed({cfg.seed, epoch, detail::kDropoutStream});
		double loss_sum = 0.0;
		std::size_t correct = 0;
		for (const auto& batch : batch_iterator(corpus, Split::train, cfg.batch_size, cfg.seed, epoch,
					 cfg.shuffle_each_epoch)) {
			auto grads = nn::Gradients::zeros_like(model.layers);
			for (std::size_t b = 0; b < batch.records.size(); ++b) {
				nn::Trace trace;
				auto logits = nn::forward(model.layers, data.input(corpus.records[batch.records[b]]),
						{.training = true, .dropout_rng = &dropout_rng, .trace = &trace});
				auto lg = nn::softmax_cross_entropy(logits, batch.labels[b]);
				loss_sum += lg.loss;
				correct += argmax(logits) == batch.labels[b];
				nn::backward(model.layers, trace, std::move(lg.grad_logits), grads);
			}
			const float scale = 1.0f / static_cast<float>(batch.records.size());
			std::vector<Tensor> flat;
			for (std::size_t i = 0; i < model.layers.size(); ++i)
				if (model.layers[i].has_params() && !model.layers[i].frozen) {
					for (auto* t : {&grads.weights[i], &grads.bias[i]}) {
						for (auto& v : t->values())
							v *= scale;
						flat.push_back(std::move(*t));
					}
				}
			auto params = trainable_tensors(model);
			nn::sgd_momentum_step(params, flat, opt);
			++curve.optimizer_steps;
		}
		const auto n_train = static_cast<double>(corpus.indices_of(Split::train).size());
		EpochRecord rec{epoch, static_cast<double>(correct) / n_train, loss_sum / n_train, {}, {}};
		if (has_val) {
			auto v = score_split(model, corpus, Split::test, data);
			rec.val_acc = v.accuracy;
			rec.val_loss = v.loss;
		}
		curve.epochs.push_back(rec);
		if (cfg.checkpoint_every && !cfg.checkpoint_dir.empty() && epoch % cfg.checkpoint_every == 0)
			save_weights(model, cfg.checkpoint_dir / (cfg.run_id + ".epoch" + std::to_string(epoch) + ".mvw"));
	}
	return curve;
}

// ---------------------------------------------------------------------------
// Curve CSV: epoch,acc,loss,val_acc,val_loss (empty val fields when absent)
// ---------------------------------------------------------------------------

inline void write_curve_csv(const TrainCurve& curve, std::ostream& os) {
	os << "epoch,acc,loss,val_acc,val_loss\n";
	for (const auto& r : curve.epochs) {
		os << r.epoch << ',' << format_real(r.acc) << ',' << format_real(r.loss) << ','
		   << (r.val_acc ? format_real(*r.val_acc) : "") << ',' << (r.val_loss ? format_real(*r.val_loss) : "")
		   << '\n';
	}
}

inline void emit_curve_csv(const TrainCurve& curve, const std::filesystem::path& path) {
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error("cannot write " + path.string());
	write_curve_csv(curve, out);
	if (!out)
		throw Error("cannot write " + path.string());
}

inline TrainCurve read_curve_csv(std::istream& in) {
	TrainCurve curve;
	std::string line;
	std::size_t line_no = 0;
	while (std::getline(in, line)) {
		++line_no;
		if (line_no == 1) {
			if (line != "epoch,acc,loss,val_acc,val_loss")
				throw Error("curve csv: unexpected header");
			continue;
		}
		if (line.empty())
			continue;
		auto f = split_on(line, ',');
		auto bad = [&] { return Error("curve csv line " + std::to_string(line_no) + ": malformed"); };
		if (f.size() != 5)
			throw bad();
		auto epoch = parse_uint(f[0]);
		auto acc = parse_real(f[1]);
		auto loss = parse_real(f[2]);
		if (!epoch || !acc || !loss)
			throw bad();
		EpochRecord r{*epoch, *acc, *loss, {}, {}};
		if (!f[3].empty()) {
			if (!(r.val_acc = parse_real(f[3])))
				throw bad();
		}
		if (!f[4].empty()) {
			if (!(r.val_loss = parse_real(f[4])))
				throw bad();
		}
		curve.epochs.push_back(r);
	}
	return curve;
}

inline TrainCurve load_curve_csv(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error("cannot open " + path.string());
	return read_curve_csv(in);
}

} // namespace mvis

#endif // MVIS_TRAIN_HPP_
