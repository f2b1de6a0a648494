#ifndef MVIS_STRATEGY_HPP_
#define MVIS_STRATEGY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvis/corpus.hpp"
#include "mvis/data.hpp"
#include "mvis/error.hpp"
#include "mvis/evalmetrics.hpp"
#include "mvis/models.hpp"
#include "mvis/train.hpp"

namespace mvis {

struct StrategyConfig {
	std::vector<std::string> stage1_candidates = {"NasNet", "DenseNet201", "Xception", "ResNet50", "VGG19", "VGG16"};
	std::size_t stage1_cap = 80;
	double stage1_freeze = 0.8;
	std::vector<std::size_t> stage2_caps = {240, 320};
	std::vector<double> stage2_freezes = {0.2, 0.4, 0.6, 0.8};
	std::size_t shortlist_size = 2;
	TrainConfig train_cfg;
	EvalScope stage2_scope = EvalScope::all;
	double train_fraction = 0.9;
	std::uint64_t seed = 42;
};

/// Builds a named model for `classes` outputs with the given freeze fraction.
using ModelFactory = std::function<ModelSpec(const std::string& name, std::size_t classes, double freeze)>;

inline ModelFactory default_factory(std::size_t input_side = 224, std::size_t input_channels = 3,
		std::uint64_t init_seed = 0) {
	return [=](const std::string& name, std::size_t classes, double freeze) {
		return build_model(name, classes, freeze, input_side, input_channels, init_seed);
	};
}

/// Pretrained backbones applied after a model is built (name -> MVW1 file).
using BackboneMap = std::map<std::string, std::filesystem::path>;

struct Stage1Entry {
	std::string name;
	TrainCurve curve;
	double val_acc = 0.0;
	double val_loss = 0.0;
	bool imported = false;
};

struct Stage1Result {
	std::vector<Stage1Entry> ranked;
	std::vector<std::string> shortlist;
	std::vector<std::string> skipped; ///< catalog-only candidates with no imported curve
};

struct Stage2Cell {
	std::string model;
	std::size_t cap = 0;
	double freeze = 0.0;
	TrainCurve curve;
	EvalReport report;
	std::string weights; ///< MVW1 bytes of the trained model

	std::string id() const {
		std::ostringstream os;
		os << model << "_max" << cap << "_fz" << static_cast<int>(std::lround(freeze * 100.0));
		return os.str();
	}

	std::string title() const {
		std::ostringstream os;
		os << model << " Frozen" << static_cast<int>(std::lround(freeze * 100.0)) << "% trained by Max" << cap;
		return os.str();
	}
};

struct Stage2Result {
	std::vector<Stage2Cell> cells; ///< grid order: model, cap, freeze
	std::vector<std::size_t> ranking;
	std::size_t best = 0;
};

struct StrategyReport {
	Stage1Result stage1;
	Stage2Result stage2;
	std::string scope;
};

/// Final-epoch validation accuracy descending, then validation loss, then name.
inline void rank_stage1(std::vector<Stage1Entry>& entries) {
	std::sort(entries.begin(), entries.end(), [](const Stage1Entry& a, const Stage1Entry& b) {
		if (a.val_acc != b.val_acc)
			return a.val_acc > b.val_acc;
		if (a.val_loss != b.val_loss)
			return a.val_loss < b.val_loss;
		return a.name < b.name;
	});
}

namespace detail {

inline Stage1Entry stage1_entry(std::string name, TrainCurve curve, bool imported) {
	if (curve.epochs.empty())
		throw Error("candidate " + name + " has an empty curve");
	const auto& last = curve.epochs.back();
	if (!last.val_acc || !last.val_loss)
		throw Error("candidate " + name + " has no validation values");
	Stage1Entry e{std::move(name), std::move(curve), *last.val_acc, *last.val_loss, imported};
	return e;
}

inline void apply_backbone(ModelSpec& m, const std::string& name, const BackboneMap& backbones) {
	for (const auto& [key, path] : backbones)
		if (normalize_model_name(key) == normalize_model_name(name))
			load_weights(m, path, true);
}

} // namespace detail

/**
 * Screens every candidate at the stage-1 freeze fraction on the capped
 * corpus. Buildable candidates are trained here; catalog-only ones take
 * part through curves produced elsewhere (`imported`, keyed by name).
 */
inline Stage1Result stage1_screen(const StrategyConfig& cfg, const CorpusManifest& corpus, DataSource& data,
		const std::map<std::string, TrainCurve>& imported = {}, const ModelFactory& factory = default_factory(),
		const BackboneMap& backbones = {}) {
	Stage1Result r;
	std::vector<Stage1Entry> entries;
	for (const auto& name : cfg.stage1_candidates) {
		const TrainCurve* curve = nullptr;
		for (const auto& [key, c] : imported)
			if (normalize_model_name(key) == normalize_model_name(name))
				curve = &c;
		if (curve) {
			entries.push_back(detail::stage1_entry(name, *curve, true));
		} else if (is_buildable(name)) {
			auto model = factory(name, corpus.family_count(), cfg.stage1_freeze);
			detail::apply_backbone(model, name, backbones);
			auto trained = train_model(model, corpus, cfg.train_cfg, data);
			entries.push_back(detail::stage1_entry(name, std::move(trained), false));
		} else {
			catalog_lookup(name); // throws for names that resolve nowhere
			r.skipped.push_back(name);
		}
	}
	if (entries.empty())
		throw Error("no trainable or imported candidate");
	rank_stage1(entries);
	for (std::size_t i = 0; i < std::min(cfg.shortlist_size, entries.size()); ++i)
		r.shortlist.push_back(entries[i].name);
	r.ranked = std::move(entries);
	return r;
}

/// Accuracy, then macro recall, then macro precision (all exact), then cell id.
inline std::vector<std::size_t> rank_stage2(const std::vector<Stage2Cell>& cells) {
	std::vector<std::size_t> order(cells.size());
	std::iota(order.begin(), order.end(), 0);
	std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
		const auto& a = cells[i].report.exact;
		const auto& b = cells[j].report.exact;
		if (a.accuracy != b.accuracy)
			return a.accuracy > b.accuracy;
		if (a.recall_macro != b.recall_macro)
			return a.recall_macro > b.recall_macro;
		if (a.precision_macro != b.precision_macro)
			return a.precision_macro > b.precision_macro;
		return cells[i].id() < cells[j].id();
	});
	return order;
}

/**
 * Trains every (model, cap, freeze) cell and evaluates it. With scope=all
 * the evaluation covers `eval_corpus` (normally the full, uncapped set);
 * with test_split it uses the cell's own held-out records.
 */
inline Stage2Result stage2_grid(const StrategyConfig& cfg, const std::vector<std::string>& shortlist,
		const std::map<std::size_t, CorpusManifest>& corpora_by_cap, const CorpusManifest& eval_corpus,
		DataSource& data, const ModelFactory& factory = default_factory(), const BackboneMap& backbones = {}) {
	Stage2Result r;
	for (auto cap : cfg.stage2_caps)
		if (!corpora_by_cap.count(cap))
			throw Error("missing corpus for cap " + std::to_string(cap));
	for (const auto& name : shortlist) {
		for (auto cap : cfg.stage2_caps) {
			const auto& corpus = corpora_by_cap.at(cap);
			for (auto freeze : cfg.stage2_freezes) {
				Stage2Cell cell;
				cell.model = name;
				cell.cap = cap;
				cell.freeze = freeze;
				auto model = factory(name, corpus.family_count(), freeze);
				detail::apply_backbone(model, name, backbones);
				cell.curve = train_model(model, corpus, cfg.train_cfg, data);
				cell.report = cfg.stage2_scope == EvalScope::all ? evaluate(model, eval_corpus, EvalScope::all, data)
																 : evaluate(model, corpus, EvalScope::test_split, data);
				std::vector<std::pair<std::string, const Tensor*>> list;
				for (auto& p : nn::named_params(model.layers))
					list.emplace_back(p.name, &p.tensor.get());
				cell.weights = encode_weights(list);
				r.cells.push_back(std::move(cell));
			}
		}
	}
	if (r.cells.empty())
		throw Error("empty stage-2 grid");
	r.ranking = rank_stage2(r.cells);
	r.best = r.ranking.front();
	return r;
}

/// Full procedure from an uncapped, unsplit corpus.
inline StrategyReport run_strategy(const StrategyConfig& cfg, const CorpusManifest& full, DataSource& data,
		const std::map<std::string, TrainCurve>& imported = {}, const ModelFactory& factory = default_factory(),
		const BackboneMap& backbones = {}) {
	auto prepare = [&](std::size_t cap) {
		return split(undersample(full, cap, cfg.seed), cfg.train_fraction, cfg.seed);
	};
	StrategyReport report;
	report.stage1 = stage1_screen(cfg, prepare(cfg.stage1_cap), data, imported, factory, backbones);
	std::map<std::size_t, CorpusManifest> corpora;
	for (auto cap : cfg.stage2_caps)
		corpora.emplace(cap, prepare(cap));
	std::vector<std::string> trainable;
	for (const auto& name : report.stage1.shortlist)
		if (is_buildable(name))
			trainable.push_back(name);
	if (trainable.empty())
		throw Error("shortlist contains no buildable model");
	report.stage2 = stage2_grid(cfg, trainable, corpora, full, data, factory, backbones);
	report.scope = scope_name(cfg.stage2_scope);
	return report;
}

// ---------------------------------------------------------------------------
// report/summary.txt, report/stage1/<model>.csv,
// report/stage2/<model>_max<cap>_fz<pct>/{metrics,confusion,curve}.csv + weights.mvw
// ---------------------------------------------------------------------------

inline std::string file_safe(std::string s) {
	for (auto& c : s)
		if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
			c = '_';
	return s;
}

inline std::string stage2_table(const Stage2Result& s2) {
	std::size_t width = 5;
	for (const auto& c : s2.cells)
		width = std::max(width, c.title().size());
	std::ostringstream os;
	os << std::left << std::setw(static_cast<int>(width)) << "Model"
	   << "  Accuracy  Precision(micro)  Precision(macro)  Recall(micro)  Recall(macro)\n";
	for (auto i : s2.ranking) {
		const auto& c = s2.cells[i];
		const auto& r = c.report;
		os << std::left << std::setw(static_cast<int>(width)) << c.title() << std::right << "  " << std::setw(8)
		   << percent2(r.accuracy) << "  " << std::setw(16) << percent2(r.precision_micro) << "  " << std::setw(16)
		   << percent2(r.precision_macro) << "  " << std::setw(13) << percent2(r.recall_micro) << "  "
		   << std::setw(13) << percent2(r.recall_macro) << '\n';
	}
	return os.str();
}

inline std::string render_summary(const StrategyReport& report, const StrategyConfig& cfg) {
	std::ostringstream os;
	os << "Stage 1: screening at frozen " << std::lround(cfg.stage1_freeze * 100) << "% on Max" << cfg.stage1_cap
	   << "\n";
	os << "rank  model  val_acc  val_loss  source\n";
	for (std::size_t i = 0; i < report.stage1.ranked.size(); ++i) {
		const auto& e = report.stage1.ranked[i];
		char loss[32];
		std::snprintf(loss, sizeof loss, "%.4f", e.val_loss);
		os << i + 1 << "  " << e.name << "  " << percent2(e.val_acc) << "  " << loss << "  "
		   << (e.imported ? "imported" : "trained") << '\n';
	}
	for (const auto& s : report.stage1.skipped)
		os << "-  " << s << "  (no curve imported; skipped)\n";
	os << "shortlist:";
	for (const auto& s : report.stage1.shortlist)
		os << ' ' << s;
	os << "\n\n";
	const auto& s2 = report.stage2;
	os << "Stage 2: " << s2.cells.size() << " cells, evaluation scope " << report.scope;
	if (!s2.cells.empty())
		os << ", " << s2.cells.front().report.matrix.total() << " samples";
	os << "\n";
	os << stage2_table(s2);
	if (!s2.cells.empty())
		os << "\nbest: " << s2.cells[s2.best].title() << '\n';
	os << "train: " << cfg.train_cfg.to_string() << '\n';
	return os.str();
}

inline void render_report(const StrategyReport& report, const StrategyConfig& cfg, const std::filesystem::path& dir) {
	namespace fs = std::filesystem;
	fs::create_directories(dir / "stage1");
	fs::create_directories(dir / "stage2");
	detail::write_with(dir / "summary.txt", [&](std::ostream& os) { os << render_summary(report, cfg); });
	for (const auto& e : report.stage1.ranked)
		emit_curve_csv(e.curve, dir / "stage1" / (file_safe(e.name) + ".csv"));
	for (const auto& c : report.stage2.cells) {
		auto cell_dir = dir / "stage2" / file_safe(c.id());
		fs::create_directories(cell_dir);
		detail::write_with(cell_dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(c.report, os); });
		detail::write_with(cell_dir / "confusion.csv", [&](std::ostream& os) { write_confusion_csv(c.report, os); });
		emit_curve_csv(c.curve, cell_dir / "curve.csv");
		mvis::detail::write_file(cell_dir / "weights.mvw", c.weights);
	}
}

} // namespace mvis

#endif // MVIS_STRATEGY_HPP_
