#ifndef MVIS_EVALMETRICS_HPP_
#define MVIS_EVALMETRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mvis/corpus.hpp"
#include "mvis/data.hpp"
#include "mvis/error.hpp"
#include "mvis/models.hpp"
#include "mvis/nn/network.hpp"
#include "mvis/text.hpp"
#include "mvis/train.hpp"

namespace mvis {

using Rational = boost::multiprecision::cpp_rational;

/// k x k counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
	std::size_t k = 0;
	std::vector<std::uint64_t> counts;

	explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) { }

	std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * k + predicted]; }
	std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * k + predicted]; }

	std::uint64_t total() const {
		std::uint64_t s = 0;
		for (auto c : counts)
			s += c;
		return s;
	}

	friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
		std::size_t k) {
	if (truth.size() != predicted.size())
		throw Error("label sequences differ in length: " + std::to_string(truth.size()) + " vs "
				+ std::to_string(predicted.size()));
	if (k == 0)
		throw Error("confusion matrix needs at least one class");
	ConfusionMatrix m(k);
	for (std::size_t i = 0; i < truth.size(); ++i) {
		if (truth[i] >= k || predicted[i] >= k)
			throw Error("label out of range at sample " + std::to_string(i));
		++m.at(truth[i], predicted[i]);
	}
	return m;
}

struct ClassMetrics {
	std::string label;
	double precision = 0.0;
	double recall = 0.0;
	std::uint64_t support = 0;
	bool precision_undefined = false; ///< TP+FP = 0, reported as 0
	bool recall_undefined = false;    ///< TP+FN = 0, reported as 0
	Rational precision_exact;
	Rational recall_exact;
};

struct ExactMetrics {
	Rational accuracy;
	Rational precision_micro;
	Rational precision_macro;
	Rational recall_micro;
	Rational recall_macro;
};

struct EvalReport {
	double accuracy = 0.0;
	double precision_micro = 0.0;
	double precision_macro = 0.0;
	double recall_micro = 0.0;
	double recall_macro = 0.0;
	std::vector<ClassMetrics> per_class;
	ConfusionMatrix matrix;
	ExactMetrics exact;
	std::string scope;
};

/**
 * One-vs-rest per class: TP = M[c][c], FP = column sum - TP, FN = row sum - TP.
 * Macro values average the per-class ratios; micro values pool TP/FP/FN
 * first. Everything is exact until the final conversion to double, so
 * precision_micro == recall_micro == accuracy holds bit for bit.
 */
inline EvalReport metrics(const ConfusionMatrix& m, const std::vector<std::string>& labels = {}) {
	const auto total = m.total();
	if (m.k == 0 || total == 0)
		throw Error("empty confusion matrix");
	if (!labels.empty() && labels.size() != m.k)
		throw Error("label count does not match matrix");
	EvalReport r;
	r.matrix = m;
	std::uint64_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
	Rational p_sum = 0, r_sum = 0;
	for (std::size_t c = 0; c < m.k; ++c) {
		std::uint64_t row = 0, col = 0;
		for (std::size_t j = 0; j < m.k; ++j) {
			row += m.at(c, j);
			col += m.at(j, c);
		}
		const std::uint64_t tp = m.at(c, c), fp = col - tp, fn = row - tp;
		ClassMetrics cm;
		cm.label = labels.empty() ? std::to_string(c) : labels[c];
		cm.support = row;
		cm.precision_undefined = tp + fp == 0;
		cm.recall_undefined = tp + fn == 0;
		cm.precision_exact = cm.precision_undefined ? Rational(0) : Rational(tp, tp + fp);
		cm.recall_exact = cm.recall_undefined ? Rational(0) : Rational(tp, tp + fn);
		cm.precision = cm.precision_exact.convert_to<double>();
		cm.recall = cm.recall_exact.convert_to<double>();
		p_sum += cm.precision_exact;
		r_sum += cm.recall_exact;
		tp_sum += tp;
		fp_sum += fp;
		fn_sum += fn;
		r.per_class.push_back(std::move(cm));
	}
	auto& e = r.exact;
	e.accuracy = Rational(tp_sum, total);
	e.precision_micro = tp_sum + fp_sum ? Rational(tp_sum, tp_sum + fp_sum) : Rational(0);
	e.recall_micro = tp_sum + fn_sum ? Rational(tp_sum, tp_sum + fn_sum) : Rational(0);
	e.precision_macro = p_sum / static_cast<std::uint64_t>(m.k);
	e.recall_macro = r_sum / static_cast<std::uint64_t>(m.k);
	r.accuracy = e.accuracy.convert_to<double>();
	r.precision_micro = e.precision_micro.convert_to<double>();
	r.recall_micro = e.recall_micro.convert_to<double>();
	r.precision_macro = e.precision_macro.convert_to<double>();
	r.recall_macro = e.recall_macro.convert_to<double>();
	return r;
}

enum class EvalScope { test_split, all };

inline const char* scope_name(EvalScope s) { return s == EvalScope::all ? "all" : "test_split"; }

inline std::vector<std::string> family_names(const CorpusManifest& m) {
	std::vector<std::string> out;
	for (const auto& f : m.family_table)
		out.push_back(f.name);
	return out;
}

/// Inference over the chosen records; scope=all ignores split labels.
inline EvalReport evaluate(const ModelSpec& model, const CorpusManifest& corpus, EvalScope scope, DataSource& data) {
	if (model.class_count != corpus.family_count())
		throw Error("class count mismatch: model has " + std::to_string(model.class_count) + " classes, corpus has "
				+ std::to_string(corpus.family_count()) + " families");
	std::vector<std::size_t> truth, predicted;
	for (const auto& r : corpus.records) {
		if (scope == EvalScope::test_split && r.split != Split::test)
			continue;
		truth.push_back(r.family);
		predicted.push_back(argmax(nn::forward(model.layers, data.input(r))));
	}
	auto report = metrics(confusion(truth, predicted, model.class_count), family_names(corpus));
	report.scope = scope_name(scope);
	return report;
}

// ---------------------------------------------------------------------------
// Output formats
// ---------------------------------------------------------------------------

/// "99.72" style: percent with two decimals.
inline std::string percent2(double fraction) {
	char buf[32];
	std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
	return buf;
}

inline void write_report_text(const EvalReport& r, std::ostream& os) {
	os << "scope: " << r.scope << "  samples: " << r.matrix.total() << '\n';
	os << "Accuracy  Precision(micro)  Precision(macro)  Recall(micro)  Recall(macro)\n";
	os << percent2(r.accuracy) << "  " << percent2(r.precision_micro) << "  " << percent2(r.precision_macro) << "  "
	   << percent2(r.recall_micro) << "  " << percent2(r.recall_macro) << '\n';
	os << "\nclass  precision  recall  support\n";
	for (const auto& c : r.per_class) {
		os << c.label << "  " << percent2(c.precision) << (c.precision_undefined ? "*" : "") << "  "
		   << percent2(c.recall) << (c.recall_undefined ? "*" : "") << "  " << c.support << '\n';
	}
	bool flagged = false;
	for (const auto& c : r.per_class)
		flagged = flagged || c.precision_undefined || c.recall_undefined;
	if (flagged)
		os << "* 0/0 ratio reported as 0\n";
}

/// class,precision,recall,support rows followed by a metric,value summary block.
inline void write_metrics_csv(const EvalReport& r, std::ostream& os) {
	os << "class,precision,recall,support\n";
	for (const auto& c : r.per_class)
		os << c.label << ',' << format_real(c.precision) << ',' << format_real(c.recall) << ',' << c.support << '\n';
	os << "\nmetric,value\n";
	os << "accuracy," << format_real(r.accuracy) << '\n';
	os << "precision_micro," << format_real(r.precision_micro) << '\n';
	os << "precision_macro," << format_real(r.precision_macro) << '\n';
	os << "recall_micro," << format_real(r.recall_micro) << '\n';
	os << "recall_macro," << format_real(r.recall_macro) << '\n';
	os << "samples," << r.matrix.total() << '\n';
	os << "scope," << r.scope << '\n';
}

inline void write_confusion_csv(const EvalReport& r, std::ostream& os) {
	os << "true\\predicted";
	for (const auto& c : r.per_class)
		os << ',' << c.label;
	os << '\n';
	for (std::size_t t = 0; t < r.matrix.k; ++t) {
		os << r.per_class[t].label;
		for (std::size_t p = 0; p < r.matrix.k; ++p)
			os << ',' << r.matrix.at(t, p);
		os << '\n';
	}
}

namespace detail {

template<typename Fn>
void write_with(const std::filesystem::path& path, Fn&& fn) {
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw Error("cannot write " + path.string());
	fn(out);
	if (!out)
		throw Error("cannot write " + path.string());
}

} // namespace detail

inline void save_eval_report(const EvalReport& r, const std::filesystem::path& dir) {
	std::filesystem::create_directories(dir);
	detail::write_with(dir / "report.txt", [&](std::ostream& os) { write_report_text(r, os); });
	detail::write_with(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(r, os); });
	detail::write_with(dir / "confusion.csv", [&](std::ostream& os) { write_confusion_csv(r, os); });
}

} // namespace mvis

#endif // MVIS_EVALMETRICS_HPP_
