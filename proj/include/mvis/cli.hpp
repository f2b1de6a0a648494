#ifndef MVIS_CLI_HPP_
#define MVIS_CLI_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvis/corpus.hpp"
#include "mvis/data.hpp"
#include "mvis/error.hpp"
#include "mvis/evalmetrics.hpp"
#include "mvis/models.hpp"
#include "mvis/png_io.hpp"
#include "mvis/strategy.hpp"
#include "mvis/text.hpp"
#include "mvis/train.hpp"
#include "mvis/visualize.hpp"

namespace mvis::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kFailure = 2 };

struct LiteratureRow {
	const char* method;
	double accuracy;
};

/// Reported Malimg accuracies of earlier methods, for reference only.
inline const std::vector<LiteratureRow>& comparison_rows() {
	static const std::vector<LiteratureRow> rows = {
		{"CNN", 94.50},
		{"GIST + K-nearest neighbors", 97.18},
		{"M-CNN (VGG16)", 98.52},
		{"ResNet50", 98.62},
		{"Xception", 99.03},
		{"VGG19 fine-tuned, frozen 60%, Max320 (this toolkit's strategy)", 99.72},
	};
	return rows;
}

inline std::string print_comparison_table() {
	std::ostringstream os;
	os << "Literature values: reported accuracy on the Malimg dataset (not computed here)\n";
	for (const auto& r : comparison_rows()) {
		char acc[16];
		std::snprintf(acc, sizeof acc, "%.2f%%", r.accuracy);
		os << r.method << '\t' << acc << '\n';
	}
	return os.str();
}

inline std::string format_catalog_row(const ModelCatalogEntry& e) {
	char buf[160];
	std::snprintf(buf, sizeof buf, "%s\t%d\t%.2f\t%.2f\t%.2f\t%.2f", std::string(e.name).c_str(), e.year, e.flops_m,
			e.params_m, e.top1, e.top5);
	return buf;
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
	std::vector<std::string> out;
	for (auto part : split_on(s, ','))
		if (!part.empty())
			out.emplace_back(part);
	return out;
}

inline std::pair<std::string, std::filesystem::path> name_path(const std::string& s) {
	auto eq = s.find('=');
	if (eq == std::string::npos || eq == 0)
		throw Error("expected NAME=PATH, got " + s);
	return {s.substr(0, eq), s.substr(eq + 1)};
}

inline void write_meta(const std::filesystem::path& path, const std::vector<std::string>& args, std::uint64_t seed,
		int code, const std::string& error) {
	if (path.empty())
		return;
	std::error_code ec;
	if (path.has_parent_path())
		std::filesystem::create_directories(path.parent_path(), ec);
	std::ofstream out(path, std::ios::binary);
	if (!out)
		return;
	out << "tool=mvis\nversion=" << kVersion << "\nargs=";
	for (std::size_t i = 0; i < args.size(); ++i)
		out << (i ? " " : "") << args[i];
	out << "\nseed=" << seed << "\nexit_code=" << code << '\n';
	if (!error.empty())
		out << "error=" << error << '\n';
}

} // namespace detail

/**
 * Entry point for `mvis <subcommand> [flags]`. `args` excludes the program
 * name. Returns 0 on success, 1 on usage errors, 2 on data/runtime errors.
 */
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
	namespace fs = std::filesystem;
	CLI::App app{"Malware-image classification toolkit", "mvis"};
	app.require_subcommand(1);
	app.fallthrough();
	std::uint64_t seed = 42;
	app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

	// shared flag storage
	std::string in, out_path, manifest, model = "vgg16", weights, report_dir, scope = "all";
	std::size_t cap = 80, epochs = TrainConfig{}.epochs, batch = TrainConfig{}.batch_size;
	std::size_t side = 224, channels = 3, width = 0, checkpoint_every = 0;
	double train_fraction = 0.9, freeze = 0.8, lr = TrainConfig{}.learning_rate, momentum = TrainConfig{}.momentum;
	std::string caps = "240,320", freezes = "0.2,0.4,0.6,0.8";
	std::vector<std::string> imports, backbones;
	bool comparison = false;

	std::string candidates, catalog_model;

	auto add_train_flags = [&](CLI::App* sub) {
		sub->add_option("--epochs", epochs)->capture_default_str();
		sub->add_option("--lr", lr)->capture_default_str();
		sub->add_option("--momentum", momentum)->capture_default_str();
		sub->add_option("--batch", batch)->capture_default_str();
		sub->add_option("--side", side, "Network input side in pixels")->capture_default_str();
		sub->add_option("--channels", channels)->capture_default_str();
	};

	auto* convert = app.add_subcommand("convert", "Render binaries as grayscale PNGs");
	convert->add_option("--in", in, "File or directory of binaries")->required();
	convert->add_option("--out", out_path, "Output directory")->required();
	convert->add_option("--width", width, "Fixed image width (default: size-based table)");

	auto* ingest_cmd = app.add_subcommand("ingest", "Build a manifest from root/<family>/<image>.png");
	ingest_cmd->add_option("--in", in)->required();
	ingest_cmd->add_option("--out", out_path)->required();

	auto* balance = app.add_subcommand("balance", "Undersample each family to a cap");
	balance->add_option("--manifest", manifest)->required();
	balance->add_option("--cap", cap)->required();
	balance->add_option("--out", out_path)->required();

	auto* split_cmd = app.add_subcommand("split", "Stratified train/test split");
	split_cmd->add_option("--manifest", manifest)->required();
	split_cmd->add_option("--train-fraction", train_fraction)->capture_default_str();
	split_cmd->add_option("--out", out_path)->required();

	auto* train_cmd = app.add_subcommand("train", "Fine-tune a model on a split manifest");
	train_cmd->add_option("--manifest", manifest)->required();
	train_cmd->add_option("--freeze", freeze)->capture_default_str();
	train_cmd->add_option("--weights", weights, "Initial weights (a backbone-only file is fine)");
	train_cmd->add_option("--out", out_path, "Run directory")->required();
	train_cmd->add_option("--checkpoint-every", checkpoint_every)->capture_default_str();
	train_cmd->add_option("--model", model, "vgg16, vgg19 or vgg-mini")->capture_default_str();
	add_train_flags(train_cmd);

	auto* eval_cmd = app.add_subcommand("eval", "Evaluate trained weights");
	eval_cmd->add_option("--manifest", manifest)->required();
	eval_cmd->add_option("--weights", weights)->required();
	eval_cmd->add_option("--scope", scope, "all or test_split")->capture_default_str();
	eval_cmd->add_option("--out", out_path, "Report directory")->required();
	eval_cmd->add_option("--model", model)->capture_default_str();
	eval_cmd->add_option("--side", side)->capture_default_str();
	eval_cmd->add_option("--channels", channels)->capture_default_str();

	auto* select = app.add_subcommand("select", "Two-stage model selection");
	select->add_option("--manifest", manifest, "Full, unsplit manifest")->required();
	select->add_option("--report-dir", report_dir)->required();
	select->add_option("--cap", cap, "Stage-1 cap")->capture_default_str();
	select->add_option("--caps", caps, "Stage-2 caps")->capture_default_str();
	select->add_option("--freeze", freeze, "Stage-1 freeze fraction")->capture_default_str();
	select->add_option("--freezes", freezes, "Stage-2 freeze fractions")->capture_default_str();
	select->add_option("--train-fraction", train_fraction)->capture_default_str();
	select->add_option("--scope", scope)->capture_default_str();
	select->add_option("--import", imports, "NAME=curve.csv for catalog-only candidates");
	select->add_option("--backbone", backbones, "NAME=weights.mvw pretrained backbone");
	select->add_option("--model", candidates, "Comma-separated stage-1 candidates (default: the six screened architectures)");
	add_train_flags(select);

	auto* catalog_cmd = app.add_subcommand("catalog", "Print benchmark catalog rows");
	catalog_cmd->add_option("--model", catalog_model);
	catalog_cmd->add_flag("--comparison", comparison, "Print literature accuracies instead");
	catalog_cmd->add_option("--out", out_path, "Also write the output to this file");

	std::vector<std::string> reversed(args.rbegin(), args.rend());
	try {
		app.parse(reversed);
	} catch (const CLI::CallForHelp& e) {
		out << app.help();
		return kOk;
	} catch (const CLI::CallForAllHelp& e) {
		out << app.help("", CLI::AppFormatMode::All);
		return kOk;
	} catch (const CLI::ParseError& e) {
		err << "error: " << e.what() << "\n\n" << app.help();
		return kUsage;
	}

	fs::path meta_path;
	auto meta_for_dir = [&](const fs::path& dir) { meta_path = dir / "run.meta"; };
	auto meta_for_file = [&](const fs::path& file) { meta_path = fs::path(file.string() + ".run.meta"); };
	auto scope_value = [&]() {
		if (scope == "all")
			return EvalScope::all;
		if (scope == "test_split" || scope == "test")
			return EvalScope::test_split;
		throw Error("unknown scope " + scope);
	};
	auto train_config = [&]() {
		TrainConfig cfg;
		cfg.learning_rate = lr;
		cfg.momentum = momentum;
		cfg.batch_size = batch;
		cfg.epochs = epochs;
		cfg.seed = seed;
		return cfg;
	};

	try {
		if (*convert) {
			meta_for_dir(out_path);
			std::vector<fs::path> files;
			const fs::path root(in);
			if (fs::is_regular_file(root)) {
				files.push_back(root);
			} else if (fs::is_directory(root)) {
				for (const auto& e : fs::recursive_directory_iterator(root))
					if (e.is_regular_file())
						files.push_back(e.path());
			} else {
				throw Error("no such input " + in);
			}
			std::sort(files.begin(), files.end());
			for (const auto& f : files) {
				auto rel = fs::is_directory(root) ? fs::relative(f, root) : f.filename();
				auto dst = fs::path(out_path) / rel;
				dst += ".png";
				fs::create_directories(dst.parent_path());
				auto img = bytes_to_image(read_binary(f), width ? std::optional<std::size_t>(width) : std::nullopt);
				write_image_png(img, dst);
			}
			out << "converted " << files.size() << " file(s)\n";
		} else if (*ingest_cmd) {
			meta_for_file(out_path);
			auto m = ingest(in);
			save_manifest(m, out_path);
			out << m.records.size() << " records, " << m.family_count() << " families\n";
		} else if (*balance) {
			meta_for_file(out_path);
			auto m = undersample(load_manifest(manifest), cap, seed);
			save_manifest(m, out_path);
			out << m.records.size() << " records after cap " << cap << '\n';
		} else if (*split_cmd) {
			meta_for_file(out_path);
			auto m = split(load_manifest(manifest), train_fraction, seed);
			save_manifest(m, out_path);
			for (const auto& w : m.warnings)
				err << "warning: " << w << '\n';
			out << m.indices_of(Split::train).size() << " train, " << m.indices_of(Split::test).size() << " test\n";
		} else if (*train_cmd) {
			meta_for_dir(out_path);
			fs::create_directories(out_path);
			auto corpus = load_manifest(manifest);
			auto spec = build_model(model, corpus.family_count(), freeze, side, channels, seed);
			if (!weights.empty())
				load_weights(spec, weights, true);
			auto cfg = train_config();
			cfg.checkpoint_every = checkpoint_every;
			cfg.checkpoint_dir = out_path;
			cfg.run_id = file_safe(spec.name);
			DataSource data(side, channels);
			auto curve = train_model(spec, corpus, cfg, data);
			emit_curve_csv(curve, fs::path(out_path) / "curve.csv");
			save_weights(spec, fs::path(out_path) / "weights.mvw");
			const auto& last = curve.epochs.back();
			out << "epochs " << curve.epochs.size() << ", final acc " << percent2(last.acc);
			if (last.val_acc)
				out << ", val_acc " << percent2(*last.val_acc);
			out << '\n';
		} else if (*eval_cmd) {
			meta_for_dir(out_path);
			auto corpus = load_manifest(manifest);
			auto spec = build_model(model, corpus.family_count(), 0.0, side, channels, seed);
			load_weights(spec, weights, false);
			DataSource data(side, channels);
			auto report = evaluate(spec, corpus, scope_value(), data);
			save_eval_report(report, out_path);
			write_report_text(report, out);
		} else if (*select) {
			meta_for_dir(report_dir);
			StrategyConfig cfg;
			if (!candidates.empty())
				cfg.stage1_candidates = detail::split_list(candidates);
			cfg.stage1_cap = cap;
			cfg.stage1_freeze = freeze;
			cfg.stage2_caps.clear();
			for (const auto& c : detail::split_list(caps)) {
				auto v = parse_uint(c);
				if (!v || *v == 0)
					throw Error("bad cap " + c);
				cfg.stage2_caps.push_back(*v);
			}
			cfg.stage2_freezes.clear();
			for (const auto& f : detail::split_list(freezes)) {
				auto v = parse_real(f);
				if (!v)
					throw Error("bad freeze fraction " + f);
				cfg.stage2_freezes.push_back(*v);
			}
			cfg.train_fraction = train_fraction;
			cfg.train_cfg = train_config();
			cfg.stage2_scope = scope_value();
			cfg.seed = seed;
			std::map<std::string, TrainCurve> imported;
			for (const auto& s : imports) {
				auto [name, path] = detail::name_path(s);
				imported[name] = load_curve_csv(path);
			}
			BackboneMap backbone_map;
			for (const auto& s : backbones) {
				auto [name, path] = detail::name_path(s);
				backbone_map[name] = path;
			}
			auto full = load_manifest(manifest);
			DataSource data(side, channels);
			auto report = run_strategy(cfg, full, data, imported, default_factory(side, channels, seed), backbone_map);
			render_report(report, cfg, report_dir);
			out << render_summary(report, cfg);
		} else if (*catalog_cmd) {
			if (!out_path.empty())
				meta_for_file(out_path);
			std::ostringstream text;
			if (comparison) {
				text << print_comparison_table();
			} else if (!catalog_model.empty()) {
				text << "model\tyear\tflops_m\tparams_m\ttop1\ttop5\n" << format_catalog_row(catalog_lookup(catalog_model))
					 << '\n';
			} else {
				text << "model\tyear\tflops_m\tparams_m\ttop1\ttop5\n";
				for (const auto& e : catalog())
					text << format_catalog_row(e) << '\n';
			}
			out << text.str();
			if (!out_path.empty())
				mvis::detail::write_with(out_path, [&](std::ostream& os) { os << text.str(); });
		}
	} catch (const std::exception& e) {
		err << "error: " << e.what() << '\n';
		detail::write_meta(meta_path, args, seed, kFailure, e.what());
		return kFailure;
	}
	detail::write_meta(meta_path, args, seed, kOk, "");
	return kOk;
}

} // namespace mvis::cli

#endif // MVIS_CLI_HPP_
