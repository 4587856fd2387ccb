#ifndef FIBRORAD_CLI_HPP
#define FIBRORAD_CLI_HPP

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fibrorad/common.hpp"
#include "fibrorad/csv.hpp"
#include "fibrorad/harness.hpp"
#include "fibrorad/phantom.hpp"
#include "fibrorad/pipeline.hpp"

// Batch commands behind the fibrorad executable. Every command is a pure function of its
// RunConfig and input files; worker count never changes output bytes.
namespace fibrorad::cli
{
	struct PhantomParams
	{
		int n_fibrosis = 40;
		int n_healthy = 26;
		PhantomSpec base;
	};

	struct RunConfig
	{
		std::optional<std::uint64_t> seed;
		std::filesystem::path out = "fibrorad-run";
		std::optional<Workspace> paths; ///< explicit locations; otherwise derived from `out`
		unsigned jobs = 1;
		int experiments = 100;
		int repeats = 100;
		int grid_runs = 30;
		double holdout_fraction = 0.8;
		std::string configs;
		std::vector<ContrastPhase> phases{ContrastPhase::NC, ContrastPhase::CE};
		std::vector<NormalizationKind> normalizations = all_sweep_normalizations();
		PhantomParams phantom;

		Workspace workspace() const { return paths ? *paths : Workspace::at(out); }

		std::uint64_t master_seed() const
		{
			if (!seed)
				invalid("cli", "a seed is required (config 'seed', RUN_SEED or --seed)");
			return *seed;
		}

		void validate() const
		{
			master_seed();
			if (jobs < 1)
				invalid("cli", "jobs must be at least 1");
			if (experiments < 1 || repeats < 1 || grid_runs < 1)
				invalid("cli", "experiments, repeats and grid_runs must be positive");
			if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
				invalid("cli", "holdout_fraction must lie in (0, 1)");
			if (phases.empty() || normalizations.empty())
				invalid("cli", "phases and normalizations must be nonempty");
			if (phantom.n_fibrosis < 2 || phantom.n_healthy < 2)
				invalid("cli", "phantom needs at least two patients per class");
			phantom.base.validate();
		}
	};

	inline std::uint64_t parse_seed(const std::string& text)
	{
		std::size_t used = 0;
		unsigned long long v = 0;
		try
		{
			v = std::stoull(text, &used, 10);
		}
		catch (const std::exception&)
		{
			invalid("cli", "seed '" + text + "' is not a non-negative integer");
		}
		if (used != text.size() || text.empty() || text[0] == '-' || text[0] == '+')
			invalid("cli", "seed '" + text + "' is not a non-negative integer");
		return v;
	}

	namespace detail
	{
		template<typename T, std::size_t N>
		std::array<T, N> triple(const nlohmann::json& j, const char* key)
		{
			if (!j.is_array() || j.size() != N)
				invalid("cli", std::string("'") + key + "' must be an array of " + std::to_string(N) + " numbers");
			std::array<T, N> out{};
			for (std::size_t i = 0; i < N; ++i)
				out[i] = j[i].get<T>();
			return out;
		}

		inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where)
		{
			if (!j.is_object())
				invalid("cli", where + " must be a JSON object");
			for (const auto& [k, v] : j.items())
				if (!known.count(k))
					invalid("cli", "unknown key '" + k + "' in " + where);
		}

		inline void apply_phantom(PhantomParams& p, const nlohmann::json& j)
		{
			reject_unknown(j,
			               {"n_fibrosis", "n_healthy", "dims", "spacing", "semi_axes", "signal_strength", "noise_sd", "base_hu", "speckle_density",
			                "speckle_amplitude", "background_hu", "max_tilt_deg"},
			               "phantom");
			if (j.contains("n_fibrosis"))
				p.n_fibrosis = j["n_fibrosis"].get<int>();
			if (j.contains("n_healthy"))
				p.n_healthy = j["n_healthy"].get<int>();
			if (j.contains("dims"))
				p.base.dims = triple<long, 3>(j["dims"], "dims");
			if (j.contains("spacing"))
				p.base.spacing = triple<double, 3>(j["spacing"], "spacing");
			if (j.contains("semi_axes"))
				p.base.semi_axes = triple<double, 3>(j["semi_axes"], "semi_axes");
			if (j.contains("signal_strength"))
				p.base.signal_strength = j["signal_strength"].get<double>();
			if (j.contains("noise_sd"))
				p.base.noise_sd = j["noise_sd"].get<double>();
			if (j.contains("base_hu"))
				p.base.base_hu = j["base_hu"].get<double>();
			if (j.contains("speckle_density"))
				p.base.speckle_density = j["speckle_density"].get<double>();
			if (j.contains("speckle_amplitude"))
				p.base.speckle_amplitude = j["speckle_amplitude"].get<double>();
			if (j.contains("background_hu"))
				p.base.background_hu = j["background_hu"].get<double>();
			if (j.contains("max_tilt_deg"))
				p.base.max_tilt_deg = j["max_tilt_deg"].get<double>();
		}
	}

	/// Overlays a JSON run config onto `rc`. Unknown keys and wrong types are validation errors.
	inline void apply_json(RunConfig& rc, const nlohmann::json& j)
	{
		try
		{
			detail::reject_unknown(j,
			                       {"seed", "out", "paths", "jobs", "experiments", "repeats", "grid_runs", "holdout_fraction", "configs", "phases",
			                        "normalizations", "phantom"},
			                       "run config");
			if (j.contains("seed"))
				rc.seed = j["seed"].get<std::uint64_t>();
			if (j.contains("out"))
				rc.out = j["out"].get<std::string>();
			if (j.contains("jobs"))
				rc.jobs = j["jobs"].get<unsigned>();
			if (j.contains("experiments"))
				rc.experiments = j["experiments"].get<int>();
			if (j.contains("repeats"))
				rc.repeats = j["repeats"].get<int>();
			if (j.contains("grid_runs"))
				rc.grid_runs = j["grid_runs"].get<int>();
			if (j.contains("holdout_fraction"))
				rc.holdout_fraction = j["holdout_fraction"].get<double>();
			if (j.contains("configs"))
				rc.configs = j["configs"].get<std::string>();
			if (j.contains("phases"))
			{
				rc.phases.clear();
				for (const auto& p : j["phases"])
					rc.phases.push_back(parse_phase(p.get<std::string>()));
			}
			if (j.contains("normalizations"))
			{
				rc.normalizations.clear();
				for (const auto& n : j["normalizations"])
					rc.normalizations.push_back(parse_normalization(n.get<std::string>()));
			}
			if (j.contains("phantom"))
				detail::apply_phantom(rc.phantom, j["phantom"]);
			if (j.contains("paths"))
			{
				const auto& p = j["paths"];
				detail::reject_unknown(p, {"volumes", "manifest", "labels", "features", "results"}, "paths");
				Workspace ws = Workspace::at(rc.out);
				if (p.contains("volumes"))
					ws.volumes_dir = p["volumes"].get<std::string>();
				if (p.contains("manifest"))
					ws.manifest_path = p["manifest"].get<std::string>();
				if (p.contains("labels"))
					ws.labels_path = p["labels"].get<std::string>();
				if (p.contains("features"))
					ws.features_dir = p["features"].get<std::string>();
				if (p.contains("results"))
					ws.results_dir = p["results"].get<std::string>();
				rc.paths = ws;
			}
		}
		catch (const nlohmann::json::exception& e)
		{
			invalid("cli", std::string("bad run config: ") + e.what());
		}
	}

	inline RunConfig load_run_config(const std::filesystem::path& path)
	{
		RunConfig rc;
		nlohmann::json j;
		try
		{
			j = nlohmann::json::parse(read_text(path));
		}
		catch (const nlohmann::json::parse_error& e)
		{
			invalid("cli", "cannot parse '" + path.string() + "': " + e.what());
		}
		apply_json(rc, j);
		return rc;
	}

	/// RUN_SEED replaces the config seed; an explicit --seed is applied afterwards by the caller.
	inline void apply_env(RunConfig& rc)
	{
		if (const char* s = std::getenv("RUN_SEED"); s && *s)
			rc.seed = parse_seed(s);
	}

	// ---- helpers ------------------------------------------------------------------------

	inline ExperimentOptions experiment_options(const RunConfig& rc)
	{
		ExperimentOptions o;
		o.grid_runs = rc.grid_runs;
		return o;
	}

	inline void write_metric_table(const std::filesystem::path& path, const std::vector<csv::Row>& rows, const csv::Row& header)
	{
		csv::Table t;
		t.header = header;
		t.rows = rows;
		csv::write(path, t);
	}

	inline void append_metric(std::vector<csv::Row>& rows, const std::string& group, const std::string& roi, const std::string& metric, const MetricSummary& m)
	{
		rows.push_back({group, roi, metric, format_double(m.mean), format_double(m.ci_low), format_double(m.ci_high), std::to_string(m.n)});
	}

	inline const csv::Row& metric_columns()
	{
		static const csv::Row h{"group", "roi_kind", "metric", "mean", "ci_low", "ci_high", "n"};
		return h;
	}

	// ---- commands -----------------------------------------------------------------------

	inline void cmd_phantom(const RunConfig& rc)
	{
		rc.validate();
		const Workspace ws = rc.workspace();
		const PhantomCohort cohort = generate_cohort(rc.phantom.n_fibrosis, rc.phantom.n_healthy, rc.master_seed(), rc.phantom.base, rc.jobs);
		write_phantom_workspace(cohort, ws, rc.phases, rc.jobs);
		const auto& b = rc.phantom.base;
		nlohmann::json j{{"seed", rc.master_seed()},
		                 {"n_fibrosis", rc.phantom.n_fibrosis},
		                 {"n_healthy", rc.phantom.n_healthy},
		                 {"dims", b.dims},
		                 {"spacing", b.spacing},
		                 {"semi_axes", b.semi_axes},
		                 {"signal_strength", b.signal_strength},
		                 {"noise_sd", b.noise_sd},
		                 {"base_hu", b.base_hu},
		                 {"speckle_density", b.speckle_density},
		                 {"speckle_amplitude", b.speckle_amplitude},
		                 {"background_hu", b.background_hu},
		                 {"max_tilt_deg", b.max_tilt_deg}};
		std::vector<std::string> phases;
		for (auto p : rc.phases)
			phases.push_back(to_string(p));
		j["phases"] = phases;
		write_text(ws.volumes_dir / "phantom.json", j.dump(2) + "\n");
	}

	inline void cmd_extract(const RunConfig& rc)
	{
		rc.validate();
		ExtractOptions opt;
		opt.phases = rc.phases;
		opt.norms = rc.normalizations;
		opt.jobs = rc.jobs;
		extract_workspace(rc.workspace(), opt);
	}

	inline SweepOutput cmd_sweep(const RunConfig& rc)
	{
		rc.validate();
		const Workspace ws = rc.workspace();
		const FeatureStore store = load_feature_store(ws);
		const auto configs = filter_configs(enumerate_configs(), rc.configs);
		if (configs.empty())
			invalid("cli", "configuration filter '" + rc.configs + "' matches nothing");
		std::set<std::pair<std::string, std::string>> used;
		for (const auto& c : configs)
		{
			if (!store.has(c.contrast, c.normalization))
				invalid("cli", "no feature CSVs for " + to_string(c.contrast) + "/" + to_string(c.normalization));
			used.insert({to_string(c.contrast), to_string(c.normalization)});
		}
		SweepOptions opt;
		opt.n_experiments = rc.experiments;
		opt.master_seed = rc.master_seed();
		opt.jobs = rc.jobs;
		opt.experiment = experiment_options(rc);
		const SweepOutput out = run_sweep(configs, internal_part(store, rc.master_seed()), opt);

		write_results_jsonl(ws.result("sweep.jsonl"), out.results);
		write_summary_csv(ws.result("summary.csv"), out.summary);
		write_top_configs_csv(ws.result("top_configs.csv"), out.summary);

		std::string labels;
		for (const auto& c : configs)
			labels += c.label() + "\n";
		nlohmann::json files = nlohmann::json::object();
		for (const auto& [ph, n] : used)
			for (RoiKind k : {RoiKind::BiopsyBased, RoiKind::NonBiopsy})
			{
				const auto f = ws.feature_file(parse_phase(ph), parse_normalization(n), k);
				files[f.filename().string()] = file_hash(f);
			}
		const nlohmann::json manifest{{"master_seed", rc.master_seed()},
		                              {"configs", configs.size()},
		                              {"config_hash", hex64(fnv1a(labels))},
		                              {"experiments", rc.experiments},
		                              {"grid_runs", rc.grid_runs},
		                              {"holdout_fraction", rc.holdout_fraction},
		                              {"cohort_files", files}};
		write_text(ws.result("manifest.json"), manifest.dump(2) + "\n");
		return out;
	}

	inline void cmd_rank(const RunConfig& rc)
	{
		const Workspace ws = rc.workspace();
		const auto results = read_results_jsonl(ws.result("sweep.jsonl"));
		if (results.empty())
			invalid("cli", "sweep.jsonl holds no results");
		write_ranking_csv(ws.result("ranking_all.csv"), rank_features(results));

		std::vector<Configuration> configs;
		for (const auto& r : results)
			if (std::find(configs.begin(), configs.end(), r.config) == configs.end())
				configs.push_back(r.config);
		std::sort(configs.begin(), configs.end(), [](const auto& a, const auto& b) { return config_index(a) < config_index(b); });
		const SweepSummary s = summarize_sweep(configs, results);
		for (int kind = 0; kind < 2; ++kind)
		{
			std::vector<ExperimentResult> top;
			for (std::size_t idx : kind == 0 ? s.top_biopsy : s.top_nonbiopsy)
				for (const auto& r : results)
					if (r.config == s.configs[idx].config)
						top.push_back(r);
			write_ranking_csv(ws.result(kind == 0 ? "ranking_top_biopsy.csv" : "ranking_top_nonbiopsy.csv"), rank_features(top));
		}
	}

	/// Curated logistic-regression models on the NC / gamma-1.5 features.
	inline void cmd_simple(const RunConfig& rc)
	{
		rc.validate();
		const Workspace ws = rc.workspace();
		const ContrastPhase ph = ContrastPhase::NC;
		const NormalizationKind n = NormalizationKind::gamma_correction(1.5);
		const CohortPair pair{read_cohort_csv(ws.feature_file(ph, n, RoiKind::BiopsyBased)), read_cohort_csv(ws.feature_file(ph, n, RoiKind::NonBiopsy))};
		const auto [internal, external] = split_internal_external(pair, rc.master_seed(), rc.holdout_fraction);
		const std::vector<std::pair<std::string, const std::vector<std::string>*>> sets{
		    {"biopsy", &biopsy_feature_set()}, {"nonbiopsy", &nonbiopsy_feature_set()}, {"intersecting", &intersecting_feature_set()}};
		std::vector<csv::Row> rows;
		for (const auto& [name, features] : sets)
		{
			SimpleOptions opt;
			opt.n_repeats = rc.repeats;
			opt.master_seed = derive_seed(rc.master_seed(), fnv1a(name));
			const SimpleSummary s = train_simple(*features, internal.biopsy, external.biopsy, external.nonbiopsy, opt);
			append_metric(rows, name, "biopsy", "auc", s.auc_biopsy);
			append_metric(rows, name, "biopsy", "sensitivity", s.sensitivity_biopsy);
			append_metric(rows, name, "biopsy", "specificity", s.specificity_biopsy);
			append_metric(rows, name, "nonbiopsy", "auc", s.auc_nonbiopsy);
			append_metric(rows, name, "nonbiopsy", "sensitivity", s.sensitivity_nonbiopsy);
			append_metric(rows, name, "nonbiopsy", "specificity", s.specificity_nonbiopsy);
		}
		write_metric_table(ws.result("simple.csv"), rows, metric_columns());
	}

	/// Whole-liver cube features on NC volumes, one row per patient, same held-out split as the radiomics models.
	inline void cmd_baseline(const RunConfig& rc)
	{
		rc.validate();
		const Workspace ws = rc.workspace();
		const auto inputs = workspace_inputs(ws);
		std::vector<BaselineFeatures> feats(inputs.size());
		parallel_for(inputs.size(), rc.jobs, [&](std::size_t i) {
			const Volume v = clip_hu(read_volume(ws.volume(inputs[i].id, ContrastPhase::NC)), ContrastPhase::NC);
			const LiverMask m = read_mask(ws.mask(inputs[i].id));
			Rng rng(derive_seed(rc.master_seed(), fnv1a("baseline"), i));
			feats[i] = baseline_features(v, m, rng);
		});
		Cohort c;
		c.features = baseline_feature_names();
		c.X.resize(static_cast<Eigen::Index>(inputs.size()), 3);
		for (std::size_t i = 0; i < inputs.size(); ++i)
		{
			const auto r = static_cast<Eigen::Index>(i);
			c.X(r, 0) = feats[i].mean_intensity;
			c.X(r, 1) = feats[i].local_variance_sd;
			c.X(r, 2) = feats[i].haar_hh;
			c.labels.push_back(inputs[i].label);
			c.fstage.push_back(inputs[i].fstage);
			c.patient_ids.push_back(inputs[i].id);
			c.roi_ids.push_back(inputs[i].id + "-liver");
			c.roi_kinds.push_back(RoiKind::BiopsyBased);
			c.synthetic.push_back(0);
		}
		c.validate();
		const CohortPair pair{c, c.select_rows({})};
		const auto [internal, external] = split_internal_external(pair, rc.master_seed(), rc.holdout_fraction);
		const BaselineSummary s = baseline_hirano(internal.biopsy, external.biopsy, rc.repeats, rc.master_seed());
		std::vector<csv::Row> rows;
		append_metric(rows, "cube_texture", "liver", "auc", s.auc);
		append_metric(rows, "cube_texture", "liver", "sensitivity", s.sensitivity);
		append_metric(rows, "cube_texture", "liver", "specificity", s.specificity);
		write_metric_table(ws.result("baseline.csv"), rows, metric_columns());
	}

	/// Geometry-only models from the ROI manifest and volume headers; no voxel data is read.
	inline AuditSummary cmd_audit(const RunConfig& rc)
	{
		rc.validate();
		const Workspace ws = rc.workspace();
		const auto inputs = workspace_inputs(ws);
		std::vector<AuditRow> rows;
		for (const auto& p : inputs)
		{
			const auto header = fibrorad::detail::read_header(ws.volume(p.id, rc.phases.front()));
			AuditRow r;
			r.patient_id = p.id;
			r.label = p.label;
			r.spacing = fibrorad::detail::parse_triple<double, 3>(header, "ElementSpacing");
			for (const auto& roi : p.rois)
				if (roi.kind == RoiKind::BiopsyBased)
					r.roi_radius_mm = roi.radius;
			rows.push_back(r);
		}
		const AuditSummary s = confounder_audit(rows, rc.repeats, rc.master_seed(), rc.holdout_fraction);
		std::vector<csv::Row> out;
		append_metric(out, "roi_volume", "biopsy", "auc", s.volume_auc);
		append_metric(out, "spacing", "biopsy", "auc", s.spacing_auc);
		write_metric_table(ws.result("audit.csv"), out, metric_columns());
		return s;
	}

	namespace detail
	{
		inline std::string cell_ci(const csv::Row& r, std::size_t m)
		{
			if (r[m].empty())
				return "n/a";
			char buf[96];
			std::snprintf(buf, sizeof buf, "%.4f [%.4f, %.4f]", csv::to_double(r[m]), csv::to_double(r[m + 1]), csv::to_double(r[m + 2]));
			return buf;
		}

		inline void metric_section(std::string& md, const std::string& title, const csv::Table& t)
		{
			md += "## " + title + "\n\n| group | ROI | metric | mean [95% CI] |\n|---|---|---|---|\n";
			const auto g = t.column("group"), k = t.column("roi_kind"), m = t.column("metric"), mean = t.column("mean");
			for (const auto& r : t.rows)
				md += "| " + r[g] + " | " + r[k] + " | " + r[m] + " | " + cell_ci(r, mean) + " |\n";
			md += "\n";
		}
	}

	/// Markdown rendering of whichever result CSVs exist.
	inline std::string cmd_report(const RunConfig& rc)
	{
		const Workspace ws = rc.workspace();
		std::string md = "# fibrorad results\n\n";
		bool any = false;
		if (const auto p = ws.result("summary.csv"); std::filesystem::exists(p))
		{
			any = true;
			const auto t = csv::read(p);
			const auto scope = t.column("scope"), name = t.column("name"), bm = t.column("biopsy_mean"), nm = t.column("nonbiopsy_mean");
			md += "## Mean test AUC by setting\n\n| setting | value | biopsy-based ROI | non-biopsy ROI |\n|---|---|---|---|\n";
			for (const auto& r : t.rows)
				if (r[scope] != "config")
					md += "| " + r[scope] + " | " + r[name] + " | " + detail::cell_ci(r, bm) + " | " + detail::cell_ci(r, nm) + " |\n";
			md += "\n";
		}
		if (const auto p = ws.result("top_configs.csv"); std::filesystem::exists(p))
		{
			any = true;
			const auto t = csv::read(p);
			const auto kind = t.column("roi_kind"), rank = t.column("rank"), mean = t.column("mean");
			for (const std::string k : {"biopsy", "nonbiopsy"})
			{
				md += "## Top configurations, " + k + " ROI\n\n| rank | normalization | selector | model | contrast | mean test AUC [95% CI] |\n|---|---|---|---|---|---|\n";
				for (const auto& r : t.rows)
					if (r[kind] == k)
						md += "| " + r[rank] + " | " + r[t.column("normalization")] + " | " + r[t.column("selector")] + " | " + r[t.column("model")] + " | " +
						      r[t.column("contrast")] + " | " + detail::cell_ci(r, mean) + " |\n";
				md += "\n";
			}
		}
		if (const auto p = ws.result("simple.csv"); std::filesystem::exists(p))
		{
			any = true;
			detail::metric_section(md, "Curated simple models (external cohort)", csv::read(p));
		}
		if (const auto p = ws.result("baseline.csv"); std::filesystem::exists(p))
		{
			any = true;
			detail::metric_section(md, "Cube-texture baseline (external cohort)", csv::read(p));
		}
		if (const auto p = ws.result("audit.csv"); std::filesystem::exists(p))
		{
			any = true;
			detail::metric_section(md, "Geometry confounder audit", csv::read(p));
		}
		if (!any)
			invalid("cli", "no result CSVs under '" + ws.results_dir.string() + "'");
		write_text(ws.result("report.md"), md);
		return md;
	}
}

#endif
