#ifndef FIBRORAD_HARNESS_HPP
#define FIBRORAD_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fibrorad/common.hpp"
#include "fibrorad/learners.hpp"
#include "fibrorad/metrics.hpp"
#include "fibrorad/normalize.hpp"
#include "fibrorad/roi.hpp"
#include "fibrorad/selectors.hpp"
#include "fibrorad/tabular.hpp"
#include "fibrorad/volume.hpp"

namespace fibrorad
{
	// ---- configurations -------------------------------------------------------------

	struct Configuration
	{
		ContrastPhase contrast = ContrastPhase::NC;
		NormalizationKind normalization;
		ModelKind model = ModelKind::LogisticRegression;
		SelectorKind selector = SelectorKind::None;

		bool operator==(const Configuration&) const = default;

		std::string label() const
		{
			return to_string(contrast) + "/" + to_string(normalization) + "/" + to_string(model) + "/" + to_string(selector);
		}
	};

	/// 2 x 6 x 4 x 4 configurations, contrast outermost and selector innermost.
	inline std::vector<Configuration> enumerate_configs()
	{
		std::vector<Configuration> out;
		for (ContrastPhase c : {ContrastPhase::NC, ContrastPhase::CE})
			for (const auto& n : sweep_normalizations())
				for (ModelKind m : kAllModels)
					for (SelectorKind s : kAllSelectors)
						out.push_back({c, n, m, s});
		return out;
	}

	/// Position in the canonical enumeration; seeds derive from this, not from list order.
	inline std::size_t config_index(const Configuration& c)
	{
		static const auto all = enumerate_configs();
		const auto it = std::find(all.begin(), all.end(), c);
		if (it == all.end())
			invalid("harness", "configuration outside the canonical enumeration");
		return static_cast<std::size_t>(it - all.begin());
	}

	/// Filter such as "contrast=NC,model=logreg|rf,selector=none|boruta". Empty keeps everything.
	inline std::vector<Configuration> filter_configs(const std::vector<Configuration>& configs, std::string_view expr)
	{
		std::map<std::string, std::set<std::string>> want;
		std::size_t start = 0;
		const std::string e(expr);
		while (start < e.size())
		{
			std::size_t end = e.find(',', start);
			if (end == std::string::npos)
				end = e.size();
			const std::string term = e.substr(start, end - start);
			start = end + 1;
			if (term.empty())
				continue;
			const auto eq = term.find('=');
			if (eq == std::string::npos)
				invalid("harness", "filter term '" + term + "' must look like axis=value");
			const std::string axis = term.substr(0, eq);
			if (axis != "contrast" && axis != "normalization" && axis != "model" && axis != "selector")
				invalid("harness", "unknown axis '" + axis + "'");
			std::string values = term.substr(eq + 1);
			std::size_t vs = 0;
			while (vs <= values.size())
			{
				std::size_t ve = values.find('|', vs);
				if (ve == std::string::npos)
					ve = values.size();
				std::string v = values.substr(vs, ve - vs);
				if (axis == "contrast")
					v = to_string(parse_phase(v));
				else if (axis == "normalization")
					v = to_string(parse_normalization(v));
				else if (axis == "model")
					v = to_string(parse_model(v));
				else
					v = to_string(parse_selector(v));
				want[axis].insert(v);
				vs = ve + 1;
			}
		}
		std::vector<Configuration> out;
		for (const auto& c : configs)
		{
			auto ok = [&](const std::string& axis, const std::string& v) { return !want.count(axis) || want[axis].count(v); };
			if (ok("contrast", to_string(c.contrast)) && ok("normalization", to_string(c.normalization)) && ok("model", to_string(c.model)) &&
			    ok("selector", to_string(c.selector)))
				out.push_back(c);
		}
		return out;
	}

	// ---- features per (phase, normalization) ----------------------------------------

	struct CohortPair
	{
		Cohort biopsy;
		Cohort nonbiopsy;
	};

	/// Biopsy-based and non-biopsy cohorts keyed by contrast phase and normalization name.
	struct FeatureStore
	{
		std::map<std::pair<std::string, std::string>, CohortPair> entries;

		void put(ContrastPhase p, const NormalizationKind& n, CohortPair c) { entries[{to_string(p), to_string(n)}] = std::move(c); }

		const CohortPair& get(ContrastPhase p, const NormalizationKind& n) const
		{
			const auto it = entries.find({to_string(p), to_string(n)});
			if (it == entries.end())
				invalid("harness", "no features for " + to_string(p) + "/" + to_string(n));
			return it->second;
		}

		bool has(ContrastPhase p, const NormalizationKind& n) const { return entries.count({to_string(p), to_string(n)}) > 0; }
	};

	// ---- scoring helpers ---------------------------------------------------------------

	/// Arithmetic mean of per-ROI scores.
	inline double average_roi_prediction(const TrainedModel& m, const Eigen::MatrixXd& rows)
	{
		if (rows.rows() == 0)
			invalid("harness", "no ROI rows to average");
		return predict_score(m, rows).mean();
	}

	struct PatientScores
	{
		std::vector<double> scores;
		std::vector<int> labels;
	};

	/// Per-patient mean score, patients in first-appearance order.
	inline PatientScores per_patient(const Cohort& c, const Eigen::VectorXd& scores)
	{
		std::vector<std::string> order;
		std::map<std::string, std::pair<double, int>> acc;
		std::map<std::string, int> label;
		for (std::size_t r = 0; r < c.rows(); ++r)
		{
			auto [it, fresh] = acc.emplace(c.patient_ids[r], std::pair{0.0, 0});
			if (fresh)
			{
				order.push_back(c.patient_ids[r]);
				label[c.patient_ids[r]] = c.labels[r];
			}
			it->second.first += scores[static_cast<Eigen::Index>(r)];
			++it->second.second;
		}
		PatientScores out;
		for (const auto& id : order)
		{
			out.scores.push_back(acc[id].first / acc[id].second);
			out.labels.push_back(label[id]);
		}
		return out;
	}

	/// Index of the largest value; the first one wins ties.
	inline std::size_t argmax_first(const std::vector<double>& v)
	{
		if (v.empty())
			invalid("harness", "empty candidate list");
		std::size_t best = 0;
		for (std::size_t i = 1; i < v.size(); ++i)
			if (v[i] > v[best])
				best = i;
		return best;
	}

	inline Eigen::VectorXd to_eigen(const std::vector<int>& v)
	{
		Eigen::VectorXd y(static_cast<Eigen::Index>(v.size()));
		for (std::size_t i = 0; i < v.size(); ++i)
			y[static_cast<Eigen::Index>(i)] = v[i];
		return y;
	}

	namespace detail
	{
		inline double auc_of(const PatientScores& p) { return auc(p.scores, p.labels); }

		inline void require_biopsy_training_rows(const Cohort& c)
		{
			for (std::size_t r = 0; r < c.rows(); ++r)
				if (c.roi_kinds[r] != RoiKind::BiopsyBased)
					fail("harness", "non-biopsy row '" + c.roi_ids[r] + "' reached a training set");
		}
	}

	// ---- one experiment -------------------------------------------------------------------

	struct GridOutcome
	{
		std::vector<HyperParams> combos;
		std::vector<double> mean_validation_auc;
		std::vector<int> runs;
		std::size_t best = 0;
	};

	struct ExperimentOptions
	{
		int grid_runs = 30;
		double internal_fraction = 0.8;
		double grid_fraction = 0.75;
		std::size_t top_k = 5;
	};

	struct ExperimentResult
	{
		Configuration config;
		std::size_t config_index = 0;
		int experiment = 0;
		std::uint64_t seed = 0;
		bool ok = false;
		std::string error;
		std::optional<HyperParams> chosen;
		double auc_biopsy = std::nan("");
		double auc_nonbiopsy = std::nan("");
		SensSpec biopsy_rates{std::nan(""), std::nan("")};
		SensSpec nonbiopsy_rates{std::nan(""), std::nan("")};
		std::vector<std::string> top_features;
		std::vector<std::string> selected_features;
		int grid_combos = 0;
		int grid_runs_per_combo = 0;
		double best_validation_auc = std::nan("");
	};

	/// Fits `runs` seed-varied models per grid combination on (Xtr, ytr) and scores each on the
	/// validation rows. The winner is the combination with the highest mean validation AUC.
	inline GridOutcome grid_search(ModelKind model, const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr, const std::vector<std::string>& schema,
	                               const Cohort& validation, const Eigen::MatrixXd& Xval, int runs, std::uint64_t seed)
	{
		GridOutcome g;
		g.combos = hyper_grid(model);
		FitOptions fo;
		fo.importance = false;
		for (std::size_t c = 0; c < g.combos.size(); ++c)
		{
			double sum = 0.0;
			int done = 0;
			for (int r = 0; r < runs; ++r)
			{
				const TrainedModel m = fit_model(g.combos[c], Xtr, ytr, schema, derive_seed(seed, c, r), fo);
				sum += detail::auc_of(per_patient(validation, predict_score(m, Xval)));
				++done;
			}
			g.mean_validation_auc.push_back(sum / done);
			g.runs.push_back(done);
		}
		g.best = argmax_first(g.mean_validation_auc);
		return g;
	}

	/// Nested protocol for one configuration and seed. `internal` holds biopsy-based rows,
	/// `nonbiopsy` the same patients' non-biopsy rows, used only for evaluation.
	/// Errors become a failed result instead of propagating.
	inline ExperimentResult run_experiment(const Configuration& config, const Cohort& internal, const Cohort& nonbiopsy, std::uint64_t seed,
	                                       const ExperimentOptions& opt = {})
	{
		ExperimentResult res;
		res.config = config;
		res.seed = seed;
		try
		{
			detail::require_biopsy_training_rows(internal);
			auto [dev_raw, test_raw] = split(internal, {opt.internal_fraction, derive_seed(seed, 1)});

			// Filters are chosen on dev; each cohort is then min-max scaled on its own.
			const Cohort dev = hygiene(dev_raw);
			if (dev.cols() == 0)
				fail("harness", "no features survive the correlation/variance filters");
			const Cohort test = minmax_scale(align_features(dev, test_raw));
			std::set<std::string> test_ids;
			for (const auto& id : test.patient_ids)
				test_ids.insert(id);
			const Cohort test_nb = minmax_scale(align_features(dev, rows_for_patients(nonbiopsy, test_ids)));

			// Grid search on one fixed 75/25 split of dev.
			auto [gtrain_raw, gval] = split(dev, {opt.grid_fraction, derive_seed(seed, 2)});
			Rng smote_rng(derive_seed(seed, 3));
			const Cohort gtrain = smote(gtrain_raw, smote_rng);
			detail::require_biopsy_training_rows(gtrain);
			const Selection gsel = fit_selector(config.selector, gtrain, derive_seed(seed, 4));
			const Cohort gtr = apply_selection(gsel, gtrain);
			const Cohort gv = apply_selection(gsel, gval);
			const GridOutcome grid = grid_search(config.model, gtr.X, gtr.label_vector(), gtr.features, gv, gv.X, opt.grid_runs, derive_seed(seed, 5));
			res.grid_combos = static_cast<int>(grid.combos.size());
			res.grid_runs_per_combo = *std::min_element(grid.runs.begin(), grid.runs.end());
			res.best_validation_auc = grid.mean_validation_auc[grid.best];
			res.chosen = grid.combos[grid.best];

			// Refit on all of dev.
			Rng dev_rng(derive_seed(seed, 6));
			const Cohort dev_bal = smote(dev, dev_rng);
			detail::require_biopsy_training_rows(dev_bal);
			const Selection sel = fit_selector(config.selector, dev_bal, derive_seed(seed, 7));
			const Cohort train = apply_selection(sel, dev_bal);
			const TrainedModel model = fit_model(*res.chosen, train.X, train.label_vector(), train.features, derive_seed(seed, 8));

			const Cohort tb = apply_selection(sel, test);
			const Cohort tnb = apply_selection(sel, test_nb);
			const PatientScores pb = per_patient(tb, predict_score(model, tb.X, tb.features));
			const PatientScores pnb = per_patient(tnb, predict_score(model, tnb.X, tnb.features));
			res.auc_biopsy = auc(pb.scores, pb.labels);
			res.auc_nonbiopsy = auc(pnb.scores, pnb.labels);
			res.biopsy_rates = sens_spec(pb.scores, pb.labels, model.threshold());
			res.nonbiopsy_rates = sens_spec(pnb.scores, pnb.labels, model.threshold());
			res.selected_features = train.features;
			for (std::size_t i : detail::top_k(model.importance, opt.top_k))
				res.top_features.push_back(train.features[i]);
			res.ok = true;
		}
		catch (const std::exception& e)
		{
			res.ok = false;
			res.error = e.what();
		}
		return res;
	}

	// ---- sweep ------------------------------------------------------------------------

	struct ConfigSummary
	{
		Configuration config;
		std::size_t config_index = 0;
		std::optional<MetricSummary> biopsy;
		std::optional<MetricSummary> nonbiopsy;
		std::size_t succeeded = 0;
		std::size_t failed = 0;
	};

	struct SettingSummary
	{
		std::string axis;
		std::string value;
		std::optional<MetricSummary> biopsy;    ///< over per-config means
		std::optional<MetricSummary> nonbiopsy;
		std::size_t configs = 0;
	};

	struct SweepSummary
	{
		std::vector<ConfigSummary> configs;
		std::vector<SettingSummary> settings;
		std::vector<std::size_t> top_biopsy;    ///< indices into configs, best first
		std::vector<std::size_t> top_nonbiopsy;
	};

	struct SweepOutput
	{
		std::vector<ExperimentResult> results; ///< sorted by (config_index, experiment)
		SweepSummary summary;
	};

	inline std::optional<MetricSummary> summarize(const std::vector<double>& values)
	{
		std::vector<double> finite;
		for (double v : values)
			if (std::isfinite(v))
				finite.push_back(v);
		if (finite.empty())
			return std::nullopt;
		return ci_normal(finite);
	}

	inline SweepSummary summarize_sweep(const std::vector<Configuration>& configs, const std::vector<ExperimentResult>& results, std::size_t top_n = 5)
	{
		SweepSummary s;
		for (const auto& c : configs)
		{
			ConfigSummary cs{c, config_index(c), {}, {}, 0, 0};
			std::vector<double> b, nb;
			for (const auto& r : results)
				if (r.config == c)
				{
					if (r.ok)
					{
						++cs.succeeded;
						b.push_back(r.auc_biopsy);
						nb.push_back(r.auc_nonbiopsy);
					}
					else
						++cs.failed;
				}
			cs.biopsy = summarize(b);
			cs.nonbiopsy = summarize(nb);
			s.configs.push_back(std::move(cs));
		}

		auto add_axis = [&](const std::string& axis, auto value_of) {
			std::vector<std::string> values;
			for (const auto& cs : s.configs)
				if (std::find(values.begin(), values.end(), value_of(cs.config)) == values.end())
					values.push_back(value_of(cs.config));
			for (const auto& v : values)
			{
				SettingSummary st{axis, v, {}, {}, 0};
				std::vector<double> b, nb;
				for (const auto& cs : s.configs)
					if (value_of(cs.config) == v)
					{
						++st.configs;
						if (cs.biopsy)
							b.push_back(cs.biopsy->mean);
						if (cs.nonbiopsy)
							nb.push_back(cs.nonbiopsy->mean);
					}
				st.biopsy = summarize(b);
				st.nonbiopsy = summarize(nb);
				s.settings.push_back(std::move(st));
			}
		};
		add_axis("contrast", [](const Configuration& c) { return to_string(c.contrast); });
		add_axis("normalization", [](const Configuration& c) { return to_string(c.normalization); });
		add_axis("model", [](const Configuration& c) { return to_string(c.model); });
		add_axis("selector", [](const Configuration& c) { return to_string(c.selector); });

		auto rank = [&](bool biopsy) {
			std::vector<std::size_t> idx;
			for (std::size_t i = 0; i < s.configs.size(); ++i)
				if (biopsy ? s.configs[i].biopsy.has_value() : s.configs[i].nonbiopsy.has_value())
					idx.push_back(i);
			std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
				const double ma = biopsy ? s.configs[a].biopsy->mean : s.configs[a].nonbiopsy->mean;
				const double mb = biopsy ? s.configs[b].biopsy->mean : s.configs[b].nonbiopsy->mean;
				if (ma != mb)
					return ma > mb;
				return s.configs[a].config_index < s.configs[b].config_index;
			});
			idx.resize(std::min(idx.size(), top_n));
			return idx;
		};
		s.top_biopsy = rank(true);
		s.top_nonbiopsy = rank(false);
		return s;
	}

	struct SweepOptions
	{
		int n_experiments = 100;
		std::uint64_t master_seed = 0;
		unsigned jobs = 1;
		ExperimentOptions experiment;
		std::function<void(const ExperimentResult&)> progress; ///< called from worker threads
	};

	/// Every (configuration, experiment) task is seeded by
	/// derive_seed(master_seed, canonical config index, experiment index).
	inline SweepOutput run_sweep(const std::vector<Configuration>& configs, const FeatureStore& store, const SweepOptions& opt)
	{
		if (opt.n_experiments < 1)
			invalid("harness", "experiment count must be positive");
		for (const auto& c : configs)
			store.get(c.contrast, c.normalization);
		std::vector<std::pair<std::size_t, int>> tasks;
		std::vector<Configuration> sorted = configs;
		std::sort(sorted.begin(), sorted.end(), [](const Configuration& a, const Configuration& b) { return config_index(a) < config_index(b); });
		sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
		for (std::size_t c = 0; c < sorted.size(); ++c)
			for (int e = 0; e < opt.n_experiments; ++e)
				tasks.emplace_back(c, e);
		SweepOutput out;
		out.results.resize(tasks.size());
		parallel_for(tasks.size(), opt.jobs, [&](std::size_t t) {
			const auto& cfg = sorted[tasks[t].first];
			const std::size_t ci = config_index(cfg);
			const int e = tasks[t].second;
			const auto& pair = store.get(cfg.contrast, cfg.normalization);
			ExperimentResult r = run_experiment(cfg, pair.biopsy, pair.nonbiopsy, derive_seed(opt.master_seed, ci, e), opt.experiment);
			r.config_index = ci;
			r.experiment = e;
			if (opt.progress)
				opt.progress(r);
			out.results[t] = std::move(r);
		});
		out.summary = summarize_sweep(sorted, out.results);
		return out;
	}

	// ---- feature ranking ------------------------------------------------------------------

	/// Occurrence counts of per-experiment top-k features, PCA configurations excluded;
	/// sorted by count descending then name, truncated to `report`.
	inline std::vector<std::pair<std::string, int>> rank_features(const std::vector<ExperimentResult>& results, std::size_t top_k = 5,
	                                                              std::size_t report = 12)
	{
		std::map<std::string, int> counts;
		for (const auto& r : results)
		{
			if (!r.ok || r.config.selector == SelectorKind::Pca)
				continue;
			for (std::size_t i = 0; i < std::min(top_k, r.top_features.size()); ++i)
				++counts[r.top_features[i]];
		}
		std::vector<std::pair<std::string, int>> out(counts.begin(), counts.end());
		std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
		if (out.size() > report)
			out.resize(report);
		return out;
	}

	// ---- curated simple models ----------------------------------------------------------

	inline const std::vector<std::string>& biopsy_feature_set()
	{
		static const std::vector<std::string> s{"lbp-3D-k_firstorder_Maximum", "original_firstorder_Energy", "lbp-3D-k_firstorder_Kurtosis",
		                                        "wavelet-LHL_glszm_SmallAreaHighGrayLevelEmphasis", "wavelet-LLH_glszm_SmallAreaHighGrayLevelEmphasis"};
		return s;
	}

	inline const std::vector<std::string>& nonbiopsy_feature_set()
	{
		static const std::vector<std::string> s{"lbp-3D-k_firstorder_Maximum", "original_firstorder_Energy", "wavelet-LHL_glszm_SmallAreaHighGrayLevelEmphasis",
		                                        "original_firstorder_Kurtosis", "original_firstorder_Skewness"};
		return s;
	}

	inline const std::vector<std::string>& intersecting_feature_set()
	{
		static const std::vector<std::string> s{"lbp-3D-k_firstorder_Kurtosis", "lbp-3D-k_firstorder_Maximum", "original_firstorder_Energy",
		                                        "original_firstorder_Kurtosis", "original_firstorder_Skewness"};
		return s;
	}

	struct SimpleSummary
	{
		MetricSummary auc_biopsy;
		MetricSummary auc_nonbiopsy;
		MetricSummary sensitivity_biopsy;
		MetricSummary specificity_biopsy;
		MetricSummary sensitivity_nonbiopsy;
		MetricSummary specificity_nonbiopsy;
	};

	struct SimpleOptions
	{
		int n_repeats = 100;
		std::uint64_t master_seed = 0;
		LogRegParams params{LogRegSolver::Lbfgs, 1.0};
	};

	namespace detail
	{
		inline MetricSummary required(const std::vector<double>& v, const char* what)
		{
			auto s = summarize(v);
			if (!s)
				fail("harness", std::string("no finite ") + what + " values");
			return *s;
		}
	}

	/// Logistic regression on a fixed feature list: trained on the SMOTE-balanced internal
	/// cohort, scored on the external cohort's biopsy-based and non-biopsy rows (patient means).
	/// Each repeat reseeds the oversampling.
	inline SimpleSummary train_simple(const std::vector<std::string>& feature_set, const Cohort& internal, const Cohort& external_biopsy,
	                                  const Cohort& external_nonbiopsy, const SimpleOptions& opt = {})
	{
		if (feature_set.empty())
			invalid("harness", "empty feature set");
		for (const auto* c : {&internal, &external_biopsy, &external_nonbiopsy})
			for (const auto& f : feature_set)
				if (std::find(c->features.begin(), c->features.end(), f) == c->features.end())
					invalid("harness", "unknown feature '" + f + "'");
		if (opt.n_repeats < 1)
			invalid("harness", "repeat count must be positive");
		detail::require_biopsy_training_rows(internal);
		const Cohort tr = minmax_scale(internal.select_features(feature_set));
		const Cohort eb = minmax_scale(external_biopsy.select_features(feature_set));
		const Cohort enb = minmax_scale(external_nonbiopsy.select_features(feature_set));
		std::vector<double> ab, anb, sb, pb, snb, pnb;
		for (int r = 0; r < opt.n_repeats; ++r)
		{
			Rng rng(derive_seed(opt.master_seed, 0x53494d50ULL, r));
			const Cohort bal = smote(tr, rng);
			const TrainedModel m = fit_model(opt.params, bal.X, bal.label_vector(), bal.features, derive_seed(opt.master_seed, 0x4d4f44ULL, r));
			const PatientScores b = per_patient(eb, predict_score(m, eb.X, eb.features));
			const PatientScores nb = per_patient(enb, predict_score(m, enb.X, enb.features));
			ab.push_back(auc(b.scores, b.labels));
			anb.push_back(auc(nb.scores, nb.labels));
			const auto rb = sens_spec(b.scores, b.labels, m.threshold());
			const auto rnb = sens_spec(nb.scores, nb.labels, m.threshold());
			sb.push_back(rb.sensitivity);
			pb.push_back(rb.specificity);
			snb.push_back(rnb.sensitivity);
			pnb.push_back(rnb.specificity);
		}
		return {detail::required(ab, "AUC"),         detail::required(anb, "AUC"),         detail::required(sb, "sensitivity"),
		        detail::required(pb, "specificity"), detail::required(snb, "sensitivity"), detail::required(pnb, "specificity")};
	}

	// ---- baseline ---------------------------------------------------------------------

	struct BaselineFeatures
	{
		double mean_intensity = 0.0;
		double local_variance_sd = 0.0;
		double haar_hh = 0.0;
		int cubes = 0;
	};

	inline const std::vector<std::string>& baseline_feature_names()
	{
		static const std::vector<std::string> n{"cube_mean_intensity", "cube_local_variance_sd", "cube_haar_hh"};
		return n;
	}

	namespace detail
	{
		/// Features of one cube [lo, lo + n) of voxels.
		inline std::array<double, 3> cube_features(const Volume& v, const Index3& lo, const Index3& n)
		{
			auto at = [&](long i, long j, long k) { return v.at(lo[0] + i, lo[1] + j, lo[2] + k); };
			double sum = 0.0;
			for (long k = 0; k < n[2]; ++k)
				for (long j = 0; j < n[1]; ++j)
					for (long i = 0; i < n[0]; ++i)
						sum += at(i, j, k);
			const double count = static_cast<double>(n[0] * n[1] * n[2]);
			const double mean = sum / count;

			// 3x3 in-slice local variance, windows clamped to the cube.
			std::vector<double> lv;
			lv.reserve(static_cast<std::size_t>(count));
			for (long k = 0; k < n[2]; ++k)
				for (long j = 0; j < n[1]; ++j)
					for (long i = 0; i < n[0]; ++i)
					{
						double s = 0.0, s2 = 0.0;
						int m = 0;
						for (long dj = -1; dj <= 1; ++dj)
							for (long di = -1; di <= 1; ++di)
							{
								const long ii = i + di, jj = j + dj;
								if (ii < 0 || jj < 0 || ii >= n[0] || jj >= n[1])
									continue;
								const double x = at(ii, jj, k);
								s += x;
								s2 += x * x;
								++m;
							}
						const double mu = s / m;
						lv.push_back(std::max(0.0, s2 / m - mu * mu));
					}
			double lm = 0.0;
			for (double x : lv)
				lm += x;
			lm /= static_cast<double>(lv.size());
			double lss = 0.0;
			for (double x : lv)
				lss += (x - lm) * (x - lm);
			const double lsd = std::sqrt(lss / static_cast<double>(lv.size()));

			// Single-level orthonormal 2D Haar on the mid-axial slice; HH = diagonal detail.
			const long k = n[2] / 2;
			double hh = 0.0;
			long blocks = 0;
			for (long j = 0; j + 1 < n[1]; j += 2)
				for (long i = 0; i + 1 < n[0]; i += 2)
				{
					hh += std::abs(0.5 * (at(i, j, k) - at(i + 1, j, k) - at(i, j + 1, k) + at(i + 1, j + 1, k)));
					++blocks;
				}
			return {mean, lsd, blocks > 0 ? hh / static_cast<double>(blocks) : 0.0};
		}
	}

	/// Averages the three cube features over up to `n_cubes` disjoint random cubes of edge
	/// `cube_mm` (native spacing) lying inside the mask. Fewer cubes are used when the mask
	/// cannot hold them, but at least one is required.
	inline BaselineFeatures baseline_features(const Volume& v, const LiverMask& mask, Rng& rng, int n_cubes = 5, double cube_mm = 15.0,
	                                          int attempts = 2000)
	{
		if (!mask.aligned_with(v))
			invalid("harness", "mask does not match volume geometry");
		Index3 n{};
		for (int a = 0; a < 3; ++a)
		{
			n[a] = std::max(2L, std::lround(cube_mm / v.spacing()[a]));
			if (n[a] > v.dims()[a])
				fail("harness", "cube larger than the volume");
		}
		std::vector<Index3> placed;
		std::uniform_int_distribution<long> pi(0, v.dims()[0] - n[0]), pj(0, v.dims()[1] - n[1]), pk(0, v.dims()[2] - n[2]);
		for (int t = 0; t < attempts && static_cast<int>(placed.size()) < n_cubes; ++t)
		{
			const Index3 lo{pi(rng), pj(rng), pk(rng)};
			bool disjoint = true;
			for (const auto& q : placed)
			{
				bool overlap = true;
				for (int a = 0; a < 3; ++a)
					overlap = overlap && lo[a] < q[a] + n[a] && q[a] < lo[a] + n[a];
				if (overlap)
				{
					disjoint = false;
					break;
				}
			}
			if (!disjoint)
				continue;
			// Corners inside a convex mask imply the whole cube is; check every voxel anyway.
			bool inside = true;
			for (long k = 0; k < n[2] && inside; ++k)
				for (long j = 0; j < n[1] && inside; ++j)
					for (long i = 0; i < n[0] && inside; ++i)
						inside = mask.at(lo[0] + i, lo[1] + j, lo[2] + k);
			if (inside)
				placed.push_back(lo);
		}
		if (placed.empty())
			fail("harness", "mask too small for a single baseline cube");
		BaselineFeatures f;
		for (const auto& lo : placed)
		{
			const auto c = detail::cube_features(v, lo, n);
			f.mean_intensity += c[0];
			f.local_variance_sd += c[1];
			f.haar_hh += c[2];
		}
		const double m = static_cast<double>(placed.size());
		f.mean_intensity /= m;
		f.local_variance_sd /= m;
		f.haar_hh /= m;
		f.cubes = static_cast<int>(placed.size());
		return f;
	}

	struct BaselineSummary
	{
		MetricSummary auc;
		MetricSummary sensitivity;
		MetricSummary specificity;
	};

	/// L2 logistic regression (C = 1) on the three cube features, trained on the SMOTE-balanced
	/// internal rows and scored on the external rows, repeated with reseeded oversampling.
	inline BaselineSummary baseline_hirano(const Cohort& internal, const Cohort& external, int n_repeats, std::uint64_t master_seed)
	{
		if (internal.features != baseline_feature_names() || external.features != baseline_feature_names())
			invalid("harness", "baseline cohorts must carry exactly the cube features");
		const Cohort tr = minmax_scale(internal);
		const Cohort te = minmax_scale(external);
		std::vector<double> a, s, p;
		for (int r = 0; r < n_repeats; ++r)
		{
			Rng rng(derive_seed(master_seed, 0x42415345ULL, r));
			const Cohort bal = smote(tr, rng);
			const TrainedModel m = fit_model(LogRegParams{LogRegSolver::Lbfgs, 1.0}, bal.X, bal.label_vector(), bal.features, derive_seed(master_seed, r));
			const PatientScores ps = per_patient(te, predict_score(m, te.X, te.features));
			a.push_back(auc(ps.scores, ps.labels));
			const auto rates = sens_spec(ps.scores, ps.labels, m.threshold());
			s.push_back(rates.sensitivity);
			p.push_back(rates.specificity);
		}
		return {detail::required(a, "AUC"), detail::required(s, "sensitivity"), detail::required(p, "specificity")};
	}

	// ---- confounder audit -------------------------------------------------------------------

	struct AuditRow
	{
		std::string patient_id;
		int label = 0;
		double roi_radius_mm = kRoiRadiusMm;
		Vec3 spacing{1.0, 1.0, 1.0};
	};

	struct AuditSummary
	{
		MetricSummary volume_auc;
		MetricSummary spacing_auc;
	};

	inline double sphere_volume(double r) { return 4.0 / 3.0 * std::numbers::pi * r * r * r; }

	/// Logistic regression on geometry-only inputs (analytic ROI volume; voxel spacing triple)
	/// over repeated stratified patient splits. High AUC means acquisition geometry leaks the label.
	inline AuditSummary confounder_audit(const std::vector<AuditRow>& rows, int n_repeats = 20, std::uint64_t master_seed = 0, double fraction = 0.8)
	{
		if (rows.empty())
			invalid("harness", "audit needs rows");
		Cohort c;
		c.features = {"roi_volume_mm3", "spacing_x", "spacing_y", "spacing_z"};
		c.X.resize(static_cast<Eigen::Index>(rows.size()), 4);
		for (std::size_t r = 0; r < rows.size(); ++r)
		{
			const auto& row = rows[r];
			c.X.row(static_cast<Eigen::Index>(r)) << sphere_volume(row.roi_radius_mm), row.spacing[0], row.spacing[1], row.spacing[2];
			c.labels.push_back(row.label);
			c.fstage.push_back(row.label);
			c.patient_ids.push_back(row.patient_id);
			c.roi_ids.push_back(row.patient_id + "-audit");
			c.roi_kinds.push_back(RoiKind::BiopsyBased);
			c.synthetic.push_back(0);
		}
		std::vector<double> va, sa;
		for (int r = 0; r < n_repeats; ++r)
		{
			auto [tr, te] = split(c, {fraction, derive_seed(master_seed, 0x41554454ULL, r)});
			for (int which = 0; which < 2; ++which)
			{
				const std::vector<std::string> cols =
				    which == 0 ? std::vector<std::string>{"roi_volume_mm3"} : std::vector<std::string>{"spacing_x", "spacing_y", "spacing_z"};
				const Cohort a = minmax_scale(tr.select_features(cols));
				const Cohort b = minmax_scale(te.select_features(cols));
				const TrainedModel m = fit_model(LogRegParams{LogRegSolver::Lbfgs, 1.0}, a.X, a.label_vector(), a.features, derive_seed(master_seed, r, which));
				const PatientScores ps = per_patient(b, predict_score(m, b.X, b.features));
				(which == 0 ? va : sa).push_back(auc(ps.scores, ps.labels));
			}
		}
		return {ci_normal(va), ci_normal(sa)};
	}

	// ---- serialization ---------------------------------------------------------------------

	inline nlohmann::json to_json(const Configuration& c)
	{
		return {{"contrast", to_string(c.contrast)}, {"normalization", to_string(c.normalization)}, {"model", to_string(c.model)}, {"selector", to_string(c.selector)}};
	}

	inline nlohmann::json to_json(const ExperimentResult& r)
	{
		auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
		nlohmann::json j;
		j["config"] = to_json(r.config);
		j["config_index"] = r.config_index;
		j["experiment"] = r.experiment;
		j["seed"] = r.seed;
		j["status"] = r.ok ? "ok" : "failed";
		if (!r.ok)
			j["error"] = r.error;
		j["hyperparameters"] = r.chosen ? to_json(*r.chosen) : nlohmann::json(nullptr);
		j["auc_biopsy"] = num(r.auc_biopsy);
		j["auc_nonbiopsy"] = num(r.auc_nonbiopsy);
		j["sensitivity_biopsy"] = num(r.biopsy_rates.sensitivity);
		j["specificity_biopsy"] = num(r.biopsy_rates.specificity);
		j["sensitivity_nonbiopsy"] = num(r.nonbiopsy_rates.sensitivity);
		j["specificity_nonbiopsy"] = num(r.nonbiopsy_rates.specificity);
		j["top_features"] = r.top_features;
		j["selected_features"] = r.selected_features;
		j["grid"] = {{"combos", r.grid_combos}, {"runs_per_combo", r.grid_runs_per_combo}, {"best_validation_auc", num(r.best_validation_auc)}};
		return j;
	}

	inline ExperimentResult result_from_json(const nlohmann::json& j)
	{
		try
		{
			ExperimentResult r;
			const auto& c = j.at("config");
			r.config = {parse_phase(c.at("contrast").get<std::string>()), parse_normalization(c.at("normalization").get<std::string>()),
			            parse_model(c.at("model").get<std::string>()), parse_selector(c.at("selector").get<std::string>())};
			r.config_index = j.at("config_index").get<std::size_t>();
			r.experiment = j.at("experiment").get<int>();
			r.seed = j.at("seed").get<std::uint64_t>();
			r.ok = j.at("status").get<std::string>() == "ok";
			if (j.contains("error"))
				r.error = j.at("error").get<std::string>();
			auto num = [&](const char* k) { return j.at(k).is_null() ? std::nan("") : j.at(k).get<double>(); };
			r.auc_biopsy = num("auc_biopsy");
			r.auc_nonbiopsy = num("auc_nonbiopsy");
			r.biopsy_rates = {num("sensitivity_biopsy"), num("specificity_biopsy")};
			r.nonbiopsy_rates = {num("sensitivity_nonbiopsy"), num("specificity_nonbiopsy")};
			r.top_features = j.at("top_features").get<std::vector<std::string>>();
			r.selected_features = j.at("selected_features").get<std::vector<std::string>>();
			if (!j.at("hyperparameters").is_null())
				r.chosen = hyper_from_json(r.config.model, j.at("hyperparameters"));
			const auto& g = j.at("grid");
			r.grid_combos = g.at("combos").get<int>();
			r.grid_runs_per_combo = g.at("runs_per_combo").get<int>();
			r.best_validation_auc = g.at("best_validation_auc").is_null() ? std::nan("") : g.at("best_validation_auc").get<double>();
			return r;
		}
		catch (const nlohmann::json::exception& e)
		{
			invalid("harness", std::string("malformed result record: ") + e.what());
		}
	}
}

#endif
