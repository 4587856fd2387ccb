#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace fibrorad;

namespace
{
	/// Biopsy and non-biopsy cohorts over the same patients. The curated non-biopsy
	/// features carry the label plus noise; the remaining columns are pure noise.
	CohortPair synthetic_pair(int n1, int n0, std::uint64_t seed, double signal = 1.5, int noise_cols = 5)
	{
		Rng rng(seed);
		std::normal_distribution<double> g(0, 1);
		std::vector<std::string> names = nonbiopsy_feature_set();
		for (int j = 0; j < noise_cols; ++j)
			names.push_back("noise_" + std::to_string(j));
		const auto labels = test::class_labels(n1, n0);
		const Eigen::Index n = static_cast<Eigen::Index>(labels.size()), p = static_cast<Eigen::Index>(names.size());
		CohortPair pair;
		for (int kind = 0; kind < 2; ++kind)
		{
			Eigen::MatrixXd X(n, p);
			for (Eigen::Index i = 0; i < n; ++i)
				for (Eigen::Index j = 0; j < p; ++j)
					X(i, j) = g(rng) + (j < 5 ? signal * labels[static_cast<std::size_t>(i)] : 0.0);
			Cohort c = test::make_cohort(X, labels, names);
			if (kind == 1)
				for (std::size_t r = 0; r < c.rows(); ++r)
				{
					c.roi_kinds[r] = RoiKind::NonBiopsy;
					c.roi_ids[r] = c.patient_ids[r] + "-nonbiopsy";
				}
			(kind == 0 ? pair.biopsy : pair.nonbiopsy) = std::move(c);
		}
		return pair;
	}

	ExperimentOptions quick(int runs = 2)
	{
		ExperimentOptions o;
		o.grid_runs = runs;
		return o;
	}

	Configuration cfg(const char* norm, ModelKind m, SelectorKind s, ContrastPhase c = ContrastPhase::NC)
	{
		return {c, parse_normalization(norm), m, s};
	}

	ExperimentResult ranked(std::vector<std::string> top, SelectorKind s = SelectorKind::Boruta)
	{
		ExperimentResult r;
		r.config = cfg("none", ModelKind::LogisticRegression, s);
		r.ok = true;
		r.top_features = std::move(top);
		return r;
	}
}

TEST_CASE("configuration enumeration")
{
	const auto all = enumerate_configs();
	REQUIRE(all.size() == 192);
	CHECK(all.front() == cfg("none", ModelKind::LogisticRegression, SelectorKind::None));
	CHECK(all.back().contrast == ContrastPhase::CE);
	for (std::size_t i = 0; i < all.size(); ++i)
	{
		CHECK(config_index(all[i]) == i);
		for (std::size_t j = i + 1; j < all.size(); ++j)
			REQUIRE_FALSE(all[i] == all[j]);
	}
}

TEST_CASE("configuration filters")
{
	const auto all = enumerate_configs();
	CHECK(filter_configs(all, "").size() == 192);
	CHECK(filter_configs(all, "contrast=NC,model=logreg|rf,selector=none|boruta").size() == 24);
	CHECK(filter_configs(all, "contrast=NC,normalization=gamma1.5,model=logreg,selector=boruta").size() == 1);
	CHECK(filter_configs(all, "contrast=NC,selector=none|boruta").size() == 48);
	CHECK_THROWS_AS(filter_configs(all, "colour=NC"), ValidationError);
	CHECK_THROWS_AS(filter_configs(all, "model=xgboost"), ValidationError);
	CHECK_THROWS_AS(filter_configs(all, "model"), ValidationError);
}

TEST_CASE("grid search trains every combination the requested number of times")
{
	const CohortPair pair = synthetic_pair(12, 10, 71);
	const Cohort c = minmax_scale(pair.biopsy);
	auto [tr, val] = split(c, {0.75, 3});
	for (ModelKind m : kAllModels)
	{
		const GridOutcome g = grid_search(m, tr.X, tr.label_vector(), tr.features, val, val.X, m == ModelKind::LogisticRegression ? 30 : 2, 9);
		CHECK(g.combos.size() == hyper_grid(m).size());
		for (int r : g.runs)
			CHECK(r == (m == ModelKind::LogisticRegression ? 30 : 2));
		CHECK(g.best == argmax_first(g.mean_validation_auc));
	}
	CHECK(argmax_first({0.5, 0.7, 0.7, 0.1}) == 1);
	std::vector<double> v{0.2, 0.9, 0.4};
	for (double& x : v)
		x *= 3.0;
	CHECK(argmax_first(v) == 1);
}

TEST_CASE("one experiment follows the nested protocol")
{
	const CohortPair pair = synthetic_pair(24, 16, 72);
	const Configuration c = cfg("gamma1.5", ModelKind::LogisticRegression, SelectorKind::Boruta);
	const ExperimentResult r = run_experiment(c, pair.biopsy, pair.nonbiopsy, 123);
	INFO(r.error);
	REQUIRE(r.ok);
	CHECK(r.grid_combos == 12);
	CHECK(r.grid_runs_per_combo == 30);
	CHECK(r.auc_biopsy >= 0.0);
	CHECK(r.auc_biopsy <= 1.0);
	CHECK(r.auc_nonbiopsy > 0.8);
	CHECK(r.top_features.size() <= 5);
	CHECK(to_json(run_experiment(c, pair.biopsy, pair.nonbiopsy, 123)).dump() == to_json(r).dump());
	const ExperimentResult back = result_from_json(nlohmann::json::parse(to_json(r).dump()));
	CHECK(to_json(back).dump() == to_json(r).dump());
}

TEST_CASE("non-biopsy rows only affect the non-biopsy score")
{
	const CohortPair pair = synthetic_pair(16, 12, 73);
	CohortPair scrambled = pair;
	Rng rng(5);
	scrambled.nonbiopsy.X = test::gaussian(rng, scrambled.nonbiopsy.X.rows(), scrambled.nonbiopsy.X.cols()) * 1000.0;
	const Configuration c = cfg("none", ModelKind::LinearSgd, SelectorKind::Lasso);
	const ExperimentResult a = run_experiment(c, pair.biopsy, pair.nonbiopsy, 9, quick());
	const ExperimentResult b = run_experiment(c, scrambled.biopsy, scrambled.nonbiopsy, 9, quick());
	REQUIRE(a.ok);
	REQUIRE(b.ok);
	CHECK(a.auc_biopsy == b.auc_biopsy);
	CHECK(a.top_features == b.top_features);
	CHECK(to_json(*a.chosen) == to_json(*b.chosen));

	// Feeding non-biopsy rows as training input is refused and recorded.
	const ExperimentResult bad = run_experiment(c, pair.nonbiopsy, pair.nonbiopsy, 9, quick());
	CHECK_FALSE(bad.ok);
	CHECK(bad.error.find("non-biopsy") != std::string::npos);
}

TEST_CASE("degenerate experiments are recorded as failures")
{
	const CohortPair pair = synthetic_pair(10, 1, 74);
	const ExperimentResult r = run_experiment(cfg("none", ModelKind::LogisticRegression, SelectorKind::None), pair.biopsy, pair.nonbiopsy, 1, quick());
	CHECK_FALSE(r.ok);
	CHECK_FALSE(r.error.empty());
	CHECK(to_json(r).at("status") == "failed");
}

TEST_CASE("sweep seeds depend on the canonical configuration index")
{
	FeatureStore store;
	store.put(ContrastPhase::NC, parse_normalization("none"), synthetic_pair(12, 10, 75));
	store.put(ContrastPhase::NC, parse_normalization("gamma1.5"), synthetic_pair(12, 10, 76));
	std::vector<Configuration> configs{cfg("gamma1.5", ModelKind::LinearSgd, SelectorKind::None), cfg("none", ModelKind::LogisticRegression, SelectorKind::Pca),
	                                   cfg("none", ModelKind::LinearSgd, SelectorKind::None)};
	SweepOptions opt;
	opt.n_experiments = 3;
	opt.master_seed = 42;
	opt.experiment = quick();
	const SweepOutput a = run_sweep(configs, store, opt);
	std::reverse(configs.begin(), configs.end());
	opt.jobs = 3;
	const SweepOutput b = run_sweep(configs, store, opt);
	REQUIRE(a.results.size() == 9);
	for (std::size_t i = 0; i < a.results.size(); ++i)
		CHECK(to_json(a.results[i]).dump() == to_json(b.results[i]).dump());
	for (std::size_t i = 0; i + 1 < a.results.size(); ++i)
		CHECK(a.results[i].config_index <= a.results[i + 1].config_index);
	CHECK(a.results[0].seed == derive_seed(42, a.results[0].config_index, 0));

	// 3 configs plus 1 contrast, 2 normalization, 2 model and 2 selector values.
	const SweepSummary& s = a.summary;
	CHECK(s.configs.size() + s.settings.size() == 3 + 1 + 2 + 2 + 2);
	for (const auto& st : s.settings)
	{
		std::vector<double> means;
		for (const auto& cs : s.configs)
		{
			const std::map<std::string, std::string> v{{"contrast", to_string(cs.config.contrast)}, {"normalization", to_string(cs.config.normalization)},
			                                           {"model", to_string(cs.config.model)}, {"selector", to_string(cs.config.selector)}};
			if (v.at(st.axis) == st.value && cs.biopsy)
				means.push_back(cs.biopsy->mean);
		}
		REQUIRE(st.biopsy);
		CHECK(st.biopsy->mean == ci_normal(means).mean);
	}
	CHECK(s.top_biopsy.size() == 3);

	FeatureStore empty;
	CHECK_THROWS_AS(run_sweep(configs, empty, opt), ValidationError);
}

TEST_CASE("feature ranking counts per-experiment top features")
{
	std::vector<ExperimentResult> rs{ranked({"a", "b"}), ranked({"a", "c"}), ranked({"c", "a", "d"}), ranked({"z", "z2"}, SelectorKind::Pca)};
	ExperimentResult failed = ranked({"q"});
	failed.ok = false;
	rs.push_back(failed);
	const auto r = rank_features(rs);
	REQUIRE(r.size() == 4);
	CHECK(r[0] == std::pair<std::string, int>{"a", 3});
	CHECK(r[1] == std::pair<std::string, int>{"c", 2});
	CHECK(r[2] == std::pair<std::string, int>{"b", 1});
	CHECK(r[3] == std::pair<std::string, int>{"d", 1});
	CHECK(rank_features(rs, 1)[0] == std::pair<std::string, int>{"a", 2});

	std::vector<ExperimentResult> many;
	for (int i = 0; i < 20; ++i)
		many.push_back(ranked({"f" + std::to_string(i)}));
	CHECK(rank_features(many).size() == 12);
}

TEST_CASE("ROI-averaged prediction")
{
	TrainedModel m;
	m.params = SgdParams{};
	m.schema = {"x"};
	m.fitted = linear::LinearModel{Eigen::VectorXd::Ones(1), 0.0, false};
	Eigen::MatrixXd one(1, 1), two(2, 1);
	one << 0.3;
	two << 0.2, 0.8;
	CHECK(average_roi_prediction(m, one) == 0.3);
	CHECK(average_roi_prediction(m, two) == Catch::Approx(0.5));
	CHECK(average_roi_prediction(m, two.colwise().reverse()) == average_roi_prediction(m, two));
	CHECK_THROWS_AS(average_roi_prediction(m, Eigen::MatrixXd(0, 1)), ValidationError);
}

TEST_CASE("curated simple models")
{
	const CohortPair dev = synthetic_pair(20, 14, 77);
	const CohortPair ext = synthetic_pair(6, 4, 78);
	SimpleOptions opt;
	opt.n_repeats = 10;
	opt.master_seed = 3;
	const SimpleSummary s = train_simple(nonbiopsy_feature_set(), dev.biopsy, ext.biopsy, ext.nonbiopsy, opt);
	CHECK(s.auc_biopsy.mean >= 0.85);
	CHECK(s.auc_nonbiopsy.mean >= 0.85);
	CHECK(s.auc_biopsy.n == 10);
	const SimpleSummary again = train_simple(nonbiopsy_feature_set(), dev.biopsy, ext.biopsy, ext.nonbiopsy, opt);
	CHECK(again.auc_nonbiopsy.mean == s.auc_nonbiopsy.mean);
	CHECK(again.specificity_biopsy.ci_low == s.specificity_biopsy.ci_low);
	CHECK_THROWS_AS(train_simple({"original_shape_MeshVolume"}, dev.biopsy, ext.biopsy, ext.nonbiopsy, opt), ValidationError);
	CHECK(biopsy_feature_set().size() == 5);
	CHECK(intersecting_feature_set().size() == 5);
}

TEST_CASE("baseline cube features")
{
	PhantomSpec spec = test::small_phantom();
	spec.seed = 5;
	const Phantom ph = generate_phantom(spec);
	const Volume flat = Volume::filled(ph.volume.dims(), ph.volume.spacing(), ph.volume.origin(), 40.0);
	Rng rng(1);
	const BaselineFeatures f = baseline_features(flat, ph.mask, rng);
	CHECK(f.cubes == 5);
	CHECK(f.mean_intensity == 40.0);
	CHECK(f.local_variance_sd == 0.0);
	CHECK(f.haar_hh == 0.0);
	Rng r1(2), r2(2);
	const BaselineFeatures a = baseline_features(ph.volume, ph.mask, r1), b = baseline_features(ph.volume, ph.mask, r2);
	CHECK(a.mean_intensity == b.mean_intensity);
	CHECK(a.haar_hh == b.haar_hh);
	CHECK(a.haar_hh > 0.0);

	std::vector<std::uint8_t> speck(ph.mask.data().size(), 0);
	speck[speck.size() / 2] = 1;
	const LiverMask tiny(ph.mask.dims(), ph.mask.spacing(), ph.mask.origin(), std::move(speck));
	CHECK_THROWS_AS(baseline_features(ph.volume, tiny, rng), Error);
}

TEST_CASE("baseline model on constant and textured cohorts")
{
	auto cohort = [](bool textured, std::uint64_t seed) {
		const int n = 32;
		Eigen::MatrixXd X(n, 3);
		const auto labels = test::class_labels(16, 16);
		for (int i = 0; i < n; ++i)
		{
			PhantomSpec s = test::small_phantom();
			s.class_label = labels[static_cast<std::size_t>(i)];
			s.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
			const Phantom ph = generate_phantom(s);
			const Volume v = textured ? clip_hu(ph.volume, ContrastPhase::NC) : Volume::filled(ph.volume.dims(), ph.volume.spacing(), ph.volume.origin(), 50.0);
			Rng rng(derive_seed(seed, 99, static_cast<std::uint64_t>(i)));
			const BaselineFeatures f = baseline_features(v, ph.mask, rng);
			X.row(i) << f.mean_intensity, f.local_variance_sd, f.haar_hh;
		}
		return test::make_cohort(X, labels, baseline_feature_names());
	};
	for (bool textured : {false, true})
	{
		const Cohort c = cohort(textured, 79);
		auto [tr, te] = split(c, {0.75, 4});
		const BaselineSummary s = baseline_hirano(tr, te, 5, 1);
		INFO("textured " << textured << " auc " << s.auc.mean);
		if (textured)
			CHECK(s.auc.mean > 0.7);
		else
			CHECK(s.auc.mean == 0.5);
	}
}

TEST_CASE("confounder audit")
{
	std::vector<AuditRow> fixed;
	for (int i = 0; i < 40; ++i)
		fixed.push_back({patient_id(static_cast<std::size_t>(i)), i % 3 == 0, kRoiRadiusMm, {0.7, 0.7, 0.7}});
	const AuditSummary f = confounder_audit(fixed, 20, 1);
	CHECK(f.volume_auc.mean == 0.5);
	CHECK(f.volume_auc.ci_low == 0.5);
	CHECK(f.spacing_auc.mean == 0.5);

	std::vector<AuditRow> confounded = fixed, jittered = fixed;
	Rng rng(80);
	std::uniform_real_distribution<double> u(0.6, 0.9);
	for (auto& r : confounded)
		r.spacing = {r.label ? 0.8 + 0.1 * u(rng) : 0.6 + 0.1 * u(rng), 0.7, 1.0};
	CHECK(confounder_audit(confounded, 20, 1).spacing_auc.mean > 0.8);
	double total = 0;
	for (int seed = 0; seed < 20; ++seed)
	{
		for (auto& r : jittered)
			r.spacing = {u(rng), u(rng), u(rng)};
		total += confounder_audit(jittered, 5, static_cast<std::uint64_t>(seed)).spacing_auc.mean;
	}
	CHECK(total / 20 >= 0.4);
	CHECK(total / 20 <= 0.6);
	CHECK_THROWS_AS(confounder_audit({}), ValidationError);
}
