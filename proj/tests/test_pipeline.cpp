#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace fibrorad;

namespace
{
	CohortPair two_kind_pair(int n1, int n0, std::uint64_t seed)
	{
		Rng rng(seed);
		const auto labels = test::class_labels(n1, n0);
		CohortPair p;
		p.biopsy = test::make_cohort(test::gaussian(rng, n1 + n0, 2), labels);
		p.nonbiopsy = test::make_cohort(test::gaussian(rng, n1 + n0, 2), labels);
		for (std::size_t r = 0; r < p.nonbiopsy.rows(); ++r)
		{
			p.nonbiopsy.roi_kinds[r] = RoiKind::NonBiopsy;
			p.nonbiopsy.roi_ids[r] = roi_id(p.nonbiopsy.patient_ids[r], RoiKind::NonBiopsy, 0);
		}
		return p;
	}
}

TEST_CASE("ROI identifiers and workspace layout")
{
	CHECK(roi_id("P001", RoiKind::BiopsyBased, 0) == "P001-biopsy");
	CHECK(roi_id("P001", RoiKind::NonBiopsy, 1) == "P001-nonbiopsy-2");
	const Workspace ws = Workspace::at("run");
	CHECK(ws.volume("P001", ContrastPhase::CE) == std::filesystem::path("run/volumes/P001_CE.mhd"));
	CHECK(ws.mask("P001") == std::filesystem::path("run/volumes/P001_mask.mhd"));
	CHECK(ws.feature_file(ContrastPhase::NC, parse_normalization("gamma1.5"), RoiKind::NonBiopsy) ==
	      std::filesystem::path("run/features/NC_gamma1.5_nonbiopsy.csv"));
	CHECK(ws.result("sweep.jsonl") == std::filesystem::path("run/results/sweep.jsonl"));
}

TEST_CASE("labels file validation")
{
	test::TempDir dir("labels");
	const auto path = dir / "labels.csv";
	write_labels(path, {{"P001", 0, 0}, {"P002", 3, 1}});
	const auto rows = read_labels(path);
	REQUIRE(rows.size() == 2);
	CHECK(rows[1].patient_id == "P002");
	CHECK(rows[1].fstage == 3);
	write_labels(path, {{"P001", 5, 1}});
	CHECK_THROWS_AS(read_labels(path), ValidationError);
	write_labels(path, {{"P001", 2, 0}});
	CHECK_THROWS_AS(read_labels(path), ValidationError);
	write_labels(path, {{"P001", 0, 0}, {"P001", 0, 0}});
	CHECK_THROWS_AS(read_labels(path), ValidationError);
}

TEST_CASE("held-out split keeps both ROI kinds of a patient together")
{
	const CohortPair pair = two_kind_pair(104, 64, 91);
	const auto [internal, external] = split_internal_external(pair, 5);
	CHECK(internal.biopsy.rows() == 134);
	CHECK(external.biopsy.rows() == 34);
	CHECK(internal.nonbiopsy.patient_ids == internal.biopsy.patient_ids);
	CHECK(external.nonbiopsy.patient_ids == external.biopsy.patient_ids);
	const auto again = split_internal_external(pair, 5);
	CHECK(again.first.biopsy.patient_ids == internal.biopsy.patient_ids);

	Rng rng(3);
	const CohortPair perm = permute_labels(pair, rng);
	CHECK(perm.biopsy.labels == perm.nonbiopsy.labels);
	CHECK(perm.biopsy.count(1) == 104);
	CHECK(perm.biopsy.labels != pair.biopsy.labels);
	CHECK(perm.biopsy.X == pair.biopsy.X);
}

TEST_CASE("masks round-trip through files")
{
	test::TempDir dir("mask");
	PhantomSpec s = test::small_phantom();
	s.seed = 4;
	const Phantom ph = generate_phantom(s);
	write_mask(ph.mask, dir / "m.mhd");
	const LiverMask back = read_mask(dir / "m.mhd");
	CHECK(back.data() == ph.mask.data());
	CHECK(back.spacing() == ph.mask.spacing());
}

TEST_CASE("workspace extraction is complete and reproducible")
{
	test::TempDir dir("workspace");
	const PhantomCohort cohort = generate_cohort(2, 2, 31, test::small_phantom());
	const Workspace ws = Workspace::at(dir.path());
	write_phantom_workspace(cohort, ws, {ContrastPhase::NC}, 2);
	const auto inputs = workspace_inputs(ws);
	REQUIRE(inputs.size() == 4);
	for (const auto& p : inputs)
		CHECK(p.rois.size() == 2);

	ExtractOptions opt;
	opt.phases = {ContrastPhase::NC};
	opt.norms = {parse_normalization("gamma1.5")};
	extract_workspace(ws, opt);
	const auto bfile = ws.feature_file(ContrastPhase::NC, opt.norms[0], RoiKind::BiopsyBased);
	const std::string first = test::slurp(bfile);
	const FeatureStore store = load_feature_store(ws);
	REQUIRE(store.has(ContrastPhase::NC, opt.norms[0]));
	CHECK_FALSE(store.has(ContrastPhase::CE, opt.norms[0]));
	const CohortPair& pair = store.get(ContrastPhase::NC, opt.norms[0]);
	CHECK(pair.biopsy.rows() == 4);
	CHECK(pair.nonbiopsy.rows() == 4);
	CHECK(pair.biopsy.features == feature_schema());
	CHECK(pair.biopsy.roi_ids[0] == roi_id(inputs[0].id, RoiKind::BiopsyBased, 0));

	opt.jobs = 3;
	extract_workspace(ws, opt);
	CHECK(test::slurp(bfile) == first);

	// The in-memory path yields the same numbers as the file path.
	const FeatureStore mem = extract_phantom_store(cohort, opt);
	CHECK(mem.get(ContrastPhase::NC, opt.norms[0]).biopsy.X.isApprox(pair.biopsy.X, 1e-12));

	opt.phases = {ContrastPhase::CE};
	CHECK_THROWS_AS(extract_workspace(ws, opt), ValidationError);
}

TEST_CASE("workspace inputs need both ROI kinds")
{
	test::TempDir dir("inputs");
	const Workspace ws = Workspace::at(dir.path());
	write_labels(ws.labels_path, {{"P001", 0, 0}});
	write_roi_manifest(ws.manifest_path, {{"P001", {{50, 50, 50}, kRoiRadiusMm, RoiKind::BiopsyBased}}});
	CHECK_THROWS_AS(workspace_inputs(ws), ValidationError);
	write_roi_manifest(ws.manifest_path, {{"P009", {{50, 50, 50}, kRoiRadiusMm, RoiKind::BiopsyBased}}});
	CHECK_THROWS_AS(workspace_inputs(ws), ValidationError);
	CHECK_THROWS_AS(load_feature_store(ws), ValidationError);
}

TEST_CASE("result files")
{
	test::TempDir dir("results");
	ExperimentResult r;
	r.config = {ContrastPhase::NC, parse_normalization("none"), ModelKind::Svm, SelectorKind::None};
	r.ok = true;
	r.auc_biopsy = 0.75;
	r.auc_nonbiopsy = 0.5;
	r.top_features = {"a"};
	write_results_jsonl(dir / "r.jsonl", {r, r});
	const auto back = read_results_jsonl(dir / "r.jsonl");
	REQUIRE(back.size() == 2);
	CHECK(back[1].auc_biopsy == 0.75);
	CHECK(file_hash(dir / "r.jsonl") == file_hash(dir / "r.jsonl"));
	CHECK(file_hash(dir / "r.jsonl").size() == 16);

	const SweepSummary s = summarize_sweep({r.config}, {r});
	write_summary_csv(dir / "summary.csv", s);
	write_top_configs_csv(dir / "top.csv", s);
	write_ranking_csv(dir / "rank.csv", rank_features({r}));
	const auto summary = csv::read(dir / "summary.csv");
	CHECK(summary.header.front() == "scope");
	CHECK(summary.rows.size() == 5);
	CHECK(csv::read(dir / "top.csv").rows.size() == 2);
	CHECK(test::slurp(dir / "rank.csv") == "feature,count\na,1\n");
	write_text(dir / "t.txt", "x\n");
	CHECK(read_text(dir / "t.txt") == "x\n");
}
