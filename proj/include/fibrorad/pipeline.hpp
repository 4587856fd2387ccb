#ifndef FIBRORAD_PIPELINE_HPP
#define FIBRORAD_PIPELINE_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fibrorad/common.hpp"
#include "fibrorad/csv.hpp"
#include "fibrorad/harness.hpp"
#include "fibrorad/normalize.hpp"
#include "fibrorad/phantom.hpp"
#include "fibrorad/radiomics.hpp"
#include "fibrorad/roi.hpp"
#include "fibrorad/tabular.hpp"
#include "fibrorad/volume.hpp"

// Feature extraction over whole cohorts and the on-disk workspace used by the CLI:
//   volumes/<id>_<phase>.mhd, volumes/<id>_mask.mhd, roi_manifest.csv, labels.csv,
//   features/<phase>_<norm>_<kind>.csv, results/...
namespace fibrorad
{
	/// Margin (mm) kept around the ROI bounding box before resampling, so interpolation and
	/// the context box never touch the crop border.
	constexpr double kCropMarginMm = 4.0;

	/// clip -> crop -> resample -> per-ROI voxels; then one feature vector per normalization.
	inline std::vector<FeatureVector> roi_features(const Volume& clipped, const SphereRoi& roi, const std::vector<NormalizationKind>& norms,
	                                               double target_spacing = 0.5)
	{
		const double h = roi.radius + kCropMarginMm;
		const Volume local = resample_trilinear(crop_physical(clipped, roi.center - Vec3{h, h, h}, roi.center + Vec3{h, h, h}), target_spacing);
		const RoiVoxels x = extract_roi(local, roi);
		std::vector<FeatureVector> out;
		out.reserve(norms.size());
		for (const auto& n : norms)
			out.push_back(extract_all(x, n));
		return out;
	}

	struct PatientInput
	{
		std::string id;
		int label = 0;
		int fstage = 0;
		std::vector<SphereRoi> rois;
	};

	inline std::string roi_id(const std::string& patient, RoiKind kind, std::size_t ordinal)
	{
		return patient + "-" + to_string(kind) + (ordinal ? "-" + std::to_string(ordinal + 1) : std::string());
	}

	struct ExtractOptions
	{
		std::vector<ContrastPhase> phases{ContrastPhase::NC, ContrastPhase::CE};
		std::vector<NormalizationKind> norms;
		double target_spacing = 0.5;
		unsigned jobs = 1;
	};

	/// Builds every (phase, normalization) cohort pair. `load(i, phase)` returns patient i's
	/// raw volume. Row order follows patient order, then ROI order, whatever `jobs` is.
	template<typename LoadFn>
	FeatureStore extract_store(const std::vector<PatientInput>& patients, const ExtractOptions& opt, LoadFn&& load)
	{
		const std::vector<NormalizationKind> norms =
		    opt.norms.empty() ? all_sweep_normalizations() : opt.norms;
		const auto schema = feature_schema();
		// per patient, phase: per ROI, norm
		std::vector<std::vector<std::vector<std::vector<FeatureVector>>>> feats(patients.size());
		parallel_for(patients.size(), opt.jobs, [&](std::size_t i) {
			feats[i].resize(opt.phases.size());
			for (std::size_t ph = 0; ph < opt.phases.size(); ++ph)
			{
				const Volume clipped = clip_hu(load(i, opt.phases[ph]), opt.phases[ph]);
				for (const auto& roi : patients[i].rois)
					feats[i][ph].push_back(roi_features(clipped, roi, norms, opt.target_spacing));
			}
		});

		FeatureStore store;
		for (std::size_t ph = 0; ph < opt.phases.size(); ++ph)
			for (std::size_t n = 0; n < norms.size(); ++n)
			{
				CohortPair pair;
				for (Cohort* c : {&pair.biopsy, &pair.nonbiopsy})
					c->features = schema;
				std::vector<std::vector<double>> rows_b, rows_nb;
				for (std::size_t i = 0; i < patients.size(); ++i)
				{
					std::map<RoiKind, std::size_t> ordinal;
					for (std::size_t r = 0; r < patients[i].rois.size(); ++r)
					{
						const RoiKind kind = patients[i].rois[r].kind;
						const FeatureVector& f = feats[i][ph][r][n];
						if (f.names != schema)
							fail("pipeline", "feature schema drifted");
						Cohort& c = kind == RoiKind::BiopsyBased ? pair.biopsy : pair.nonbiopsy;
						(kind == RoiKind::BiopsyBased ? rows_b : rows_nb).push_back(f.values);
						c.labels.push_back(patients[i].label);
						c.fstage.push_back(patients[i].fstage);
						c.patient_ids.push_back(patients[i].id);
						c.roi_ids.push_back(roi_id(patients[i].id, kind, ordinal[kind]++));
						c.roi_kinds.push_back(kind);
						c.synthetic.push_back(0);
					}
				}
				auto fill = [&](Cohort& c, const std::vector<std::vector<double>>& rows) {
					c.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(schema.size()));
					for (std::size_t r = 0; r < rows.size(); ++r)
						for (std::size_t j = 0; j < schema.size(); ++j)
							c.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
					c.validate();
				};
				fill(pair.biopsy, rows_b);
				fill(pair.nonbiopsy, rows_nb);
				store.put(opt.phases[ph], norms[n], std::move(pair));
			}
		return store;
	}

	inline std::vector<PatientInput> phantom_inputs(const PhantomCohort& cohort)
	{
		std::vector<PatientInput> out;
		for (const auto& p : cohort.patients)
			out.push_back({p.id, p.label, p.fstage, {p.biopsy, p.nonbiopsy}});
		return out;
	}

	/// In-memory extraction straight from a phantom cohort (volumes regenerated per patient).
	inline FeatureStore extract_phantom_store(const PhantomCohort& cohort, const ExtractOptions& opt)
	{
		return extract_store(phantom_inputs(cohort), opt, [&](std::size_t i, ContrastPhase ph) { return cohort.volume(i, ph).volume; });
	}

	/// Held-out split at patient level: the first part is the internal cohort, the rest external.
	inline std::pair<CohortPair, CohortPair> split_internal_external(const CohortPair& pair, std::uint64_t master_seed, double fraction = 0.8)
	{
		auto [internal, external] = split(pair.biopsy, {fraction, derive_seed(master_seed, 0x45585445524eULL)});
		std::set<std::string> ids(internal.patient_ids.begin(), internal.patient_ids.end());
		std::vector<std::size_t> in_rows, ex_rows;
		for (std::size_t r = 0; r < pair.nonbiopsy.rows(); ++r)
			(ids.count(pair.nonbiopsy.patient_ids[r]) ? in_rows : ex_rows).push_back(r);
		return {CohortPair{std::move(internal), pair.nonbiopsy.select_rows(in_rows)}, CohortPair{std::move(external), pair.nonbiopsy.select_rows(ex_rows)}};
	}

	/// Patient-level label shuffle applied identically to both ROI cohorts.
	inline CohortPair permute_labels(const CohortPair& pair, Rng& rng)
	{
		const Cohort both = concat(pair.biopsy, pair.nonbiopsy).with_labels_permuted(rng);
		std::vector<std::size_t> b(pair.biopsy.rows()), nb(pair.nonbiopsy.rows());
		std::iota(b.begin(), b.end(), std::size_t{0});
		std::iota(nb.begin(), nb.end(), pair.biopsy.rows());
		return {both.select_rows(b), both.select_rows(nb)};
	}

	inline FeatureStore internal_part(const FeatureStore& store, std::uint64_t master_seed)
	{
		FeatureStore out;
		for (const auto& [key, pair] : store.entries)
			out.entries[key] = split_internal_external(pair, master_seed).first;
		return out;
	}

	// ---- workspace files -------------------------------------------------------------

	/// Each location defaults to a fixed name under one root and can be pointed elsewhere.
	struct Workspace
	{
		std::filesystem::path volumes_dir;
		std::filesystem::path manifest_path;
		std::filesystem::path labels_path;
		std::filesystem::path features_dir;
		std::filesystem::path results_dir;

		static Workspace at(const std::filesystem::path& root)
		{
			return {root / "volumes", root / "roi_manifest.csv", root / "labels.csv", root / "features", root / "results"};
		}

		std::filesystem::path volume(const std::string& id, ContrastPhase p) const { return volumes_dir / (id + "_" + to_string(p) + ".mhd"); }
		std::filesystem::path mask(const std::string& id) const { return volumes_dir / (id + "_mask.mhd"); }
		std::filesystem::path feature_file(ContrastPhase p, const NormalizationKind& n, RoiKind k) const
		{
			return features_dir / (to_string(p) + "_" + to_string(n) + "_" + to_string(k) + ".csv");
		}
		std::filesystem::path result(const std::string& name) const { return results_dir / name; }
	};

	struct LabelRow
	{
		std::string patient_id;
		int fstage = 0;
		int label = 0;
	};

	inline void write_labels(const std::filesystem::path& path, const std::vector<LabelRow>& rows)
	{
		csv::Table t;
		t.header = {"patient_id", "fstage", "label"};
		for (const auto& r : rows)
			t.rows.push_back({r.patient_id, std::to_string(r.fstage), std::to_string(r.label)});
		csv::write(path, t);
	}

	inline std::vector<LabelRow> read_labels(const std::filesystem::path& path)
	{
		const auto t = csv::read(path);
		const auto id = t.column("patient_id"), fs = t.column("fstage"), lb = t.column("label");
		std::vector<LabelRow> out;
		std::set<std::string> seen;
		for (const auto& r : t.rows)
		{
			LabelRow row{r[id], static_cast<int>(csv::to_long(r[fs])), static_cast<int>(csv::to_long(r[lb]))};
			if (row.fstage < 0 || row.fstage > 4)
				invalid("pipeline", "fibrosis stage must lie in 0..4");
			if (row.label != (row.fstage >= 1 ? 1 : 0))
				invalid("pipeline", "label of '" + row.patient_id + "' disagrees with its stage");
			if (!seen.insert(row.patient_id).second)
				invalid("pipeline", "duplicate patient '" + row.patient_id + "'");
			out.push_back(row);
		}
		return out;
	}

	inline void write_mask(const LiverMask& m, const std::filesystem::path& path) { write_volume(m.to_volume(), path); }

	inline LiverMask read_mask(const std::filesystem::path& path) { return LiverMask::from_volume(read_volume(path)); }

	/// Writes volumes (per phase), masks, ROI manifest and labels for a phantom cohort.
	inline void write_phantom_workspace(const PhantomCohort& cohort, const Workspace& ws, const std::vector<ContrastPhase>& phases, unsigned jobs = 1)
	{
		std::filesystem::create_directories(ws.volumes_dir);
		parallel_for(cohort.patients.size(), jobs, [&](std::size_t i) {
			const auto& p = cohort.patients[i];
			for (std::size_t k = 0; k < phases.size(); ++k)
			{
				const Phantom ph = cohort.volume(i, phases[k]);
				write_volume(ph.volume, ws.volume(p.id, phases[k]));
				if (k == 0)
					write_mask(ph.mask, ws.mask(p.id));
			}
		});
		write_roi_manifest(ws.manifest_path, cohort.manifest());
		std::vector<LabelRow> labels;
		for (const auto& p : cohort.patients)
			labels.push_back({p.id, p.fstage, p.label});
		write_labels(ws.labels_path, labels);
	}

	/// Patients from labels.csv joined with their manifest ROIs, in labels order.
	inline std::vector<PatientInput> workspace_inputs(const Workspace& ws)
	{
		const auto labels = read_labels(ws.labels_path);
		const auto manifest = read_roi_manifest(ws.manifest_path);
		std::vector<PatientInput> out;
		std::map<std::string, std::size_t> pos;
		for (const auto& l : labels)
		{
			pos[l.patient_id] = out.size();
			out.push_back({l.patient_id, l.label, l.fstage, {}});
		}
		for (const auto& e : manifest)
		{
			const auto it = pos.find(e.patient_id);
			if (it == pos.end())
				invalid("pipeline", "manifest patient '" + e.patient_id + "' missing from labels");
			out[it->second].rois.push_back(e.roi);
		}
		for (const auto& p : out)
		{
			bool b = false, nb = false;
			for (const auto& r : p.rois)
				(r.kind == RoiKind::BiopsyBased ? b : nb) = true;
			if (!b || !nb)
				invalid("pipeline", "patient '" + p.id + "' needs one biopsy-based and one non-biopsy ROI");
		}
		return out;
	}

	inline void extract_workspace(const Workspace& ws, const ExtractOptions& opt)
	{
		const auto inputs = workspace_inputs(ws);
		for (const auto& p : inputs)
			for (ContrastPhase ph : opt.phases)
				if (!std::filesystem::exists(ws.volume(p.id, ph)))
					invalid("pipeline", "missing volume '" + ws.volume(p.id, ph).string() + "'");
		const FeatureStore store = extract_store(inputs, opt, [&](std::size_t i, ContrastPhase ph) { return read_volume(ws.volume(inputs[i].id, ph)); });
		for (const auto& [key, pair] : store.entries)
		{
			const ContrastPhase ph = parse_phase(key.first);
			const NormalizationKind n = parse_normalization(key.second);
			write_cohort_csv(ws.feature_file(ph, n, RoiKind::BiopsyBased), pair.biopsy);
			write_cohort_csv(ws.feature_file(ph, n, RoiKind::NonBiopsy), pair.nonbiopsy);
		}
	}

	/// Loads every (phase, normalization) pair present under features/.
	inline FeatureStore load_feature_store(const Workspace& ws)
	{
		FeatureStore store;
		for (ContrastPhase ph : {ContrastPhase::NC, ContrastPhase::CE})
			for (const auto& n : sweep_normalizations())
			{
				const auto b = ws.feature_file(ph, n, RoiKind::BiopsyBased), nb = ws.feature_file(ph, n, RoiKind::NonBiopsy);
				if (std::filesystem::exists(b) != std::filesystem::exists(nb))
					invalid("pipeline", "feature files for " + to_string(ph) + "/" + to_string(n) + " are incomplete");
				if (std::filesystem::exists(b))
					store.put(ph, n, {read_cohort_csv(b), read_cohort_csv(nb)});
			}
		if (store.entries.empty())
			invalid("pipeline", "no feature CSVs under '" + ws.features_dir.string() + "'");
		return store;
	}

	// ---- result files ------------------------------------------------------------------

	inline std::string file_hash(const std::filesystem::path& p)
	{
		std::ifstream in(p, std::ios::binary);
		if (!in)
			invalid("pipeline", "cannot open '" + p.string() + "'");
		std::ostringstream ss;
		ss << in.rdbuf();
		return hex64(fnv1a(ss.str()));
	}

	inline void write_text(const std::filesystem::path& path, const std::string& text)
	{
		if (path.has_parent_path())
			std::filesystem::create_directories(path.parent_path());
		std::ofstream out(path, std::ios::binary);
		out << text;
		if (!out)
			fail("pipeline", "cannot write '" + path.string() + "'");
	}

	inline std::string read_text(const std::filesystem::path& path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			invalid("pipeline", "cannot open '" + path.string() + "'");
		std::ostringstream ss;
		ss << in.rdbuf();
		return ss.str();
	}

	inline void write_results_jsonl(const std::filesystem::path& path, const std::vector<ExperimentResult>& results)
	{
		std::string text;
		for (const auto& r : results)
			text += to_json(r).dump() + "\n";
		write_text(path, text);
	}

	inline std::vector<ExperimentResult> read_results_jsonl(const std::filesystem::path& path)
	{
		std::istringstream in(read_text(path));
		std::vector<ExperimentResult> out;
		std::string line;
		while (std::getline(in, line))
		{
			if (line.empty())
				continue;
			try
			{
				out.push_back(result_from_json(nlohmann::json::parse(line)));
			}
			catch (const nlohmann::json::parse_error& e)
			{
				invalid("pipeline", std::string("malformed JSONL: ") + e.what());
			}
		}
		return out;
	}

	namespace detail
	{
		inline csv::Row metric_cells(const std::optional<MetricSummary>& m)
		{
			if (!m)
				return {"", "", ""};
			return {format_double(m->mean), format_double(m->ci_low), format_double(m->ci_high)};
		}
	}

	/// One row per configuration, then one per setting value.
	inline void write_summary_csv(const std::filesystem::path& path, const SweepSummary& s)
	{
		csv::Table t;
		t.header = {"scope", "name", "biopsy_mean", "biopsy_ci_low", "biopsy_ci_high", "nonbiopsy_mean", "nonbiopsy_ci_low", "nonbiopsy_ci_high", "n", "failed"};
		for (const auto& c : s.configs)
		{
			csv::Row row{"config", c.config.label()};
			for (const auto& cell : detail::metric_cells(c.biopsy))
				row.push_back(cell);
			for (const auto& cell : detail::metric_cells(c.nonbiopsy))
				row.push_back(cell);
			row.push_back(std::to_string(c.succeeded));
			row.push_back(std::to_string(c.failed));
			t.rows.push_back(std::move(row));
		}
		for (const auto& st : s.settings)
		{
			csv::Row row{st.axis, st.value};
			for (const auto& cell : detail::metric_cells(st.biopsy))
				row.push_back(cell);
			for (const auto& cell : detail::metric_cells(st.nonbiopsy))
				row.push_back(cell);
			row.push_back(std::to_string(st.configs));
			row.push_back("");
			t.rows.push_back(std::move(row));
		}
		csv::write(path, t);
	}

	inline void write_top_configs_csv(const std::filesystem::path& path, const SweepSummary& s)
	{
		csv::Table t;
		t.header = {"roi_kind", "rank", "normalization", "selector", "model", "contrast", "mean", "ci_low", "ci_high"};
		for (int kind = 0; kind < 2; ++kind)
		{
			const auto& idx = kind == 0 ? s.top_biopsy : s.top_nonbiopsy;
			for (std::size_t r = 0; r < idx.size(); ++r)
			{
				const auto& c = s.configs[idx[r]];
				const auto& m = kind == 0 ? c.biopsy : c.nonbiopsy;
				t.rows.push_back({kind == 0 ? "biopsy" : "nonbiopsy", std::to_string(r + 1), to_string(c.config.normalization), to_string(c.config.selector),
				                  to_string(c.config.model), to_string(c.config.contrast), format_double(m->mean), format_double(m->ci_low),
				                  format_double(m->ci_high)});
			}
		}
		csv::write(path, t);
	}

	inline void write_ranking_csv(const std::filesystem::path& path, const std::vector<std::pair<std::string, int>>& ranking)
	{
		csv::Table t;
		t.header = {"feature", "count"};
		for (const auto& [f, n] : ranking)
			t.rows.push_back({f, std::to_string(n)});
		csv::write(path, t);
	}

	inline csv::Row metric_row(const std::string& a, const std::string& b, const MetricSummary& m)
	{
		return {a, b, format_double(m.mean), format_double(m.ci_low), format_double(m.ci_high), std::to_string(m.n)};
	}

	inline const csv::Row& metric_header()
	{
		static const csv::Row h{"model", "metric", "mean", "ci_low", "ci_high", "n"};
		return h;
	}
}

#endif
