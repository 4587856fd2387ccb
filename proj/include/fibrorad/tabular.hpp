#ifndef FIBRORAD_TABULAR_HPP
#define FIBRORAD_TABULAR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fibrorad/common.hpp"
#include "fibrorad/csv.hpp"
#include "fibrorad/roi.hpp"

namespace fibrorad
{
	/// Labelled feature matrix, one row per ROI. label = 1 for any fibrosis stage >= 1.
	struct Cohort
	{
		std::vector<std::string> features;
		Eigen::MatrixXd X;
		std::vector<int> labels;
		std::vector<int> fstage;
		std::vector<std::string> patient_ids;
		std::vector<std::string> roi_ids;
		std::vector<RoiKind> roi_kinds;
		std::vector<std::uint8_t> synthetic;

		std::size_t rows() const noexcept { return labels.size(); }
		std::size_t cols() const noexcept { return features.size(); }

		void validate() const
		{
			const auto n = labels.size();
			if (static_cast<std::size_t>(X.rows()) != n || static_cast<std::size_t>(X.cols()) != features.size() || fstage.size() != n ||
			    patient_ids.size() != n || roi_ids.size() != n || roi_kinds.size() != n || synthetic.size() != n)
				invalid("tabular", "cohort fields are not aligned");
			for (std::size_t r = 0; r < n; ++r)
			{
				if (labels[r] != 0 && labels[r] != 1)
					invalid("tabular", "labels must be 0 or 1");
				if (!synthetic[r] && labels[r] != (fstage[r] >= 1 ? 1 : 0))
					invalid("tabular", "label does not match fibrosis stage");
			}
		}

		std::size_t count(int label) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label)); }

		Eigen::VectorXd label_vector() const
		{
			Eigen::VectorXd y(static_cast<Eigen::Index>(rows()));
			for (std::size_t r = 0; r < rows(); ++r)
				y[static_cast<Eigen::Index>(r)] = labels[r];
			return y;
		}

		Cohort select_rows(const std::vector<std::size_t>& idx) const
		{
			Cohort out;
			out.features = features;
			out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
			for (std::size_t i = 0; i < idx.size(); ++i)
			{
				const auto r = idx[i];
				out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(r));
				out.labels.push_back(labels[r]);
				out.fstage.push_back(fstage[r]);
				out.patient_ids.push_back(patient_ids[r]);
				out.roi_ids.push_back(roi_ids[r]);
				out.roi_kinds.push_back(roi_kinds[r]);
				out.synthetic.push_back(synthetic[r]);
			}
			return out;
		}

		Cohort select_columns(const std::vector<std::size_t>& cols_idx) const
		{
			Cohort out = *this;
			out.features.clear();
			out.X.resize(X.rows(), static_cast<Eigen::Index>(cols_idx.size()));
			for (std::size_t c = 0; c < cols_idx.size(); ++c)
			{
				out.features.push_back(features[cols_idx[c]]);
				out.X.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(cols_idx[c]));
			}
			return out;
		}

		/// Restricts to the named columns, in the given order.
		Cohort select_features(const std::vector<std::string>& names) const
		{
			std::map<std::string, std::size_t> pos;
			for (std::size_t c = 0; c < features.size(); ++c)
				pos.emplace(features[c], c);
			std::vector<std::size_t> idx;
			for (const auto& n : names)
			{
				auto it = pos.find(n);
				if (it == pos.end())
					invalid("tabular", "missing column '" + n + "'");
				idx.push_back(it->second);
			}
			return select_columns(idx);
		}

		Cohort with_labels_permuted(Rng& rng) const;
	};

	/// Appends rows of b to a; schemas must match.
	inline Cohort concat(const Cohort& a, const Cohort& b)
	{
		if (a.features != b.features)
			invalid("tabular", "cannot concatenate cohorts with different schemas");
		Cohort out = a;
		out.X.resize(a.X.rows() + b.X.rows(), a.X.cols());
		out.X << a.X, b.X;
		out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
		out.fstage.insert(out.fstage.end(), b.fstage.begin(), b.fstage.end());
		out.patient_ids.insert(out.patient_ids.end(), b.patient_ids.begin(), b.patient_ids.end());
		out.roi_ids.insert(out.roi_ids.end(), b.roi_ids.begin(), b.roi_ids.end());
		out.roi_kinds.insert(out.roi_kinds.end(), b.roi_kinds.begin(), b.roi_kinds.end());
		out.synthetic.insert(out.synthetic.end(), b.synthetic.begin(), b.synthetic.end());
		return out;
	}

	/// Patient-level label permutation (all rows of a patient keep one shared label).
	/// Stages follow the labels so the cohort stays self-consistent.
	inline Cohort Cohort::with_labels_permuted(Rng& rng) const
	{
		std::vector<std::string> ids;
		std::map<std::string, std::pair<int, int>> by_patient;
		for (std::size_t r = 0; r < rows(); ++r)
			if (by_patient.emplace(patient_ids[r], std::pair{labels[r], fstage[r]}).second)
				ids.push_back(patient_ids[r]);
		std::vector<std::pair<int, int>> pool;
		for (const auto& id : ids)
			pool.push_back(by_patient[id]);
		std::shuffle(pool.begin(), pool.end(), rng);
		std::map<std::string, std::pair<int, int>> assigned;
		for (std::size_t i = 0; i < ids.size(); ++i)
			assigned[ids[i]] = pool[i];
		Cohort out = *this;
		for (std::size_t r = 0; r < rows(); ++r)
		{
			out.labels[r] = assigned[patient_ids[r]].first;
			out.fstage[r] = assigned[patient_ids[r]].second;
		}
		return out;
	}

	/// Patients of a cohort with their (shared) label, in first-appearance order.
	inline std::vector<std::pair<std::string, int>> patients_of(const Cohort& c)
	{
		std::vector<std::pair<std::string, int>> out;
		std::map<std::string, int> seen;
		for (std::size_t r = 0; r < c.rows(); ++r)
		{
			auto [it, fresh] = seen.emplace(c.patient_ids[r], c.labels[r]);
			if (fresh)
				out.emplace_back(c.patient_ids[r], c.labels[r]);
			else if (it->second != c.labels[r])
				invalid("tabular", "patient '" + c.patient_ids[r] + "' has rows with different labels");
		}
		return out;
	}

	inline Cohort rows_for_patients(const Cohort& c, const std::set<std::string>& ids)
	{
		std::vector<std::size_t> idx;
		for (std::size_t r = 0; r < c.rows(); ++r)
			if (ids.count(c.patient_ids[r]))
				idx.push_back(r);
		return c.select_rows(idx);
	}

	struct SplitSpec
	{
		double fraction = 0.8;
		std::uint64_t seed = 0;
	};

	/// Stratified, patient-grouped split. Each class contributes round(fraction * n_class)
	/// patients to the first part (kept within [1, n_class - 1]); all rows of a patient
	/// stay on one side.
	inline std::pair<Cohort, Cohort> split(const Cohort& c, const SplitSpec& spec)
	{
		if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
			invalid("tabular", "split fraction must lie in (0, 1)");
		auto patients = patients_of(c);
		std::sort(patients.begin(), patients.end());
		Rng rng(spec.seed);
		std::set<std::string> first;
		for (int label : {0, 1})
		{
			std::vector<std::string> members;
			for (const auto& [id, l] : patients)
				if (l == label)
					members.push_back(id);
			if (members.size() < 2)
				invalid("tabular", "class " + std::to_string(label) + " has fewer than 2 patients");
			std::shuffle(members.begin(), members.end(), rng);
			const long n = static_cast<long>(members.size());
			const long take = std::clamp<long>(std::lround(spec.fraction * static_cast<double>(n)), 1, n - 1);
			first.insert(members.begin(), members.begin() + take);
		}
		std::vector<std::size_t> a, b;
		for (std::size_t r = 0; r < c.rows(); ++r)
			(first.count(c.patient_ids[r]) ? a : b).push_back(r);
		return {c.select_rows(a), c.select_rows(b)};
	}

	inline double pearson_abs(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
	{
		const Eigen::VectorXd da = a.array() - a.mean();
		const Eigen::VectorXd db = b.array() - b.mean();
		const double na = da.norm(), nb = db.norm();
		if (!(na > 0.0) || !(nb > 0.0))
			return 0.0;
		return std::abs(da.dot(db) / (na * nb));
	}

	/// Scans columns in schema order and drops a column when its |Pearson r| with an
	/// already-kept column exceeds the threshold. Constant columns count as uncorrelated.
	inline Cohort drop_correlated(const Cohort& c, double threshold = 0.95)
	{
		if (c.rows() < 2)
			invalid("tabular", "correlation filter needs >= 2 rows");
		Eigen::MatrixXd centered = c.X.rowwise() - c.X.colwise().mean();
		Eigen::VectorXd norms = centered.colwise().norm();
		std::vector<std::size_t> kept;
		for (std::size_t j = 0; j < c.cols(); ++j)
		{
			bool redundant = false;
			const auto jj = static_cast<Eigen::Index>(j);
			if (norms[jj] > 0.0)
				for (std::size_t k : kept)
				{
					const auto kk = static_cast<Eigen::Index>(k);
					if (!(norms[kk] > 0.0))
						continue;
					const double r = std::abs(centered.col(jj).dot(centered.col(kk)) / (norms[jj] * norms[kk]));
					if (r > threshold)
					{
						redundant = true;
						break;
					}
				}
			if (!redundant)
				kept.push_back(j);
		}
		return c.select_columns(kept);
	}

	/// Drops columns whose population variance (raw values) is strictly below threshold.
	inline Cohort drop_low_variance(const Cohort& c, double threshold = 0.05)
	{
		if (c.rows() < 2)
			invalid("tabular", "variance filter needs >= 2 rows");
		std::vector<std::size_t> kept;
		for (std::size_t j = 0; j < c.cols(); ++j)
		{
			const auto col = c.X.col(static_cast<Eigen::Index>(j));
			const double mean = col.mean();
			const double var = (col.array() - mean).square().sum() / static_cast<double>(c.rows());
			if (!(var < threshold))
				kept.push_back(j);
		}
		return c.select_columns(kept);
	}

	/// Maps each column onto [0, 1] by its own min and max. Constant columns map to 0.
	inline Cohort minmax_scale(const Cohort& c)
	{
		Cohort out = c;
		if (out.X.rows() == 0)
			return out;
		for (Eigen::Index j = 0; j < out.X.cols(); ++j)
		{
			auto col = out.X.col(j);
			const double lo = col.minCoeff(), hi = col.maxCoeff();
			if (hi > lo)
				col = ((col.array() - lo) / (hi - lo)).matrix();
			else
				col.setZero();
		}
		return out;
	}

	/// The development-side hygiene chain: correlation filter, variance filter, min-max scaling.
	inline Cohort hygiene(const Cohort& c, double corr_threshold = 0.95, double var_threshold = 0.05)
	{
		return minmax_scale(drop_low_variance(drop_correlated(c, corr_threshold), var_threshold));
	}

	/// Restricts `test` to exactly dev's columns, in dev's order.
	inline Cohort align_features(const Cohort& dev, const Cohort& test) { return test.select_features(dev.features); }

	/// SMOTE oversampling of the minority class until both classes have equal counts.
	/// Synthetic rows x_i + u (x_nn - x_i) use one of the k nearest minority neighbours of a
	/// uniformly drawn minority row (k capped at minority size - 1).
	inline Cohort smote(const Cohort& c, Rng& rng, int k = 5)
	{
		const std::size_t n0 = c.count(0), n1 = c.count(1);
		if (n0 == n1)
			return c;
		const int minority = n0 < n1 ? 0 : 1;
		std::vector<std::size_t> rows;
		for (std::size_t r = 0; r < c.rows(); ++r)
			if (c.labels[r] == minority)
				rows.push_back(r);
		if (rows.size() < 2)
			invalid("tabular", "SMOTE needs at least 2 minority rows");
		const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, k)), rows.size() - 1);

		// Nearest minority neighbours of every minority row; ties broken by row order.
		std::vector<std::vector<std::size_t>> neighbours(rows.size());
		for (std::size_t a = 0; a < rows.size(); ++a)
		{
			std::vector<std::pair<double, std::size_t>> d;
			for (std::size_t b = 0; b < rows.size(); ++b)
				if (b != a)
					d.emplace_back((c.X.row(static_cast<Eigen::Index>(rows[a])) - c.X.row(static_cast<Eigen::Index>(rows[b]))).squaredNorm(), b);
			std::partial_sort(d.begin(), d.begin() + static_cast<long>(kk), d.end());
			for (std::size_t t = 0; t < kk; ++t)
				neighbours[a].push_back(d[t].second);
		}

		const std::size_t needed = std::max(n0, n1) - rows.size();
		Cohort extra;
		extra.features = c.features;
		extra.X.resize(static_cast<Eigen::Index>(needed), c.X.cols());
		std::uniform_int_distribution<std::size_t> pick_row(0, rows.size() - 1);
		std::uniform_int_distribution<std::size_t> pick_nb(0, kk - 1);
		std::uniform_real_distribution<double> unit(0.0, 1.0);
		for (std::size_t s = 0; s < needed; ++s)
		{
			const std::size_t a = pick_row(rng);
			const std::size_t b = neighbours[a][pick_nb(rng)];
			const double u = unit(rng);
			const auto base = c.X.row(static_cast<Eigen::Index>(rows[a]));
			const auto other = c.X.row(static_cast<Eigen::Index>(rows[b]));
			extra.X.row(static_cast<Eigen::Index>(s)) = base + u * (other - base);
			extra.labels.push_back(minority);
			extra.fstage.push_back(c.fstage[rows[a]]);
			extra.patient_ids.push_back("synthetic");
			extra.roi_ids.push_back("smote-" + std::to_string(s));
			extra.roi_kinds.push_back(c.roi_kinds[rows[a]]);
			extra.synthetic.push_back(1);
		}
		return concat(c, extra);
	}

	// ---- cohort CSV ------------------------------------------------------------------

	inline void write_cohort_csv(const std::filesystem::path& path, const Cohort& c)
	{
		c.validate();
		csv::Table t;
		t.header = {"roi_id", "patient_id", "roi_kind", "fstage", "label"};
		t.header.insert(t.header.end(), c.features.begin(), c.features.end());
		for (std::size_t r = 0; r < c.rows(); ++r)
		{
			csv::Row row{c.roi_ids[r], c.patient_ids[r], to_string(c.roi_kinds[r]), std::to_string(c.fstage[r]), std::to_string(c.labels[r])};
			for (Eigen::Index j = 0; j < c.X.cols(); ++j)
				row.push_back(format_double(c.X(static_cast<Eigen::Index>(r), j)));
			t.rows.push_back(std::move(row));
		}
		csv::write(path, t);
	}

	inline Cohort read_cohort_csv(const std::filesystem::path& path)
	{
		const auto t = csv::read(path);
		static const std::vector<std::string> fixed{"roi_id", "patient_id", "roi_kind", "fstage", "label"};
		if (t.header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), t.header.begin()))
			invalid("tabular", "cohort CSV header must start with roi_id,patient_id,roi_kind,fstage,label");
		Cohort c;
		c.features.assign(t.header.begin() + 5, t.header.end());
		c.X.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(c.features.size()));
		for (std::size_t r = 0; r < t.rows.size(); ++r)
		{
			const auto& row = t.rows[r];
			c.roi_ids.push_back(row[0]);
			c.patient_ids.push_back(row[1]);
			c.roi_kinds.push_back(parse_roi_kind(row[2]));
			c.fstage.push_back(static_cast<int>(csv::to_long(row[3])));
			c.labels.push_back(static_cast<int>(csv::to_long(row[4])));
			c.synthetic.push_back(0);
			for (std::size_t j = 0; j < c.features.size(); ++j)
				c.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = csv::to_double(row[5 + j]);
		}
		c.validate();
		return c;
	}
}

#endif
