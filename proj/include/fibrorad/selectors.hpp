#ifndef FIBRORAD_SELECTORS_HPP
#define FIBRORAD_SELECTORS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fibrorad/common.hpp"
#include "fibrorad/learners/forest.hpp"
#include "fibrorad/tabular.hpp"

namespace fibrorad
{
	enum class SelectorKind
	{
		None,
		Pca,
		Boruta,
		Lasso
	};

	inline constexpr std::array<SelectorKind, 4> kAllSelectors{SelectorKind::None, SelectorKind::Pca, SelectorKind::Boruta, SelectorKind::Lasso};

	inline std::string to_string(SelectorKind k)
	{
		constexpr const char* names[] = {"none", "pca", "boruta", "lasso"};
		return names[static_cast<int>(k)];
	}

	inline SelectorKind parse_selector(std::string_view s)
	{
		for (SelectorKind k : kAllSelectors)
			if (to_string(k) == s)
				return k;
		invalid("selectors", "unknown selector '" + std::string(s) + "'");
	}

	/// Retained columns (in original order) or, for PCA, a projection onto orthonormal components.
	struct Selection
	{
		SelectorKind kind = SelectorKind::None;
		std::vector<std::string> input_schema;
		std::vector<std::size_t> retained;
		Eigen::VectorXd mean;
		Eigen::MatrixXd components; ///< p x k, orthonormal columns
		Eigen::VectorXd eigenvalues; ///< all p, descending (PCA only)
		std::vector<std::string> output_names;
		bool fallback = false;
		int confirmed = 0; ///< features passing the selector's own test before any fallback

		bool is_projection() const noexcept { return kind == SelectorKind::Pca; }
	};

	namespace detail
	{
		inline Selection retained_selection(SelectorKind kind, const std::vector<std::string>& schema, std::vector<std::size_t> keep)
		{
			std::sort(keep.begin(), keep.end());
			Selection s;
			s.kind = kind;
			s.input_schema = schema;
			s.retained = std::move(keep);
			for (std::size_t c : s.retained)
				s.output_names.push_back(schema[c]);
			return s;
		}

		/// Indices of the k largest scores; ties keep the lower index.
		inline std::vector<std::size_t> top_k(const Eigen::VectorXd& score, std::size_t k)
		{
			std::vector<std::size_t> idx(static_cast<std::size_t>(score.size()));
			std::iota(idx.begin(), idx.end(), 0);
			std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
				return score[static_cast<Eigen::Index>(a)] > score[static_cast<Eigen::Index>(b)];
			});
			idx.resize(std::min(k, idx.size()));
			return idx;
		}

		inline void check_xy(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& schema)
		{
			if (X.rows() != y.size())
				invalid("selectors", "X/y row mismatch");
			if (static_cast<std::size_t>(X.cols()) != schema.size())
				invalid("selectors", "schema length differs from column count");
		}

		/// log of the Binomial(n, 0.5) pmf.
		inline double log_binom_half(int n, int k)
		{
			return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0);
		}
	}

	constexpr std::size_t kFallbackCount = 5;

	/// Two-sided exact binomial p-value of `hits` successes in n fair trials.
	inline double binomial_two_sided(int hits, int n)
	{
		double upper = 0.0, lower = 0.0;
		for (int k = hits; k <= n; ++k)
			upper += std::exp(detail::log_binom_half(n, k));
		for (int k = 0; k <= hits; ++k)
			lower += std::exp(detail::log_binom_half(n, k));
		return std::min(1.0, 2.0 * std::min(upper, lower));
	}

	struct BorutaOptions
	{
		int max_iter = 100;
		double alpha = 0.05;
		int trees = 100;
		unsigned jobs = 1;
	};

	/// Shadow-feature selection. Each round appends a per-column row permutation of X and
	/// counts a hit for every real feature whose forest importance beats the best shadow.
	/// Features whose hit count is significantly above chance (two-sided binomial test,
	/// Bonferroni over p) are confirmed.
	inline Selection select_boruta(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& schema, std::uint64_t seed,
	                               const BorutaOptions& opt = {})
	{
		detail::check_xy(X, y, schema);
		if (X.cols() < 2)
			invalid("selectors", "boruta needs at least 2 features");
		const Eigen::Index n = X.rows(), p = X.cols();
		Eigen::MatrixXd both(n, 2 * p);
		both.leftCols(p) = X;
		std::vector<int> hits(static_cast<std::size_t>(p), 0);
		Eigen::VectorXd importance_sum = Eigen::VectorXd::Zero(p);
		std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
		for (int it = 0; it < opt.max_iter; ++it)
		{
			Rng rng(derive_seed(seed, 0x424f52ULL, it));
			for (Eigen::Index c = 0; c < p; ++c)
			{
				std::iota(perm.begin(), perm.end(), Eigen::Index{0});
				std::shuffle(perm.begin(), perm.end(), rng);
				for (Eigen::Index r = 0; r < n; ++r)
					both(r, p + c) = X(perm[static_cast<std::size_t>(r)], c);
			}
			const auto f = forest::fit_forest(both, y, {opt.trees, 0, true}, derive_seed(seed, 0x5246ULL, it), opt.jobs);
			const double shadow_max = f.importance.tail(p).maxCoeff();
			for (Eigen::Index c = 0; c < p; ++c)
			{
				importance_sum[c] += f.importance[c];
				if (f.importance[c] > shadow_max)
					++hits[static_cast<std::size_t>(c)];
			}
		}
		std::vector<std::size_t> confirmed;
		const double level = opt.alpha / static_cast<double>(p);
		for (Eigen::Index c = 0; c < p; ++c)
		{
			const int h = hits[static_cast<std::size_t>(c)];
			if (2 * h > opt.max_iter && binomial_two_sided(h, opt.max_iter) < level)
				confirmed.push_back(static_cast<std::size_t>(c));
		}
		const int n_confirmed = static_cast<int>(confirmed.size());
		const bool fallback = confirmed.empty();
		if (fallback)
			confirmed = detail::top_k(importance_sum, kFallbackCount);
		Selection s = detail::retained_selection(SelectorKind::Boruta, schema, confirmed);
		s.fallback = fallback;
		s.confirmed = n_confirmed;
		return s;
	}

	// ---- LASSO --------------------------------------------------------------------

	struct LassoFit
	{
		Eigen::VectorXd w;
		double b = 0.0;
		int sweeps = 0;
		std::vector<double> objective; ///< after each sweep
	};

	/// (1/2n)|y - Xw - b|^2 + lambda |w|_1.
	inline double lasso_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b, double lambda)
	{
		const double n = static_cast<double>(X.rows());
		return (y - X * w - Eigen::VectorXd::Constant(X.rows(), b)).squaredNorm() / (2.0 * n) + lambda * w.lpNorm<1>();
	}

	inline double soft_threshold(double z, double t) noexcept { return z > t ? z - t : (z < -t ? z + t : 0.0); }

	/// Cyclic coordinate descent with an unpenalised intercept; stops when no weight moves
	/// by more than tol in a sweep.
	inline LassoFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const Eigen::VectorXd* warm = nullptr, double tol = 1e-7,
	                          int max_sweeps = 10000, bool record = false)
	{
		const Eigen::Index n = X.rows(), p = X.cols();
		const double nd = static_cast<double>(n);
		const Eigen::RowVectorXd xm = X.colwise().mean();
		const double ym = y.mean();
		const Eigen::MatrixXd Xc = X.rowwise() - xm;
		const Eigen::VectorXd yc = y.array() - ym;
		const Eigen::VectorXd sq = Xc.colwise().squaredNorm().transpose() / nd;
		LassoFit fit;
		fit.w = warm ? *warm : Eigen::VectorXd::Zero(p);
		Eigen::VectorXd r = yc - Xc * fit.w;
		for (int s = 0; s < max_sweeps; ++s)
		{
			double max_step = 0.0;
			for (Eigen::Index j = 0; j < p; ++j)
			{
				if (!(sq[j] > 0.0))
				{
					fit.w[j] = 0.0;
					continue;
				}
				const double old = fit.w[j];
				const double rho = Xc.col(j).dot(r) / nd + sq[j] * old;
				const double nw = soft_threshold(rho, lambda) / sq[j];
				if (nw != old)
				{
					r -= (nw - old) * Xc.col(j);
					fit.w[j] = nw;
					max_step = std::max(max_step, std::abs(nw - old));
				}
			}
			fit.sweeps = s + 1;
			if (record)
				fit.objective.push_back(lasso_objective(X, y, fit.w, ym - xm.dot(fit.w), lambda));
			if (max_step < tol)
				break;
		}
		fit.b = ym - xm.dot(fit.w);
		return fit;
	}

	/// Smallest lambda at which every weight is zero.
	inline double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y)
	{
		const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
		const Eigen::VectorXd yc = y.array() - y.mean();
		return (Xc.transpose() * yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
	}

	struct LassoOptions
	{
		int grid = 20;
		double ratio = 1e-3;
		int folds = 5;
		std::optional<double> lambda; ///< bypasses cross-validation
	};

	struct LassoSelection
	{
		Selection selection;
		double lambda = 0.0;
		Eigen::VectorXd weights;
	};

	inline LassoSelection select_lasso_detailed(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& schema, std::uint64_t seed,
	                                            const LassoOptions& opt = {})
	{
		detail::check_xy(X, y, schema);
		if (X.rows() < 2 || X.cols() < 1)
			invalid("selectors", "lasso needs at least 2 rows and 1 feature");
		const double lmax = lasso_lambda_max(X, y);
		double lambda = lmax;
		if (opt.lambda)
			lambda = *opt.lambda;
		else if (lmax > 0.0)
		{
			std::vector<double> grid(static_cast<std::size_t>(opt.grid));
			for (int g = 0; g < opt.grid; ++g)
				grid[static_cast<std::size_t>(g)] = lmax * std::pow(opt.ratio, static_cast<double>(g) / (opt.grid - 1));
			const Eigen::Index n = X.rows();
			const int folds = static_cast<int>(std::min<Eigen::Index>(opt.folds, n));
			std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
			std::iota(order.begin(), order.end(), Eigen::Index{0});
			Rng rng(derive_seed(seed, 0x4c4153ULL));
			std::shuffle(order.begin(), order.end(), rng);
			std::vector<double> err(grid.size(), 0.0);
			for (int f = 0; f < folds; ++f)
			{
				std::vector<Eigen::Index> tr, te;
				for (std::size_t i = 0; i < order.size(); ++i)
					(static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? te : tr).push_back(order[i]);
				const Eigen::MatrixXd Xtr = X(tr, Eigen::all), Xte = X(te, Eigen::all);
				const Eigen::VectorXd ytr = y(tr), yte = y(te);
				Eigen::VectorXd warm = Eigen::VectorXd::Zero(X.cols());
				for (std::size_t g = 0; g < grid.size(); ++g)
				{
					const LassoFit fit = lasso_fit(Xtr, ytr, grid[g], &warm);
					warm = fit.w;
					err[g] += (yte - Xte * fit.w - Eigen::VectorXd::Constant(yte.size(), fit.b)).squaredNorm();
				}
			}
			lambda = grid[static_cast<std::size_t>(std::min_element(err.begin(), err.end()) - err.begin())];
		}
		const LassoFit fit = lasso_fit(X, y, lambda);
		std::vector<std::size_t> keep;
		for (Eigen::Index j = 0; j < fit.w.size(); ++j)
			if (fit.w[j] != 0.0)
				keep.push_back(static_cast<std::size_t>(j));
		const int n_kept = static_cast<int>(keep.size());
		const bool fallback = keep.empty();
		if (fallback)
		{
			Eigen::VectorXd corr(X.cols());
			for (Eigen::Index j = 0; j < X.cols(); ++j)
				corr[j] = pearson_abs(X.col(j), y);
			keep = detail::top_k(corr, kFallbackCount);
		}
		LassoSelection out{detail::retained_selection(SelectorKind::Lasso, schema, keep), lambda, fit.w};
		out.selection.fallback = fallback;
		out.selection.confirmed = n_kept;
		return out;
	}

	inline Selection select_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& schema, std::uint64_t seed,
	                              const LassoOptions& opt = {})
	{
		return select_lasso_detailed(X, y, schema, seed, opt).selection;
	}

	// ---- PCA ----------------------------------------------------------------------

	/// Column-centred PCA keeping the fewest components whose explained variance reaches the target.
	/// Component signs are fixed so the largest-magnitude loading is positive.
	inline Selection select_pca(const Eigen::MatrixXd& X, const std::vector<std::string>& schema, double variance_target = 0.95)
	{
		if (static_cast<std::size_t>(X.cols()) != schema.size())
			invalid("selectors", "schema length differs from column count");
		if (X.rows() < 2 || X.cols() < 1)
			invalid("selectors", "pca needs at least 2 rows and 1 feature");
		Selection s;
		s.kind = SelectorKind::Pca;
		s.input_schema = schema;
		s.mean = X.colwise().mean().transpose();
		const Eigen::MatrixXd Xc = X.rowwise() - s.mean.transpose();
		const Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(X.rows() - 1);
		Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
		const Eigen::Index p = X.cols();
		// Eigen returns ascending order.
		s.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
		const Eigen::MatrixXd vecs = es.eigenvectors().rowwise().reverse();
		const double total = s.eigenvalues.sum();
		Eigen::Index k = 1;
		if (total > 0.0)
		{
			double acc = 0.0;
			for (k = 0; k < p;)
			{
				acc += s.eigenvalues[k++];
				if (acc / total >= variance_target - 1e-12)
					break;
			}
		}
		s.components = vecs.leftCols(k);
		for (Eigen::Index c = 0; c < k; ++c)
		{
			Eigen::Index arg = 0;
			s.components.col(c).cwiseAbs().maxCoeff(&arg);
			if (s.components(arg, c) < 0)
				s.components.col(c) *= -1.0;
			s.output_names.push_back("pc" + std::to_string(c + 1));
		}
		s.confirmed = static_cast<int>(k);
		return s;
	}

	inline Selection select_none(const std::vector<std::string>& schema)
	{
		std::vector<std::size_t> all(schema.size());
		std::iota(all.begin(), all.end(), 0);
		Selection s = detail::retained_selection(SelectorKind::None, schema, all);
		s.confirmed = static_cast<int>(all.size());
		return s;
	}

	inline Selection fit_selector(SelectorKind kind, const Cohort& c, std::uint64_t seed, unsigned jobs = 1)
	{
		switch (kind)
		{
		case SelectorKind::None: return select_none(c.features);
		case SelectorKind::Pca: return select_pca(c.X, c.features);
		case SelectorKind::Boruta:
		{
			BorutaOptions opt;
			opt.jobs = jobs;
			return select_boruta(c.X, c.label_vector(), c.features, seed, opt);
		}
		case SelectorKind::Lasso: return select_lasso(c.X, c.label_vector(), c.features, seed);
		}
		invalid("selectors", "unknown selector");
	}

	inline Eigen::MatrixXd apply_selection(const Selection& s, const Eigen::MatrixXd& X)
	{
		if (static_cast<std::size_t>(X.cols()) != s.input_schema.size())
			invalid("selectors", "schema mismatch: selection expects " + std::to_string(s.input_schema.size()) + " columns, got " + std::to_string(X.cols()));
		if (s.is_projection())
			return (X.rowwise() - s.mean.transpose()) * s.components;
		Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(s.retained.size()));
		for (std::size_t c = 0; c < s.retained.size(); ++c)
			out.col(static_cast<Eigen::Index>(c)) = X.col(static_cast<Eigen::Index>(s.retained[c]));
		return out;
	}

	inline Cohort apply_selection(const Selection& s, const Cohort& c)
	{
		if (c.features != s.input_schema)
			invalid("selectors", "schema mismatch: cohort features differ from the fit-time schema");
		Cohort out = c;
		out.X = apply_selection(s, c.X);
		out.features = s.output_names;
		return out;
	}

	inline nlohmann::json to_json(const Selection& s)
	{
		nlohmann::json j{{"kind", to_string(s.kind)}, {"fallback", s.fallback}, {"confirmed", s.confirmed}};
		if (s.is_projection())
		{
			j["input_schema"] = s.input_schema;
			j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
			nlohmann::json comps = nlohmann::json::array();
			for (Eigen::Index c = 0; c < s.components.cols(); ++c)
			{
				const Eigen::VectorXd col = s.components.col(c);
				comps.push_back(std::vector<double>(col.data(), col.data() + col.size()));
			}
			j["components"] = std::move(comps);
		}
		else
			j["features"] = s.output_names;
		return j;
	}
}

#endif
