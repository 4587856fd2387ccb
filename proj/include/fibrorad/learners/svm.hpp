#ifndef FIBRORAD_LEARNERS_SVM_HPP
#define FIBRORAD_LEARNERS_SVM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "fibrorad/common.hpp"

namespace fibrorad::svm
{
	enum class KernelKind
	{
		Linear,
		Poly3,
		Rbf
	};

	struct Kernel
	{
		KernelKind kind = KernelKind::Linear;
		double gamma = 1.0; ///< scale inside poly / rbf

		/// gamma = 1/p for poly, 1/(p * var(X)) for rbf (1/p when X is constant).
		static Kernel for_data(KernelKind kind, const Eigen::MatrixXd& X)
		{
			const double p = static_cast<double>(std::max<Eigen::Index>(1, X.cols()));
			Kernel k{kind, 1.0 / p};
			if (kind == KernelKind::Rbf)
			{
				const double mean = X.mean();
				const double var = X.size() > 0 ? (X.array() - mean).square().mean() : 0.0;
				if (var > 0.0)
					k.gamma = 1.0 / (p * var);
			}
			return k;
		}

		double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const
		{
			switch (kind)
			{
			case KernelKind::Linear: return a.dot(b);
			case KernelKind::Poly3:
			{
				const double t = gamma * a.dot(b) + 1.0;
				return t * t * t;
			}
			case KernelKind::Rbf: return std::exp(-gamma * (a - b).squaredNorm());
			}
			return 0.0;
		}
	};

	/// Dual solution expressed through its support vectors.
	struct KernelMachine
	{
		Kernel kernel;
		Eigen::MatrixXd support;  ///< rows are support vectors
		Eigen::VectorXd coef;     ///< alpha_i * y_i, y in {-1, +1}
		double rho = 0.0;         ///< decision = sum coef_i K(sv_i, x) - rho
		Eigen::VectorXd alpha;    ///< full dual vector over the training rows
		int iterations = 0;

		double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const
		{
			double s = -rho;
			for (Eigen::Index i = 0; i < support.rows(); ++i)
				s += coef[i] * kernel(support.row(i), x);
			return s;
		}

		/// Primal weights; meaningful for the linear kernel only.
		Eigen::VectorXd linear_weights() const
		{
			if (support.rows() == 0)
				return Eigen::VectorXd::Zero(support.cols());
			return support.transpose() * coef;
		}
	};

	struct SmoOptions
	{
		double tolerance = 1e-3; ///< maximal KKT violation m(alpha) - M(alpha)
		long max_iter = 10'000'000;
	};

	/// Soft-margin C-SVC dual by SMO with second-order working-set selection.
	/// y holds 0/1 labels.
	inline KernelMachine fit_smo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y01, const Kernel& kernel, double C, const SmoOptions& opt = {})
	{
		if (!(C > 0.0))
			invalid("learners", "C must be positive");
		const Eigen::Index n = X.rows();
		constexpr double tau = 1e-12;
		Eigen::VectorXd y = 2.0 * y01.array() - 1.0;
		Eigen::MatrixXd K(n, n);
		for (Eigen::Index i = 0; i < n; ++i)
			for (Eigen::Index j = 0; j <= i; ++j)
				K(i, j) = K(j, i) = kernel(X.row(i), X.row(j));

		Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
		Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0); // gradient of 1/2 a'Qa - e'a
		auto up = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
		auto low = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

		long iter = 0;
		for (; iter < opt.max_iter; ++iter)
		{
			Eigen::Index i = -1;
			double gmax = -std::numeric_limits<double>::infinity();
			for (Eigen::Index t = 0; t < n; ++t)
				if (up(t) && -y[t] * G[t] >= gmax)
				{
					gmax = -y[t] * G[t];
					i = t;
				}
			if (i < 0)
				break;
			Eigen::Index j = -1;
			double gmin = std::numeric_limits<double>::infinity();
			double best_obj = std::numeric_limits<double>::infinity();
			for (Eigen::Index t = 0; t < n; ++t)
			{
				if (!low(t))
					continue;
				const double v = -y[t] * G[t];
				gmin = std::min(gmin, v);
				const double b = gmax - v;
				if (b > 0)
				{
					double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
					if (a <= 0)
						a = tau;
					const double obj = -(b * b) / a;
					if (obj <= best_obj)
					{
						best_obj = obj;
						j = t;
					}
				}
			}
			if (gmax - gmin < opt.tolerance || j < 0)
				break;

			const double ai_old = alpha[i], aj_old = alpha[j];
			const double Qij = y[i] * y[j] * K(i, j);
			if (y[i] != y[j])
			{
				double quad = K(i, i) + K(j, j) + 2.0 * Qij;
				if (quad <= 0)
					quad = tau;
				const double delta = (-G[i] - G[j]) / quad;
				const double diff = alpha[i] - alpha[j];
				alpha[i] += delta;
				alpha[j] += delta;
				if (diff > 0)
				{
					if (alpha[j] < 0)
					{
						alpha[j] = 0;
						alpha[i] = diff;
					}
				}
				else if (alpha[i] < 0)
				{
					alpha[i] = 0;
					alpha[j] = -diff;
				}
				if (diff > 0)
				{
					if (alpha[i] > C)
					{
						alpha[i] = C;
						alpha[j] = C - diff;
					}
				}
				else if (alpha[j] > C)
				{
					alpha[j] = C;
					alpha[i] = C + diff;
				}
			}
			else
			{
				double quad = K(i, i) + K(j, j) - 2.0 * Qij;
				if (quad <= 0)
					quad = tau;
				const double delta = (G[i] - G[j]) / quad;
				const double sum = alpha[i] + alpha[j];
				alpha[i] -= delta;
				alpha[j] += delta;
				if (sum > C)
				{
					if (alpha[i] > C)
					{
						alpha[i] = C;
						alpha[j] = sum - C;
					}
				}
				else if (alpha[j] < 0)
				{
					alpha[j] = 0;
					alpha[i] = sum;
				}
				if (sum > C)
				{
					if (alpha[j] > C)
					{
						alpha[j] = C;
						alpha[i] = sum - C;
					}
				}
				else if (alpha[i] < 0)
				{
					alpha[i] = 0;
					alpha[j] = sum;
				}
			}
			const double di = alpha[i] - ai_old, dj = alpha[j] - aj_old;
			for (Eigen::Index t = 0; t < n; ++t)
				G[t] += y[t] * (y[i] * K(t, i) * di + y[j] * K(t, j) * dj);
		}

		// rho from free vectors, else the midpoint of the feasible interval.
		double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
		double sum_free = 0.0;
		int n_free = 0;
		for (Eigen::Index t = 0; t < n; ++t)
		{
			const double yG = y[t] * G[t];
			if (alpha[t] >= C)
				(y[t] < 0 ? ub : lb) = y[t] < 0 ? std::min(ub, yG) : std::max(lb, yG);
			else if (alpha[t] <= 0)
				(y[t] > 0 ? ub : lb) = y[t] > 0 ? std::min(ub, yG) : std::max(lb, yG);
			else
			{
				++n_free;
				sum_free += yG;
			}
		}
		KernelMachine m;
		m.kernel = kernel;
		m.rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);
		if (!std::isfinite(m.rho))
			m.rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);
		m.alpha = alpha;
		m.iterations = static_cast<int>(iter);
		std::vector<Eigen::Index> sv;
		for (Eigen::Index t = 0; t < n; ++t)
			if (alpha[t] > 0)
				sv.push_back(t);
		m.support.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
		m.coef.resize(static_cast<Eigen::Index>(sv.size()));
		for (std::size_t k = 0; k < sv.size(); ++k)
		{
			m.support.row(static_cast<Eigen::Index>(k)) = X.row(sv[k]);
			m.coef[static_cast<Eigen::Index>(k)] = alpha[sv[k]] * y[sv[k]];
		}
		return m;
	}
}

#endif
