#ifndef FIBRORAD_LEARNERS_LINEAR_HPP
#define FIBRORAD_LEARNERS_LINEAR_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "fibrorad/common.hpp"

namespace fibrorad::linear
{
	/// w.x + b, optionally squashed through the logistic function.
	struct LinearModel
	{
		Eigen::VectorXd w;
		double b = 0.0;
		bool sigmoid_output = true;

		Eigen::VectorXd decision(const Eigen::MatrixXd& X) const { return (X * w).array() + b; }
	};

	inline double sigmoid(double z) noexcept
	{
		if (z >= 0)
			return 1.0 / (1.0 + std::exp(-z));
		const double e = std::exp(z);
		return e / (1.0 + e);
	}

	/// log(1 + exp(-z)) without overflow.
	inline double log1pexp_neg(double z) noexcept
	{
		return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
	}

	inline void require_two_classes(const Eigen::VectorXd& y, const char* who)
	{
		bool pos = false, neg = false;
		for (Eigen::Index i = 0; i < y.size(); ++i)
		{
			if (y[i] != 0.0 && y[i] != 1.0)
				invalid(who, "labels must be 0 or 1");
			pos = pos || y[i] == 1.0;
			neg = neg || y[i] == 0.0;
		}
		if (!pos || !neg)
			invalid(who, "training labels contain a single class");
	}

	/// Parameters packed as theta = [w; b].
	inline Eigen::VectorXd pack(const Eigen::VectorXd& w, double b)
	{
		Eigen::VectorXd t(w.size() + 1);
		t << w, b;
		return t;
	}

	/// L2-regularised logistic loss with 0/1 labels:
	///   F(w, b) = sum_i log(1 + exp(-s_i (w.x_i + b))) + |w|^2 / (2C),  s_i = 2 y_i - 1.
	/// The intercept is not penalised.
	class LogisticObjective
	{
	public:
		LogisticObjective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double C) : X_(X), sign_(2.0 * y.array() - 1.0), C_(C)
		{
			if (!(C > 0.0))
				invalid("learners", "C must be positive");
		}

		Eigen::Index dim() const noexcept { return X_.cols() + 1; }
		Eigen::Index samples() const noexcept { return X_.rows(); }
		double C() const noexcept { return C_; }
		const Eigen::MatrixXd& X() const noexcept { return X_; }
		const Eigen::VectorXd& sign() const noexcept { return sign_; }

		double value(const Eigen::VectorXd& theta) const
		{
			const auto w = theta.head(X_.cols());
			const Eigen::VectorXd z = sign_.array() * ((X_ * w).array() + theta[X_.cols()]);
			double f = 0.0;
			for (Eigen::Index i = 0; i < z.size(); ++i)
				f += log1pexp_neg(z[i]);
			return f + w.squaredNorm() / (2.0 * C_);
		}

		Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const
		{
			const auto w = theta.head(X_.cols());
			const Eigen::VectorXd z = sign_.array() * ((X_ * w).array() + theta[X_.cols()]);
			Eigen::VectorXd coef(z.size());
			for (Eigen::Index i = 0; i < z.size(); ++i)
				coef[i] = -sign_[i] * sigmoid(-z[i]);
			Eigen::VectorXd g(dim());
			g.head(X_.cols()) = X_.transpose() * coef + w / C_;
			g[X_.cols()] = coef.sum();
			return g;
		}

		/// Hessian-vector product at theta.
		Eigen::VectorXd hessian_times(const Eigen::VectorXd& theta, const Eigen::VectorXd& v) const
		{
			const auto w = theta.head(X_.cols());
			const Eigen::VectorXd s = (X_ * w).array() + theta[X_.cols()];
			Eigen::VectorXd d(s.size());
			for (Eigen::Index i = 0; i < s.size(); ++i)
			{
				const double p = sigmoid(s[i]);
				d[i] = p * (1.0 - p);
			}
			const Eigen::VectorXd xv = (X_ * v.head(X_.cols())).array() + v[X_.cols()];
			const Eigen::VectorXd dxv = d.cwiseProduct(xv);
			Eigen::VectorXd out(dim());
			out.head(X_.cols()) = X_.transpose() * dxv + v.head(X_.cols()) / C_;
			out[X_.cols()] = dxv.sum();
			return out;
		}

	private:
		const Eigen::MatrixXd& X_;
		Eigen::VectorXd sign_;
		double C_;
	};

	struct SolverTrace
	{
		std::vector<double> objective; ///< objective after each outer iteration / epoch
		int iterations = 0;
		bool converged = false;
	};

	struct SolverOptions
	{
		double grad_tol = 1e-6;
		int max_iter = 1000;
		double loss_tol = 1e-8;
		int max_epochs = 500;
	};

	namespace detail
	{
		/// Backtracking Armijo search along a descent direction; returns the accepted step or 0.
		inline double armijo(const LogisticObjective& obj, const Eigen::VectorXd& theta, double f0, const Eigen::VectorXd& g,
		                     const Eigen::VectorXd& dir, double step)
		{
			const double slope = g.dot(dir);
			if (!(slope < 0.0))
				return 0.0;
			for (int t = 0; t < 60; ++t)
			{
				if (obj.value(theta + step * dir) <= f0 + 1e-4 * step * slope)
					return step;
				step *= 0.5;
			}
			return 0.0;
		}
	}

	/// Limited-memory BFGS (history 10) with Armijo backtracking.
	inline Eigen::VectorXd solve_lbfgs(const LogisticObjective& obj, const SolverOptions& opt = {}, SolverTrace* trace = nullptr)
	{
		const int history = 10;
		Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.dim());
		double f = obj.value(theta);
		Eigen::VectorXd g = obj.gradient(theta);
		std::deque<Eigen::VectorXd> S, Y;
		std::deque<double> rho;
		SolverTrace local;
		SolverTrace& tr = trace ? *trace : local;
		tr.objective.push_back(f);
		for (int it = 0; it < opt.max_iter; ++it)
		{
			if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol)
			{
				tr.converged = true;
				break;
			}
			Eigen::VectorXd q = g;
			std::vector<double> alpha(S.size());
			for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k)
			{
				alpha[static_cast<std::size_t>(k)] = rho[static_cast<std::size_t>(k)] * S[static_cast<std::size_t>(k)].dot(q);
				q -= alpha[static_cast<std::size_t>(k)] * Y[static_cast<std::size_t>(k)];
			}
			double gamma = 1.0 / std::max(1.0, g.norm());
			if (!S.empty())
				gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
			Eigen::VectorXd r = gamma * q;
			for (std::size_t k = 0; k < S.size(); ++k)
			{
				const double beta = rho[k] * Y[k].dot(r);
				r += S[k] * (alpha[k] - beta);
			}
			Eigen::VectorXd dir = -r;
			double step = detail::armijo(obj, theta, f, g, dir, 1.0);
			if (step == 0.0)
			{
				// Curvature history went stale; restart from steepest descent.
				S.clear();
				Y.clear();
				rho.clear();
				dir = -g;
				step = detail::armijo(obj, theta, f, g, dir, 1.0 / std::max(1.0, g.norm()));
				if (step == 0.0)
					break;
			}
			const Eigen::VectorXd next = theta + step * dir;
			const Eigen::VectorXd g_next = obj.gradient(next);
			const Eigen::VectorXd s = next - theta, yv = g_next - g;
			const double sy = s.dot(yv);
			if (sy > 1e-12 * s.norm() * yv.norm())
			{
				S.push_back(s);
				Y.push_back(yv);
				rho.push_back(1.0 / sy);
				if (static_cast<int>(S.size()) > history)
				{
					S.pop_front();
					Y.pop_front();
					rho.pop_front();
				}
			}
			theta = next;
			g = g_next;
			f = obj.value(theta);
			tr.objective.push_back(f);
			tr.iterations = it + 1;
		}
		if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol)
			tr.converged = true;
		return theta;
	}

	/// Truncated Newton: conjugate gradient on Hessian-vector products, Armijo line search.
	inline Eigen::VectorXd solve_newton_cg(const LogisticObjective& obj, const SolverOptions& opt = {}, SolverTrace* trace = nullptr)
	{
		Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.dim());
		double f = obj.value(theta);
		SolverTrace local;
		SolverTrace& tr = trace ? *trace : local;
		tr.objective.push_back(f);
		for (int it = 0; it < opt.max_iter; ++it)
		{
			const Eigen::VectorXd g = obj.gradient(theta);
			if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol)
			{
				tr.converged = true;
				break;
			}
			const double gnorm = g.norm();
			const double tol = std::min(0.5, std::sqrt(gnorm)) * gnorm;
			Eigen::VectorXd p = Eigen::VectorXd::Zero(obj.dim());
			Eigen::VectorXd r = -g;
			Eigen::VectorXd d = r;
			double rr = r.squaredNorm();
			for (int cg = 0; cg < 2 * obj.dim() + 20 && std::sqrt(rr) > tol; ++cg)
			{
				const Eigen::VectorXd Hd = obj.hessian_times(theta, d);
				const double curv = d.dot(Hd);
				if (!(curv > 0.0))
				{
					if (cg == 0)
						p = -g;
					break;
				}
				const double a = rr / curv;
				p += a * d;
				r -= a * Hd;
				const double rr_new = r.squaredNorm();
				d = r + (rr_new / rr) * d;
				rr = rr_new;
			}
			const double step = detail::armijo(obj, theta, f, g, p, 1.0);
			if (step == 0.0)
				break;
			theta += step * p;
			f = obj.value(theta);
			tr.objective.push_back(f);
			tr.iterations = it + 1;
		}
		if (obj.gradient(theta).lpNorm<Eigen::Infinity>() < opt.grad_tol)
			tr.converged = true;
		return theta;
	}

	/// Stochastic average gradient (SAG) or its unbiased variant (SAGA) on F / n, with
	/// sampling with replacement from a seeded generator. Epochs stop when F changes by
	/// less than loss_tol.
	inline Eigen::VectorXd solve_stochastic_average(const LogisticObjective& obj, bool saga, std::uint64_t seed, const SolverOptions& opt = {},
	                                                SolverTrace* trace = nullptr)
	{
		const auto& X = obj.X();
		const auto& sgn = obj.sign();
		const Eigen::Index n = X.rows(), p = X.cols();
		const double nd = static_cast<double>(n);
		const double reg = 1.0 / (obj.C() * nd);
		const double max_sq = (X.rowwise().squaredNorm().array() + 1.0).maxCoeff();
		const double L = 0.25 * max_sq + reg;
		const double step = saga ? 1.0 / (3.0 * L) : 1.0 / L;

		Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
		double b = 0.0;
		Eigen::VectorXd memory = Eigen::VectorXd::Zero(n); // d loss_i / d s_i at last visit
		Eigen::VectorXd sum_w = Eigen::VectorXd::Zero(p);
		double sum_b = 0.0;
		Rng rng(seed);
		std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);

		SolverTrace local;
		SolverTrace& tr = trace ? *trace : local;
		double f_prev = obj.value(pack(w, b));
		tr.objective.push_back(f_prev);
		for (int epoch = 0; epoch < opt.max_epochs; ++epoch)
		{
			for (Eigen::Index t = 0; t < n; ++t)
			{
				const Eigen::Index i = pick(rng);
				const double s = X.row(i).dot(w) + b;
				const double d = -sgn[i] * sigmoid(-sgn[i] * s);
				const double delta = d - memory[i];
				memory[i] = d;
				if (saga)
				{
					// Unbiased step: new minus stale gradient plus the running average.
					const Eigen::VectorXd avg_w = sum_w / nd;
					const double avg_b = sum_b / nd;
					w -= step * (delta * X.row(i).transpose() + avg_w + reg * w);
					b -= step * (delta + avg_b);
					sum_w += delta * X.row(i).transpose();
					sum_b += delta;
				}
				else
				{
					sum_w += delta * X.row(i).transpose();
					sum_b += delta;
					w -= step * (sum_w / nd + reg * w);
					b -= step * (sum_b / nd);
				}
			}
			const double f = obj.value(pack(w, b));
			tr.objective.push_back(f);
			tr.iterations = epoch + 1;
			if (std::abs(f - f_prev) < opt.loss_tol)
			{
				tr.converged = true;
				break;
			}
			f_prev = f;
		}
		return pack(w, b);
	}

	// ---- SGD ----------------------------------------------------------------------

	enum class SgdLossKind
	{
		Logistic,
		ModifiedHuber
	};

	/// d loss / d score for margin label s in {-1, +1}.
	inline double sgd_loss_derivative(SgdLossKind loss, double score, double s) noexcept
	{
		const double z = s * score;
		if (loss == SgdLossKind::Logistic)
			return -s * sigmoid(-z);
		if (z >= 1.0)
			return 0.0;
		if (z >= -1.0)
			return -2.0 * s * (1.0 - z);
		return -4.0 * s;
	}

	inline double sgd_loss(SgdLossKind loss, double score, double s) noexcept
	{
		const double z = s * score;
		if (loss == SgdLossKind::Logistic)
			return log1pexp_neg(z);
		if (z >= 1.0)
			return 0.0;
		if (z >= -1.0)
			return (1.0 - z) * (1.0 - z);
		return -4.0 * z;
	}

	/// Epoch-shuffled SGD with step eta_t = eta0 / (1 + eta0 * alpha * t), t counting updates from 1.
	inline LinearModel train_sgd_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, SgdLossKind loss, double alpha, std::uint64_t seed,
	                                    int epochs = 100, double eta0 = 0.01)
	{
		require_two_classes(y, "learners");
		if (!(alpha >= 0.0))
			invalid("learners", "alpha must be non-negative");
		const Eigen::Index n = X.rows();
		LinearModel m{Eigen::VectorXd::Zero(X.cols()), 0.0, true};
		std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
		std::iota(order.begin(), order.end(), Eigen::Index{0});
		Rng rng(seed);
		double t = 1.0;
		for (int e = 0; e < epochs; ++e)
		{
			std::shuffle(order.begin(), order.end(), rng);
			for (Eigen::Index i : order)
			{
				const double eta = eta0 / (1.0 + eta0 * alpha * t);
				const double s = 2.0 * y[i] - 1.0;
				const double score = X.row(i).dot(m.w) + m.b;
				const double g = sgd_loss_derivative(loss, score, s);
				m.w *= std::max(0.0, 1.0 - eta * alpha);
				if (g != 0.0)
				{
					m.w -= eta * g * X.row(i).transpose();
					m.b -= eta * g;
				}
				t += 1.0;
			}
		}
		return m;
	}
}

#endif
