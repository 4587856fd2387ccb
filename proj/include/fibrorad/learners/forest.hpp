#ifndef FIBRORAD_LEARNERS_FOREST_HPP
#define FIBRORAD_LEARNERS_FOREST_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fibrorad/common.hpp"

namespace fibrorad::forest
{
	struct Node
	{
		int feature = -1; ///< -1 marks a leaf
		double threshold = 0.0;
		int left = -1;
		int right = -1;
		double value = 0.0; ///< class-1 fraction of the training samples reaching the node
	};

	struct Tree
	{
		std::vector<Node> nodes;

		double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const
		{
			int at = 0;
			while (nodes[static_cast<std::size_t>(at)].feature >= 0)
			{
				const Node& n = nodes[static_cast<std::size_t>(at)];
				at = x[n.feature] <= n.threshold ? n.left : n.right;
			}
			return nodes[static_cast<std::size_t>(at)].value;
		}

		int depth() const
		{
			std::vector<int> d(nodes.size(), 0);
			int best = 0;
			for (std::size_t i = 0; i < nodes.size(); ++i)
				if (nodes[i].feature >= 0)
				{
					d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
					d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
					best = std::max(best, d[i] + 1);
				}
			return best;
		}
	};

	struct TreeOptions
	{
		int max_features = 1; ///< features examined per split (non-constant ones)
		int max_depth = 0;    ///< 0 = unlimited
		int min_samples_split = 2;
	};

	inline double gini(double pos, double total) noexcept
	{
		if (total <= 0.0)
			return 0.0;
		const double p = pos / total;
		return 2.0 * p * (1.0 - p);
	}

	struct Split
	{
		int feature = -1;
		double threshold = 0.0;
		double decrease = 0.0; ///< n * gini(parent) - n_l * gini(left) - n_r * gini(right)
	};

	/// Gini-optimal threshold on one feature over the given (possibly repeated) samples.
	/// Candidate thresholds are midpoints between consecutive distinct values; ties go to the lowest.
	inline Split best_split_on(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& samples, int feature)
	{
		std::vector<std::pair<double, double>> vals;
		vals.reserve(samples.size());
		double pos = 0.0;
		for (int s : samples)
		{
			vals.emplace_back(X(s, feature), y[s]);
			pos += y[s];
		}
		std::sort(vals.begin(), vals.end());
		const double n = static_cast<double>(vals.size());
		const double parent = n * gini(pos, n);
		Split best;
		double best_child = std::numeric_limits<double>::infinity();
		double left_pos = 0.0;
		for (std::size_t i = 0; i + 1 < vals.size(); ++i)
		{
			left_pos += vals[i].second;
			if (!(vals[i].first < vals[i + 1].first))
				continue;
			const double nl = static_cast<double>(i + 1), nr = n - nl;
			const double child = nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr);
			// Float noise must not break the lowest-threshold tie rule.
			if (child < best_child - 1e-9 * n)
			{
				best_child = child;
				double t = 0.5 * (vals[i].first + vals[i + 1].first);
				if (!(t < vals[i + 1].first))
					t = vals[i].first;
				best = {feature, t, parent - child};
			}
		}
		return best;
	}

	/// Grows one CART tree on `samples` (bootstrap rows may repeat). Adds impurity decrease
	/// per feature into `importance` when given.
	inline Tree build_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& samples, const TreeOptions& opt, Rng& rng,
	                       Eigen::VectorXd* importance = nullptr)
	{
		const int p = static_cast<int>(X.cols());
		Tree tree;
		struct Pending
		{
			int node;
			std::vector<int> rows;
			int depth;
		};
		std::vector<Pending> stack;
		tree.nodes.emplace_back();
		stack.push_back({0, samples, 0});
		std::vector<int> features(static_cast<std::size_t>(p));
		std::iota(features.begin(), features.end(), 0);
		while (!stack.empty())
		{
			Pending job = std::move(stack.back());
			stack.pop_back();
			double pos = 0.0;
			for (int r : job.rows)
				pos += y[r];
			const double n = static_cast<double>(job.rows.size());
			tree.nodes[static_cast<std::size_t>(job.node)].value = n > 0 ? pos / n : 0.0;
			const bool pure = pos == 0.0 || pos == n;
			if (pure || static_cast<int>(job.rows.size()) < opt.min_samples_split || (opt.max_depth > 0 && job.depth >= opt.max_depth))
				continue;

			std::shuffle(features.begin(), features.end(), rng);
			Split best;
			double best_decrease = -1.0;
			int visited = 0;
			for (int f : features)
			{
				if (visited >= opt.max_features)
					break;
				const Split s = best_split_on(X, y, job.rows, f);
				if (s.feature < 0)
					continue; // constant within the node
				++visited;
				if (s.decrease > best_decrease)
				{
					best_decrease = s.decrease;
					best = s;
				}
			}
			if (best.feature < 0)
				continue;

			std::vector<int> left, right;
			for (int r : job.rows)
				(X(r, best.feature) <= best.threshold ? left : right).push_back(r);
			const int l = static_cast<int>(tree.nodes.size());
			tree.nodes.emplace_back();
			tree.nodes.emplace_back();
			Node& node = tree.nodes[static_cast<std::size_t>(job.node)];
			node.feature = best.feature;
			node.threshold = best.threshold;
			node.left = l;
			node.right = l + 1;
			if (importance)
				(*importance)[best.feature] += std::max(0.0, best.decrease);
			stack.push_back({l + 1, std::move(right), job.depth + 1});
			stack.push_back({l, std::move(left), job.depth + 1});
		}
		return tree;
	}

	struct Forest
	{
		std::vector<Tree> trees;
		Eigen::VectorXd importance; ///< normalized to sum 1 when any split occurred

		double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const
		{
			double s = 0.0;
			for (const Tree& t : trees)
				s += t.predict(x);
			return s / static_cast<double>(trees.size());
		}
	};

	struct ForestOptions
	{
		int trees = 100;
		int max_depth = 0;
		bool bootstrap = true;
	};

	inline int sqrt_features(Eigen::Index p) { return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)) - 1e-12))); }

	/// Tree t uses the generator seeded with derive_seed(seed, t), so fitting order is free.
	inline Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestOptions& opt, std::uint64_t seed, unsigned jobs = 1)
	{
		if (opt.trees < 1)
			invalid("learners", "tree count must be positive");
		if (opt.max_depth < 0)
			invalid("learners", "max depth must be non-negative");
		const int n = static_cast<int>(X.rows());
		const TreeOptions topt{sqrt_features(X.cols()), opt.max_depth, 2};
		Forest f;
		f.trees.resize(static_cast<std::size_t>(opt.trees));
		std::vector<Eigen::VectorXd> imp(static_cast<std::size_t>(opt.trees), Eigen::VectorXd::Zero(X.cols()));
		parallel_for(static_cast<std::size_t>(opt.trees), jobs, [&](std::size_t t) {
			Rng rng(derive_seed(seed, t));
			std::vector<int> rows(static_cast<std::size_t>(n));
			if (opt.bootstrap)
			{
				std::uniform_int_distribution<int> pick(0, n - 1);
				for (int& r : rows)
					r = pick(rng);
			}
			else
				std::iota(rows.begin(), rows.end(), 0);
			f.trees[t] = build_tree(X, y, rows, topt, rng, &imp[t]);
		});
		f.importance = Eigen::VectorXd::Zero(X.cols());
		for (const auto& v : imp)
			f.importance += v;
		const double total = f.importance.sum();
		if (total > 0.0)
			f.importance /= total;
		return f;
	}
}

#endif
