#ifndef FIBRORAD_METRICS_HPP
#define FIBRORAD_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "fibrorad/common.hpp"

namespace fibrorad
{
	struct MetricSummary
	{
		double mean = 0.0;
		double ci_low = 0.0;
		double ci_high = 0.0;
		std::size_t n = 0;
	};

	namespace detail
	{
		inline void require_both_classes(std::span<const int> labels)
		{
			bool pos = false, neg = false;
			for (int l : labels)
			{
				pos = pos || l == 1;
				neg = neg || l == 0;
			}
			if (!pos || !neg)
				invalid("metrics", "both classes must be present");
		}
	}

	/// Mann-Whitney AUC: (wins + ties/2) / (n_pos * n_neg), computed via midranks.
	inline double auc(std::span<const double> scores, std::span<const int> labels)
	{
		if (scores.size() != labels.size())
			invalid("metrics", "scores/labels length mismatch");
		detail::require_both_classes(labels);
		std::vector<std::size_t> order(scores.size());
		std::iota(order.begin(), order.end(), 0);
		std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
		double rank_sum = 0.0;
		double n_pos = 0.0, n_neg = 0.0;
		for (std::size_t i = 0; i < order.size();)
		{
			std::size_t j = i;
			while (j < order.size() && scores[order[j]] == scores[order[i]])
				++j;
			const double midrank = 0.5 * static_cast<double>(i + 1 + j);
			for (std::size_t t = i; t < j; ++t)
				if (labels[order[t]] == 1)
					rank_sum += midrank;
			i = j;
		}
		for (int l : labels)
			(l == 1 ? n_pos : n_neg) += 1.0;
		return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
	}

	struct SensSpec
	{
		double sensitivity;
		double specificity;
	};

	/// A sample is called positive when its score is >= threshold.
	inline SensSpec sens_spec(std::span<const double> scores, std::span<const int> labels, double threshold)
	{
		if (scores.size() != labels.size())
			invalid("metrics", "scores/labels length mismatch");
		double tp = 0, fn = 0, tn = 0, fp = 0;
		for (std::size_t i = 0; i < scores.size(); ++i)
		{
			const bool called = scores[i] >= threshold;
			if (labels[i] == 1)
				(called ? tp : fn) += 1;
			else if (labels[i] == 0)
				(called ? fp : tn) += 1;
			else
				invalid("metrics", "labels must be 0 or 1");
		}
		const bool have_pos = tp + fn > 0, have_neg = tn + fp > 0;
		if (!have_pos && !have_neg)
			invalid("metrics", "no samples");
		// Sensitivity needs positives and specificity needs negatives; a missing class yields NaN.
		return {have_pos ? tp / (tp + fn) : std::nan(""), have_neg ? tn / (tn + fp) : std::nan("")};
	}

	/// Normal-approximation interval: mean +/- 1.96 * sd / sqrt(n), sample sd.
	inline MetricSummary ci_normal(std::span<const double> values)
	{
		if (values.empty())
			invalid("metrics", "no values");
		const double n = static_cast<double>(values.size());
		const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
		double half = 0.0;
		if (values.size() > 1)
		{
			double ss = 0.0;
			for (double v : values)
				ss += (v - mean) * (v - mean);
			half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
		}
		return {mean, mean - half, mean + half, values.size()};
	}
}

#endif
