#ifndef FIBRORAD_NORMALIZE_HPP
#define FIBRORAD_NORMALIZE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "fibrorad/common.hpp"
#include "fibrorad/roi.hpp"

namespace fibrorad
{
	enum class NormalizationMethod
	{
		None,
		HistEq,
		MinMax,
		ZScore,
		Gamma
	};

	struct NormalizationKind
	{
		NormalizationMethod method = NormalizationMethod::None;
		double gamma = 1.0;

		static constexpr NormalizationKind none() { return {NormalizationMethod::None, 1.0}; }
		static constexpr NormalizationKind histeq() { return {NormalizationMethod::HistEq, 1.0}; }
		static constexpr NormalizationKind minmax() { return {NormalizationMethod::MinMax, 1.0}; }
		static constexpr NormalizationKind zscore() { return {NormalizationMethod::ZScore, 1.0}; }
		static NormalizationKind gamma_correction(double g)
		{
			if (!(g > 0.0))
				invalid("normalize", "gamma must be positive");
			return {NormalizationMethod::Gamma, g};
		}

		bool operator==(const NormalizationKind&) const = default;
	};

	/// The six methods swept, in canonical order.
	inline std::array<NormalizationKind, 6> sweep_normalizations()
	{
		return {NormalizationKind::none(), NormalizationKind::histeq(), NormalizationKind::minmax(), NormalizationKind::zscore(),
		        NormalizationKind::gamma_correction(0.5), NormalizationKind::gamma_correction(1.5)};
	}

	inline std::vector<NormalizationKind> all_sweep_normalizations()
	{
		const auto all = sweep_normalizations();
		return {all.begin(), all.end()};
	}

	inline std::string to_string(const NormalizationKind& k)
	{
		switch (k.method)
		{
		case NormalizationMethod::None: return "none";
		case NormalizationMethod::HistEq: return "histeq";
		case NormalizationMethod::MinMax: return "minmax";
		case NormalizationMethod::ZScore: return "zscore";
		case NormalizationMethod::Gamma:
		{
			char buf[32];
			std::snprintf(buf, sizeof buf, "gamma%g", k.gamma);
			return buf;
		}
		}
		return "?";
	}

	inline NormalizationKind parse_normalization(std::string_view s)
	{
		if (s == "none")
			return NormalizationKind::none();
		if (s == "histeq")
			return NormalizationKind::histeq();
		if (s == "minmax")
			return NormalizationKind::minmax();
		if (s == "zscore")
			return NormalizationKind::zscore();
		if (s == "gamma0.5")
			return NormalizationKind::gamma_correction(0.5);
		if (s == "gamma1.5")
			return NormalizationKind::gamma_correction(1.5);
		invalid("normalize", "unknown normalization '" + std::string(s) + "'");
	}

	constexpr int kHistEqBins = 256;

	/// Intensity map fitted on one ROI sample and applicable to any value (e.g. the ROI's
	/// context voxels). Out-of-sample values are clamped to the fitted [min, max] first for
	/// the range-based methods, so the map stays monotone and inside [0, 1].
	class IntensityMap
	{
	public:
		IntensityMap(const std::vector<double>& sample, NormalizationKind kind) : kind_(kind)
		{
			if (sample.empty())
				invalid("normalize", "empty sample");
			const auto [mn, mx] = std::minmax_element(sample.begin(), sample.end());
			lo_ = *mn;
			hi_ = *mx;
			double sum = 0.0;
			for (double x : sample)
				sum += x;
			mean_ = sum / static_cast<double>(sample.size());
			double ss = 0.0;
			for (double x : sample)
				ss += (x - mean_) * (x - mean_);
			sd_ = std::sqrt(ss / static_cast<double>(sample.size()));

			switch (kind_.method)
			{
			case NormalizationMethod::None: break;
			// A constant sample can still leave a rounding-sized sd.
			case NormalizationMethod::ZScore: degenerate_ = !(hi_ > lo_ && sd_ > 0.0); break;
			case NormalizationMethod::MinMax:
			case NormalizationMethod::Gamma: degenerate_ = !(hi_ > lo_); break;
			case NormalizationMethod::HistEq:
				degenerate_ = !(hi_ > lo_);
				if (!degenerate_)
				{
					std::array<double, kHistEqBins> counts{};
					for (double x : sample)
						++counts[static_cast<std::size_t>(bin(x))];
					double acc = 0.0;
					for (int b = 0; b < kHistEqBins; ++b)
					{
						acc += counts[b];
						cdf_[b] = acc / static_cast<double>(sample.size());
					}
				}
				break;
			}
		}

		bool degenerate() const noexcept { return degenerate_; }

		double operator()(double x) const noexcept
		{
			if (kind_.method == NormalizationMethod::None)
				return x;
			if (degenerate_)
				return 0.0;
			switch (kind_.method)
			{
			case NormalizationMethod::ZScore: return (x - mean_) / sd_;
			case NormalizationMethod::MinMax: return scaled(x);
			case NormalizationMethod::Gamma: return std::pow(scaled(x), kind_.gamma);
			case NormalizationMethod::HistEq: return cdf_[static_cast<std::size_t>(bin(x))];
			default: return x;
			}
		}

	private:
		double scaled(double x) const noexcept { return (std::clamp(x, lo_, hi_) - lo_) / (hi_ - lo_); }

		int bin(double x) const noexcept
		{
			const int b = static_cast<int>(std::floor(scaled(x) * kHistEqBins));
			return std::clamp(b, 0, kHistEqBins - 1);
		}

		NormalizationKind kind_;
		double lo_ = 0.0, hi_ = 0.0, mean_ = 0.0, sd_ = 0.0;
		bool degenerate_ = false;
		std::array<double, kHistEqBins> cdf_{};
	};

	struct NormalizedRoi
	{
		RoiVoxels voxels;
		bool degenerate = false;
	};

	/// Per-ROI intensity normalization. Constant input under any range/moment method yields
	/// all zeros with `degenerate` set instead of failing.
	inline NormalizedRoi normalize(const RoiVoxels& x, NormalizationKind kind)
	{
		if (x.values.empty())
			invalid("normalize", "empty ROI");
		const IntensityMap map(x.values, kind);
		NormalizedRoi out{x, map.degenerate()};
		for (double& v : out.voxels.values)
			v = map(v);
		if (out.voxels.context)
			for (double& v : out.voxels.context->values)
				v = map(v);
		return out;
	}

	inline std::vector<double> normalize_values(const std::vector<double>& values, NormalizationKind kind)
	{
		const IntensityMap map(values, kind);
		std::vector<double> out(values.size());
		std::transform(values.begin(), values.end(), out.begin(), [&](double v) { return map(v); });
		return out;
	}
}

#endif
