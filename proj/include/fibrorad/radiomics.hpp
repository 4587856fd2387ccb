#ifndef FIBRORAD_RADIOMICS_HPP
#define FIBRORAD_RADIOMICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "fibrorad/common.hpp"
#include "fibrorad/csv.hpp"
#include "fibrorad/normalize.hpp"
#include "fibrorad/roi.hpp"

namespace fibrorad
{
	/// Ordered feature record. Names follow "<filter>_<class>_<Name>".
	struct FeatureVector
	{
		std::vector<std::string> names;
		std::vector<double> values;
		/// Features whose computation hit a degenerate case and were set to 0.
		std::vector<std::string> degenerate;

		void add(std::string name, double value, bool is_degenerate = false)
		{
			if (!std::isfinite(value))
			{
				value = 0.0;
				is_degenerate = true;
			}
			if (is_degenerate)
				degenerate.push_back(name);
			names.push_back(std::move(name));
			values.push_back(value);
		}

		void append(const FeatureVector& other, const std::string& prefix)
		{
			for (std::size_t i = 0; i < other.names.size(); ++i)
			{
				names.push_back(prefix + other.names[i]);
				values.push_back(other.values[i]);
			}
			for (const auto& d : other.degenerate)
				degenerate.push_back(prefix + d);
		}

		double at(std::string_view name) const
		{
			for (std::size_t i = 0; i < names.size(); ++i)
				if (names[i] == name)
					return values[i];
			invalid("radiomics", "unknown feature '" + std::string(name) + "'");
		}

		bool is_degenerate(std::string_view name) const
		{
			return std::find(degenerate.begin(), degenerate.end(), name) != degenerate.end();
		}

		std::size_t size() const noexcept { return names.size(); }
	};

	// ---- discretization -------------------------------------------------------

	constexpr int kGlszmBins = 32;

	struct DiscretizedRoi
	{
		std::vector<int> levels;
		int ng = 1;
		std::vector<Index3> coords;
	};

	/// Equal-width bins over [min, max], levels 1..bins; the maximum lands in the top bin.
	/// Constant input collapses to a single level.
	inline DiscretizedRoi discretize_values(const std::vector<double>& values, const std::vector<Index3>& coords, int bins = kGlszmBins)
	{
		if (bins < 2)
			invalid("radiomics", "bin count must be >= 2");
		if (values.empty())
			invalid("radiomics", "empty ROI");
		DiscretizedRoi d;
		d.coords = coords;
		const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
		const double lo = *mn, hi = *mx;
		d.levels.resize(values.size());
		if (!(hi > lo))
		{
			std::fill(d.levels.begin(), d.levels.end(), 1);
			d.ng = 1;
			return d;
		}
		d.ng = bins;
		const double width = (hi - lo) / bins;
		for (std::size_t n = 0; n < values.size(); ++n)
			d.levels[n] = std::clamp(static_cast<int>(std::floor((values[n] - lo) / width)) + 1, 1, bins);
		return d;
	}

	inline DiscretizedRoi discretize(const RoiVoxels& x, int bins = kGlszmBins)
	{
		return discretize_values(x.values, x.coords, bins);
	}

	// ---- first order ----------------------------------------------------------

	/// Intensity statistics over the ROI sample. Moments are population moments;
	/// Kurtosis is non-excess; Entropy and Uniformity use the 32-bin histogram.
	inline FeatureVector firstorder(const std::vector<double>& x)
	{
		if (x.empty())
			invalid("radiomics", "empty ROI");
		const double n = static_cast<double>(x.size());
		const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
		const bool constant = !(*mx > *mn);
		double sum = 0.0, energy = 0.0;
		for (double v : x)
		{
			sum += v;
			energy += v * v;
		}
		const double mean = sum / n;
		double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
		for (double v : x)
		{
			const double d = v - mean;
			const double d2 = d * d;
			m2 += d2;
			m3 += d2 * d;
			m4 += d2 * d2;
			mad += std::abs(d);
		}
		m2 /= n;
		m3 /= n;
		m4 /= n;
		mad /= n;

		std::vector<double> sorted(x);
		const std::size_t mid = sorted.size() / 2;
		std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(mid), sorted.end());
		double median = sorted[mid];
		if (sorted.size() % 2 == 0)
			median = 0.5 * (median + *std::max_element(sorted.begin(), sorted.begin() + static_cast<long>(mid)));

		std::vector<double> hist(kGlszmBins, 0.0);
		const auto levels = discretize_values(x, std::vector<Index3>(x.size()), kGlszmBins).levels;
		for (int l : levels)
			hist[static_cast<std::size_t>(l - 1)] += 1.0;
		double entropy = 0.0, uniformity = 0.0;
		for (double c : hist)
		{
			if (c == 0.0)
				continue;
			const double p = c / n;
			entropy -= p * std::log2(p);
			uniformity += p * p;
		}

		FeatureVector f;
		f.add("Energy", energy);
		f.add("Entropy", entropy);
		f.add("Kurtosis", constant ? 0.0 : m4 / (m2 * m2), constant);
		f.add("Maximum", *mx);
		f.add("Mean", mean);
		f.add("MeanAbsoluteDeviation", mad);
		f.add("Median", median);
		f.add("Minimum", *mn);
		f.add("Range", *mx - *mn);
		f.add("RootMeanSquared", std::sqrt(energy / n));
		f.add("Skewness", constant ? 0.0 : m3 / std::pow(m2, 1.5), constant);
		f.add("Uniformity", uniformity);
		f.add("Variance", m2);
		return f;
	}

	inline FeatureVector firstorder(const RoiVoxels& x) { return firstorder(x.values); }

	// ---- GLSZM ----------------------------------------------------------------

	/// Gray-level size-zone matrix in sparse form: counts[(level, size)] = number of zones.
	struct GlszmMatrix
	{
		int ng = 1;
		long voxel_count = 0;
		std::map<std::pair<int, long>, long> counts;

		long zone_count() const
		{
			long nz = 0;
			for (const auto& [key, c] : counts)
				nz += c;
			return nz;
		}
	};

	/// Zones are maximal connected components (26- or 6-connectivity) of equal level
	/// among the ROI voxels.
	inline GlszmMatrix glszm(const DiscretizedRoi& d, int connectivity = 26)
	{
		if (connectivity != 26 && connectivity != 6)
			invalid("radiomics", "connectivity must be 6 or 26");
		if (d.levels.empty() || d.levels.size() != d.coords.size())
			invalid("radiomics", "invalid discretized ROI");
		Index3 lo = d.coords.front(), hi = d.coords.front();
		for (const auto& c : d.coords)
			for (int a = 0; a < 3; ++a)
			{
				lo[a] = std::min(lo[a], c[a]);
				hi[a] = std::max(hi[a], c[a]);
			}
		const Index3 dims{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
		auto flat = [&](long i, long j, long k) { return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k)); };
		std::vector<int> slot(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), -1);
		for (std::size_t n = 0; n < d.coords.size(); ++n)
		{
			const auto& c = d.coords[n];
			auto& s = slot[flat(c[0] - lo[0], c[1] - lo[1], c[2] - lo[2])];
			if (s != -1)
				invalid("radiomics", "duplicate ROI coordinate");
			s = static_cast<int>(n);
		}

		std::vector<Index3> offsets;
		for (long dz = -1; dz <= 1; ++dz)
			for (long dy = -1; dy <= 1; ++dy)
				for (long dx = -1; dx <= 1; ++dx)
				{
					const long manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
					if (manhattan == 0 || (connectivity == 6 && manhattan != 1))
						continue;
					offsets.push_back({dx, dy, dz});
				}

		GlszmMatrix P;
		P.ng = d.ng;
		P.voxel_count = static_cast<long>(d.levels.size());
		std::vector<std::uint8_t> seen(d.levels.size(), 0);
		std::vector<std::size_t> stack;
		for (std::size_t start = 0; start < d.levels.size(); ++start)
		{
			if (seen[start])
				continue;
			const int level = d.levels[start];
			long size = 0;
			seen[start] = 1;
			stack.push_back(start);
			while (!stack.empty())
			{
				const std::size_t cur = stack.back();
				stack.pop_back();
				++size;
				const Index3 c{d.coords[cur][0] - lo[0], d.coords[cur][1] - lo[1], d.coords[cur][2] - lo[2]};
				for (const auto& o : offsets)
				{
					const long i = c[0] + o[0], j = c[1] + o[1], k = c[2] + o[2];
					if (i < 0 || j < 0 || k < 0 || i >= dims[0] || j >= dims[1] || k >= dims[2])
						continue;
					const int nb = slot[flat(i, j, k)];
					if (nb < 0 || seen[static_cast<std::size_t>(nb)] || d.levels[static_cast<std::size_t>(nb)] != level)
						continue;
					seen[static_cast<std::size_t>(nb)] = 1;
					stack.push_back(static_cast<std::size_t>(nb));
				}
			}
			++P.counts[{level, size}];
		}
		return P;
	}

	/// Zone-matrix features, with Nz zones over Np voxels, p(i,j) = P(i,j)/Nz:
	///   SmallAreaEmphasis              = sum P/j^2 / Nz
	///   LargeAreaEmphasis              = sum P*j^2 / Nz
	///   GrayLevelNonUniformity         = sum_i (sum_j P)^2 / Nz
	///   SizeZoneNonUniformity          = sum_j (sum_i P)^2 / Nz
	///   ZoneEntropy                    = -sum p log2 p
	///   ZonePercentage                 = Nz / Np
	///   LowGrayLevelZoneEmphasis       = sum P/i^2 / Nz
	///   HighGrayLevelZoneEmphasis      = sum P*i^2 / Nz
	///   SmallAreaHighGrayLevelEmphasis = sum P*i^2/j^2 / Nz
	inline FeatureVector glszm_features(const GlszmMatrix& P)
	{
		const double nz = static_cast<double>(P.zone_count());
		if (!(nz >= 1.0))
			invalid("radiomics", "zone matrix is empty");
		double sae = 0, lae = 0, ze = 0, lglze = 0, hglze = 0, sahgle = 0;
		std::map<int, double> by_level;
		std::map<long, double> by_size;
		for (const auto& [key, c] : P.counts)
		{
			const double i = key.first, j = static_cast<double>(key.second), cnt = static_cast<double>(c);
			sae += cnt / (j * j);
			lae += cnt * j * j;
			lglze += cnt / (i * i);
			hglze += cnt * i * i;
			sahgle += cnt * i * i / (j * j);
			const double p = cnt / nz;
			ze -= p * std::log2(p);
			by_level[key.first] += cnt;
			by_size[key.second] += cnt;
		}
		double gln = 0, szn = 0;
		for (const auto& [l, c] : by_level)
			gln += c * c;
		for (const auto& [s, c] : by_size)
			szn += c * c;

		FeatureVector f;
		f.add("GrayLevelNonUniformity", gln / nz);
		f.add("HighGrayLevelZoneEmphasis", hglze / nz);
		f.add("LargeAreaEmphasis", lae / nz);
		f.add("LowGrayLevelZoneEmphasis", lglze / nz);
		f.add("SizeZoneNonUniformity", szn / nz);
		f.add("SmallAreaEmphasis", sae / nz);
		f.add("SmallAreaHighGrayLevelEmphasis", sahgle / nz);
		f.add("ZoneEntropy", ze);
		f.add("ZonePercentage", nz / static_cast<double>(P.voxel_count));
		return f;
	}

	// ---- dense neighbourhoods ------------------------------------------------

	/// Dense box around the ROI: the recorded context when present, otherwise the
	/// ROI bounding box with non-ROI positions filled by the ROI mean.
	inline VoxelBox dense_box(const RoiVoxels& x)
	{
		if (x.context)
			return *x.context;
		VoxelBox box;
		Index3 hi = x.coords.front();
		box.lo = x.coords.front();
		for (const auto& c : x.coords)
			for (int a = 0; a < 3; ++a)
			{
				box.lo[a] = std::min(box.lo[a], c[a]);
				hi[a] = std::max(hi[a], c[a]);
			}
		for (int a = 0; a < 3; ++a)
			box.dims[a] = hi[a] - box.lo[a] + 1;
		const double mean = std::accumulate(x.values.begin(), x.values.end(), 0.0) / static_cast<double>(x.values.size());
		box.values.assign(static_cast<std::size_t>(box.dims[0] * box.dims[1] * box.dims[2]), mean);
		for (std::size_t n = 0; n < x.coords.size(); ++n)
		{
			const auto& c = x.coords[n];
			box.values[static_cast<std::size_t>((c[0] - box.lo[0]) + box.dims[0] * ((c[1] - box.lo[1]) + box.dims[1] * (c[2] - box.lo[2])))] = x.values[n];
		}
		return box;
	}

	// ---- wavelet ---------------------------------------------------------------

	/// Sub-band order; letter a of the name is the filter applied along axis a (x, y, z).
	inline const std::array<std::string, 8>& wavelet_band_names()
	{
		static const std::array<std::string, 8> names{"LLL", "LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH"};
		return names;
	}

	struct HaarBands
	{
		Index3 padded_dims{};   ///< even-sized box the transform ran on
		Index3 band_dims{};     ///< padded_dims / 2
		std::vector<double> padded; ///< the box after symmetric extension
		std::array<std::vector<double>, 8> bands;
	};

	/// Single-level orthonormal Haar analysis of a dense box: low = (a+b)/sqrt2,
	/// high = (a-b)/sqrt2 along x, then y, then z. Odd axes are extended by repeating
	/// the last sample (half-sample symmetric extension).
	inline HaarBands haar3d(const Index3& dims, const std::vector<double>& values)
	{
		for (long d : dims)
			if (d < 2)
				invalid("radiomics", "wavelet box must span >= 2 voxels per axis");
		HaarBands out;
		for (int a = 0; a < 3; ++a)
		{
			out.padded_dims[a] = dims[a] + (dims[a] % 2);
			out.band_dims[a] = out.padded_dims[a] / 2;
		}
		const auto& pd = out.padded_dims;
		out.padded.resize(static_cast<std::size_t>(pd[0] * pd[1] * pd[2]));
		for (long k = 0; k < pd[2]; ++k)
			for (long j = 0; j < pd[1]; ++j)
				for (long i = 0; i < pd[0]; ++i)
				{
					const long si = std::min(i, dims[0] - 1), sj = std::min(j, dims[1] - 1), sk = std::min(k, dims[2] - 1);
					out.padded[static_cast<std::size_t>(i + pd[0] * (j + pd[1] * k))] = values[static_cast<std::size_t>(si + dims[0] * (sj + dims[1] * sk))];
				}

		const double r = 1.0 / std::sqrt(2.0);
		// After filtering an axis, low half occupies [0, n/2) and high half [n/2, n).
		std::vector<double> work = out.padded;
		std::vector<double> line;
		for (int axis = 0; axis < 3; ++axis)
		{
			const long n = pd[axis], half = n / 2;
			line.resize(static_cast<std::size_t>(n));
			const long o1 = pd[(axis + 1) % 3], o2 = pd[(axis + 2) % 3];
			for (long b = 0; b < o2; ++b)
				for (long a = 0; a < o1; ++a)
				{
					auto idx = [&](long t) {
						Index3 p{};
						p[axis] = t;
						p[(axis + 1) % 3] = a;
						p[(axis + 2) % 3] = b;
						return static_cast<std::size_t>(p[0] + pd[0] * (p[1] + pd[1] * p[2]));
					};
					for (long t = 0; t < half; ++t)
					{
						const double x0 = work[idx(2 * t)], x1 = work[idx(2 * t + 1)];
						line[static_cast<std::size_t>(t)] = (x0 + x1) * r;
						line[static_cast<std::size_t>(half + t)] = (x0 - x1) * r;
					}
					for (long t = 0; t < n; ++t)
						work[idx(t)] = line[static_cast<std::size_t>(t)];
				}
		}
		const auto& bd = out.band_dims;
		for (int band = 0; band < 8; ++band)
		{
			const long hx = (band >> 2) & 1, hy = (band >> 1) & 1, hz = band & 1;
			auto& dst = out.bands[static_cast<std::size_t>(band)];
			dst.resize(static_cast<std::size_t>(bd[0] * bd[1] * bd[2]));
			for (long k = 0; k < bd[2]; ++k)
				for (long j = 0; j < bd[1]; ++j)
					for (long i = 0; i < bd[0]; ++i)
						dst[static_cast<std::size_t>(i + bd[0] * (j + bd[1] * k))] =
						    work[static_cast<std::size_t>((i + hx * bd[0]) + pd[0] * ((j + hy * bd[1]) + pd[1] * (k + hz * bd[2])))];
		}
		return out;
	}

	/// Eight Haar sub-bands of the ROI bounding box, each re-masked to the coefficients
	/// whose 2x2x2 support contains at least one ROI voxel. Coordinates are in the
	/// half-resolution coefficient grid; spacing doubles.
	inline std::array<RoiVoxels, 8> wavelet_bank(const RoiVoxels& x)
	{
		x.validate();
		const VoxelBox ctx = dense_box(x);
		Index3 lo = x.coords.front(), hi = x.coords.front();
		for (const auto& c : x.coords)
			for (int a = 0; a < 3; ++a)
			{
				lo[a] = std::min(lo[a], c[a]);
				hi[a] = std::max(hi[a], c[a]);
			}
		const Index3 dims{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
		std::vector<double> box(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
		for (long k = 0; k < dims[2]; ++k)
			for (long j = 0; j < dims[1]; ++j)
				for (long i = 0; i < dims[0]; ++i)
					box[static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k))] =
					    ctx.at(lo[0] + i - ctx.lo[0], lo[1] + j - ctx.lo[1], lo[2] + k - ctx.lo[2]);
		const auto haar = haar3d(dims, box);
		const auto& bd = haar.band_dims;

		std::vector<std::uint8_t> keep(static_cast<std::size_t>(bd[0] * bd[1] * bd[2]), 0);
		for (const auto& c : x.coords)
			keep[static_cast<std::size_t>((c[0] - lo[0]) / 2 + bd[0] * ((c[1] - lo[1]) / 2 + bd[1] * ((c[2] - lo[2]) / 2)))] = 1;

		std::array<RoiVoxels, 8> out;
		for (int band = 0; band < 8; ++band)
		{
			auto& rv = out[static_cast<std::size_t>(band)];
			rv.source_spacing = 2.0 * x.source_spacing;
			for (long k = 0; k < bd[2]; ++k)
				for (long j = 0; j < bd[1]; ++j)
					for (long i = 0; i < bd[0]; ++i)
					{
						const auto n = static_cast<std::size_t>(i + bd[0] * (j + bd[1] * k));
						if (!keep[n])
							continue;
						rv.values.push_back(haar.bands[static_cast<std::size_t>(band)][n]);
						rv.coords.push_back({i, j, k});
					}
		}
		return out;
	}

	// ---- 3D LBP-derived maps -------------------------------------------------------

	struct LbpMaps
	{
		RoiVoxels m1; ///< samples >= centre at radius r
		RoiVoxels m2; ///< samples >= centre at radius 2r
		RoiVoxels k;  ///< kurtosis of the 26 samples at radius r
		std::size_t degenerate_kurtosis = 0;
	};

	/// The 26 neighbourhood offsets normalised to unit length, in (dz, dy, dx) scan order.
	inline const std::vector<Vec3>& unit_directions()
	{
		static const std::vector<Vec3> dirs = [] {
			std::vector<Vec3> d;
			for (int z = -1; z <= 1; ++z)
				for (int y = -1; y <= 1; ++y)
					for (int x = -1; x <= 1; ++x)
					{
						if (!x && !y && !z)
							continue;
						const Vec3 v{double(x), double(y), double(z)};
						d.push_back((1.0 / norm(v)) * v);
					}
			return d;
		}();
		return dirs;
	}

	namespace detail
	{
		/// Trilinear sample of box at (p + offset) with clamp-to-edge, expressed relative to
		/// the centre value so flat neighbourhoods reproduce the centre exactly.
		inline double sample_relative(const VoxelBox& box, const Index3& p, const Vec3& offset, double center)
		{
			double c[3];
			long i0[3], i1[3];
			double t[3];
			for (int a = 0; a < 3; ++a)
			{
				c[a] = std::clamp(static_cast<double>(p[a]) + offset[a], 0.0, static_cast<double>(box.dims[a] - 1));
				i0[a] = std::min<long>(static_cast<long>(std::floor(c[a])), box.dims[a] - 1);
				i1[a] = std::min(i0[a] + 1, box.dims[a] - 1);
				t[a] = c[a] - static_cast<double>(i0[a]);
			}
			double acc = 0.0;
			for (int dz = 0; dz < 2; ++dz)
			{
				const double wz = dz ? t[2] : 1.0 - t[2];
				if (wz == 0.0)
					continue;
				for (int dy = 0; dy < 2; ++dy)
				{
					const double wy = dy ? t[1] : 1.0 - t[1];
					if (wy == 0.0)
						continue;
					for (int dx = 0; dx < 2; ++dx)
					{
						const double wx = dx ? t[0] : 1.0 - t[0];
						if (wx == 0.0)
							continue;
						acc += wx * wy * wz * (box.at(dx ? i1[0] : i0[0], dy ? i1[1] : i0[1], dz ? i1[2] : i0[2]) - center);
					}
				}
			}
			return center + acc;
		}

		inline double sample_kurtosis(const std::array<double, 26>& s, bool& degenerate)
		{
			double mean = 0.0;
			for (double v : s)
				mean += v;
			mean /= 26.0;
			double m2 = 0.0, m4 = 0.0;
			bool flat = true;
			for (double v : s)
			{
				const double d = v - mean;
				m2 += d * d;
				m4 += d * d * d * d;
				flat = flat && v == s[0];
			}
			if (flat || !(m2 > 0.0))
			{
				degenerate = true;
				return 0.0;
			}
			m2 /= 26.0;
			m4 /= 26.0;
			degenerate = false;
			return m4 / (m2 * m2);
		}
	}

	/// Per ROI voxel, samples the 26 unit directions at radius r and 2r (trilinear,
	/// clamp-to-edge over the ROI's context box). Ties count as ">= centre".
	inline LbpMaps lbp3d(const RoiVoxels& x, double radius_vox = 1.0)
	{
		x.validate();
		const VoxelBox box = dense_box(x);
		const auto& dirs = unit_directions();
		LbpMaps out;
		for (auto* m : {&out.m1, &out.m2, &out.k})
		{
			m->coords = x.coords;
			m->source_spacing = x.source_spacing;
			m->values.resize(x.size());
		}
		std::array<double, 26> ring{};
		for (std::size_t n = 0; n < x.size(); ++n)
		{
			const Index3 p{x.coords[n][0] - box.lo[0], x.coords[n][1] - box.lo[1], x.coords[n][2] - box.lo[2]};
			const double center = box.at(p[0], p[1], p[2]);
			int c1 = 0, c2 = 0;
			for (std::size_t d = 0; d < dirs.size(); ++d)
			{
				ring[d] = detail::sample_relative(box, p, radius_vox * dirs[d], center);
				c1 += ring[d] >= center;
				c2 += detail::sample_relative(box, p, (2.0 * radius_vox) * dirs[d], center) >= center;
			}
			bool degenerate = false;
			out.m1.values[n] = c1;
			out.m2.values[n] = c2;
			out.k.values[n] = detail::sample_kurtosis(ring, degenerate);
			out.degenerate_kurtosis += degenerate;
		}
		return out;
	}

	// ---- full extraction -------------------------------------------------------------

	/// Filter channels in schema order.
	inline const std::vector<std::string>& filter_names()
	{
		static const std::vector<std::string> names = [] {
			std::vector<std::string> n{"original"};
			for (const auto& b : wavelet_band_names())
				n.push_back("wavelet-" + b);
			n.insert(n.end(), {"lbp-3D-m1", "lbp-3D-m2", "lbp-3D-k"});
			return n;
		}();
		return names;
	}

	namespace detail
	{
		inline void add_channel(FeatureVector& out, const std::string& filter, const RoiVoxels& channel)
		{
			out.append(firstorder(channel.values), filter + "_firstorder_");
			out.append(glszm_features(glszm(discretize(channel, kGlszmBins))), filter + "_glszm_");
		}
	}

	/// Normalizes the ROI then computes first-order and GLSZM features for the original
	/// image, the eight Haar sub-bands and the three LBP maps. Shape features are never emitted.
	inline FeatureVector extract_all(const RoiVoxels& x, NormalizationKind norm)
	{
		x.validate();
		const auto normalized = normalize(x, norm);
		const RoiVoxels& roi = normalized.voxels;
		FeatureVector out;
		if (normalized.degenerate)
			out.degenerate.push_back("normalization");
		detail::add_channel(out, "original", roi);
		const auto bands = wavelet_bank(roi);
		for (std::size_t b = 0; b < bands.size(); ++b)
			detail::add_channel(out, "wavelet-" + wavelet_band_names()[b], bands[b]);
		const auto lbp = lbp3d(roi);
		detail::add_channel(out, "lbp-3D-m1", lbp.m1);
		detail::add_channel(out, "lbp-3D-m2", lbp.m2);
		detail::add_channel(out, "lbp-3D-k", lbp.k);
		return out;
	}

	/// Names emitted by extract_all, in order.
	inline std::vector<std::string> feature_schema()
	{
		static const std::vector<std::string> schema = [] {
			RoiVoxels probe;
			for (long k = 0; k < 2; ++k)
				for (long j = 0; j < 2; ++j)
					for (long i = 0; i < 2; ++i)
					{
						probe.values.push_back(static_cast<double>(i + 2 * j + 4 * k));
						probe.coords.push_back({i, j, k});
					}
			return extract_all(probe, NormalizationKind::none()).names;
		}();
		return schema;
	}

	// ---- feature CSV -------------------------------------------------------------

	struct FeatureRow
	{
		std::string roi_id;
		FeatureVector features;
	};

	inline void write_feature_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows)
	{
		csv::Table t;
		t.header = {"roi_id"};
		if (!rows.empty())
			t.header.insert(t.header.end(), rows.front().features.names.begin(), rows.front().features.names.end());
		for (const auto& r : rows)
		{
			if (r.features.names.size() + 1 != t.header.size() || !std::equal(r.features.names.begin(), r.features.names.end(), t.header.begin() + 1))
				invalid("radiomics", "feature schema differs between rows");
			csv::Row row{r.roi_id};
			for (double v : r.features.values)
				row.push_back(format_double(v));
			t.rows.push_back(std::move(row));
		}
		csv::write(path, t);
	}

	inline std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path)
	{
		const auto t = csv::read(path);
		if (t.header.empty() || t.header[0] != "roi_id")
			invalid("radiomics", "feature CSV must start with roi_id");
		std::vector<FeatureRow> out;
		for (const auto& r : t.rows)
		{
			FeatureRow fr{r[0], {}};
			for (std::size_t c = 1; c < r.size(); ++c)
				fr.features.add(t.header[c], csv::to_double(r[c]));
			out.push_back(std::move(fr));
		}
		return out;
	}
}

#endif
