#ifndef FIBRORAD_ROI_HPP
#define FIBRORAD_ROI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "fibrorad/common.hpp"
#include "fibrorad/csv.hpp"
#include "fibrorad/volume.hpp"

namespace fibrorad
{
	enum class RoiKind
	{
		BiopsyBased,
		NonBiopsy
	};

	inline std::string to_string(RoiKind k) { return k == RoiKind::BiopsyBased ? "biopsy" : "nonbiopsy"; }

	inline RoiKind parse_roi_kind(std::string_view s)
	{
		if (s == "biopsy")
			return RoiKind::BiopsyBased;
		if (s == "nonbiopsy")
			return RoiKind::NonBiopsy;
		invalid("roi", "unknown ROI kind '" + std::string(s) + "'");
	}

	constexpr double kRoiRadiusMm = 15.0;
	constexpr double kBiopsyOffsetMm = 25.0;
	constexpr double kNonBiopsyMinDistanceMm = 30.0;
	constexpr double kMaxShiftMm = 30.0;

	struct SphereRoi
	{
		Vec3 center{};
		double radius = kRoiRadiusMm;
		RoiKind kind = RoiKind::BiopsyBased;

		void validate() const
		{
			if (!(radius > 0.0) || !std::isfinite(radius))
				invalid("roi", "radius must be positive");
			if (!all_finite(center))
				invalid("roi", "center must be finite");
		}

		bool operator==(const SphereRoi&) const = default;
	};

	/// Foreground grid aligned voxel-for-voxel with a Volume.
	class LiverMask
	{
	public:
		LiverMask(Index3 dims, Vec3 spacing, Vec3 origin, std::vector<std::uint8_t> on)
			: dims_(dims), spacing_(spacing), origin_(origin), on_(std::move(on))
		{
			if (on_.size() != static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]))
				invalid("roi", "mask buffer length mismatch");
			if (std::none_of(on_.begin(), on_.end(), [](auto b) { return b != 0; }))
				invalid("roi", "mask has empty foreground");
		}

		static LiverMask from_volume(const Volume& v)
		{
			std::vector<std::uint8_t> on(v.size());
			for (std::size_t n = 0; n < v.size(); ++n)
				on[n] = v.voxels()[n] != 0.0;
			return LiverMask(v.dims(), v.spacing(), v.origin(), std::move(on));
		}

		Volume to_volume() const
		{
			return Volume(dims_, spacing_, origin_, std::vector<double>(on_.begin(), on_.end()));
		}

		const Index3& dims() const noexcept { return dims_; }
		const Vec3& spacing() const noexcept { return spacing_; }
		const Vec3& origin() const noexcept { return origin_; }
		const std::vector<std::uint8_t>& data() const noexcept { return on_; }

		bool inside(long i, long j, long k) const noexcept
		{
			return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
		}
		bool at(long i, long j, long k) const noexcept { return on_[static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k))] != 0; }
		Vec3 position(long i, long j, long k) const noexcept
		{
			return {origin_[0] + i * spacing_[0], origin_[1] + j * spacing_[1], origin_[2] + k * spacing_[2]};
		}

		bool aligned_with(const Volume& v) const noexcept
		{
			return dims_ == v.dims() && spacing_ == v.spacing() && origin_ == v.origin();
		}

	private:
		Index3 dims_;
		Vec3 spacing_;
		Vec3 origin_;
		std::vector<std::uint8_t> on_;
	};

	/// Dense neighbourhood of an ROI in its source grid; `lo` is the grid index of box voxel (0,0,0).
	struct VoxelBox
	{
		Index3 lo{};
		Index3 dims{};
		std::vector<double> values;

		double at(long i, long j, long k) const noexcept
		{
			return values[static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k))];
		}
	};

	/// Intensities of the voxels inside an ROI, in x-fastest grid order, with their grid indices.
	/// `context` optionally carries the surrounding box so neighbourhood filters can see past the sphere.
	struct RoiVoxels
	{
		std::vector<double> values;
		std::vector<Index3> coords;
		Vec3 source_spacing{1.0, 1.0, 1.0};
		std::optional<VoxelBox> context;

		std::size_t size() const noexcept { return values.size(); }

		void validate() const
		{
			if (values.empty())
				invalid("roi", "ROI has no voxels");
			if (values.size() != coords.size())
				invalid("roi", "values/coords length mismatch");
			for (double v : values)
				if (std::isnan(v))
					invalid("roi", "NaN voxel value");
		}
	};

	/// Boolean grid of the voxels selected by a sphere.
	struct VoxelSelection
	{
		Index3 dims{};
		std::vector<std::uint8_t> on;

		std::size_t count() const { return static_cast<std::size_t>(std::count(on.begin(), on.end(), std::uint8_t{1})); }
	};

	namespace detail
	{
		/// Calls fn(j, k, i_lo, i_hi) for every lattice row (j,k) crossing the sphere, where
		/// [i_lo, i_hi] are the (possibly out-of-grid) x indices whose centres lie within r.
		template<typename Fn>
		void for_each_sphere_row(const Vec3& origin, const Vec3& spacing, const Vec3& center, double r, Fn&& fn)
		{
			const double ck = (center[2] - origin[2]) / spacing[2];
			const double cj = (center[1] - origin[1]) / spacing[1];
			const double ci = (center[0] - origin[0]) / spacing[0];
			const long k0 = static_cast<long>(std::ceil(ck - r / spacing[2]));
			const long k1 = static_cast<long>(std::floor(ck + r / spacing[2]));
			for (long k = k0; k <= k1; ++k)
			{
				const double dz = (k - ck) * spacing[2];
				const long j0 = static_cast<long>(std::ceil(cj - r / spacing[1]));
				const long j1 = static_cast<long>(std::floor(cj + r / spacing[1]));
				for (long j = j0; j <= j1; ++j)
				{
					const double dy = (j - cj) * spacing[1];
					const double rem = r * r - dy * dy - dz * dz;
					if (rem < 0.0)
						continue;
					const double half = std::sqrt(rem) / spacing[0];
					long i0 = static_cast<long>(std::ceil(ci - half));
					long i1 = static_cast<long>(std::floor(ci + half));
					// Guard the analytic bounds against rounding at the sphere surface.
					auto within = [&](long i) {
						const double dx = (i - ci) * spacing[0];
						return dx * dx + dy * dy + dz * dz <= r * r;
					};
					while (within(i0 - 1))
						--i0;
					while (i0 <= i1 && !within(i0))
						++i0;
					while (within(i1 + 1))
						++i1;
					while (i1 >= i0 && !within(i1))
						--i1;
					if (i0 <= i1)
						fn(j, k, i0, i1);
				}
			}
		}
	}

	/// Voxels whose centres lie within roi.radius (Euclidean, mm) of roi.center.
	inline VoxelSelection sphere_mask(const Volume& v, const SphereRoi& roi)
	{
		roi.validate();
		VoxelSelection sel{v.dims(), std::vector<std::uint8_t>(v.size(), 0)};
		std::size_t n = 0;
		detail::for_each_sphere_row(v.origin(), v.spacing(), roi.center, roi.radius, [&](long j, long k, long i0, long i1) {
			if (j < 0 || k < 0 || j >= v.dims()[1] || k >= v.dims()[2])
				return;
			for (long i = std::max(0L, i0); i <= std::min(i1, v.dims()[0] - 1); ++i)
			{
				sel.on[v.index(i, j, k)] = 1;
				++n;
			}
		});
		if (n == 0)
			invalid("roi", "ROI outside volume");
		return sel;
	}

	/// True when every lattice point within the sphere is inside the grid and in the mask.
	inline bool sphere_fits(const LiverMask& mask, const Vec3& center, double radius)
	{
		bool ok = true;
		detail::for_each_sphere_row(mask.origin(), mask.spacing(), center, radius, [&](long j, long k, long i0, long i1) {
			if (!ok)
				return;
			if (!mask.inside(i0, j, k) || !mask.inside(i1, j, k))
			{
				ok = false;
				return;
			}
			for (long i = i0; i <= i1; ++i)
				if (!mask.at(i, j, k))
				{
					ok = false;
					return;
				}
		});
		return ok;
	}

	inline bool roi_inside(const LiverMask& mask, const SphereRoi& roi) { return sphere_fits(mask, roi.center, roi.radius); }

	/// Distance (mm) from every voxel centre to the nearest lattice point that is either
	/// background or outside the grid. A sphere of radius r centred on a voxel fits the
	/// mask exactly when that voxel's clearance exceeds r.
	class ClearanceMap
	{
	public:
		explicit ClearanceMap(const LiverMask& mask) : dims_(mask.dims())
		{
			const Index3 pd{dims_[0] + 2, dims_[1] + 2, dims_[2] + 2};
			const double inf = std::numeric_limits<double>::infinity();
			std::vector<double> g(static_cast<std::size_t>(pd[0] * pd[1] * pd[2]), 0.0);
			auto pidx = [&](long i, long j, long k) { return static_cast<std::size_t>(i + pd[0] * (j + pd[1] * k)); };
			for (long k = 0; k < dims_[2]; ++k)
				for (long j = 0; j < dims_[1]; ++j)
					for (long i = 0; i < dims_[0]; ++i)
						g[pidx(i + 1, j + 1, k + 1)] = mask.at(i, j, k) ? inf : 0.0;

			std::vector<double> f, d;
			for (int axis = 0; axis < 3; ++axis)
			{
				const long n = pd[axis];
				f.resize(static_cast<std::size_t>(n));
				d.resize(static_cast<std::size_t>(n));
				const long o1 = pd[(axis + 1) % 3], o2 = pd[(axis + 2) % 3];
				for (long b = 0; b < o2; ++b)
					for (long a = 0; a < o1; ++a)
					{
						auto at = [&](long t) -> double& {
							Index3 p{};
							p[axis] = t;
							p[(axis + 1) % 3] = a;
							p[(axis + 2) % 3] = b;
							return g[pidx(p[0], p[1], p[2])];
						};
						for (long t = 0; t < n; ++t)
							f[t] = at(t);
						squared_distance_1d(f, d, mask.spacing()[axis]);
						for (long t = 0; t < n; ++t)
							at(t) = d[t];
					}
			}
			sq_.resize(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]));
			for (long k = 0; k < dims_[2]; ++k)
				for (long j = 0; j < dims_[1]; ++j)
					for (long i = 0; i < dims_[0]; ++i)
						sq_[static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k))] = g[pidx(i + 1, j + 1, k + 1)];
		}

		double squared(long i, long j, long k) const noexcept { return sq_[static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k))]; }
		double at(long i, long j, long k) const noexcept { return std::sqrt(squared(i, j, k)); }
		const Index3& dims() const noexcept { return dims_; }

	private:
		// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) on a lattice of step h.
		static void squared_distance_1d(const std::vector<double>& f, std::vector<double>& d, double h)
		{
			const long n = static_cast<long>(f.size());
			const double inf = std::numeric_limits<double>::infinity();
			std::vector<long> v(static_cast<std::size_t>(n));
			std::vector<double> z(static_cast<std::size_t>(n + 1));
			long k = -1;
			for (long q = 0; q < n; ++q)
			{
				if (f[q] == inf)
					continue;
				const double xq = q * h;
				double s = -inf;
				while (k >= 0)
				{
					const double xv = v[k] * h;
					s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
					if (s <= z[k])
						--k;
					else
						break;
				}
				++k;
				v[k] = q;
				z[k] = k == 0 ? -inf : s;
				z[k + 1] = inf;
			}
			if (k < 0)
			{
				std::fill(d.begin(), d.end(), inf);
				return;
			}
			long j = 0;
			for (long q = 0; q < n; ++q)
			{
				const double xq = q * h;
				while (z[j + 1] < xq)
					++j;
				const double dx = xq - v[j] * h;
				d[q] = dx * dx + f[v[j]];
			}
		}

		Index3 dims_;
		std::vector<double> sq_;
	};

	/// Biopsy-based ROI: centred `offset` mm along the needle beyond its tip.
	inline SphereRoi place_biopsy_roi(const Vec3& needle_tip, const Vec3& needle_dir, double radius = kRoiRadiusMm,
	                                  double offset = kBiopsyOffsetMm)
	{
		if (!all_finite(needle_tip) || std::abs(norm(needle_dir) - 1.0) > 1e-9)
			invalid("roi", "needle direction must be a unit vector");
		SphereRoi roi{needle_tip + offset * needle_dir, radius, RoiKind::BiopsyBased};
		roi.validate();
		return roi;
	}

	/// Uniform draw over voxel centres where the whole sphere sits inside the mask and the
	/// centre is at least min_dist from the biopsy ROI centre.
	inline SphereRoi place_nonbiopsy_roi(Rng& rng, const LiverMask& mask, const ClearanceMap& clearance, const Vec3& biopsy_center,
	                                     double min_dist = kNonBiopsyMinDistanceMm, double radius = kRoiRadiusMm)
	{
		std::vector<std::size_t> candidates;
		const auto& d = mask.dims();
		const double r2 = radius * radius;
		const double m2 = min_dist * min_dist;
		for (long k = 0; k < d[2]; ++k)
			for (long j = 0; j < d[1]; ++j)
				for (long i = 0; i < d[0]; ++i)
				{
					if (!mask.at(i, j, k) || !(clearance.squared(i, j, k) > r2))
						continue;
					const Vec3 p = mask.position(i, j, k);
					const Vec3 delta = p - biopsy_center;
					if (dot(delta, delta) >= m2)
						candidates.push_back(static_cast<std::size_t>(i + d[0] * (j + d[1] * k)));
				}
		if (candidates.empty())
			fail("roi", "no valid non-biopsy site");
		std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
		const std::size_t n = candidates[pick(rng)];
		const long i = static_cast<long>(n % d[0]);
		const long j = static_cast<long>((n / d[0]) % d[1]);
		const long k = static_cast<long>(n / (d[0] * d[1]));
		return SphereRoi{mask.position(i, j, k), radius, RoiKind::NonBiopsy};
	}

	inline SphereRoi place_nonbiopsy_roi(Rng& rng, const LiverMask& mask, const Vec3& biopsy_center, double min_dist = kNonBiopsyMinDistanceMm,
	                                     double radius = kRoiRadiusMm)
	{
		return place_nonbiopsy_roi(rng, mask, ClearanceMap(mask), biopsy_center, min_dist, radius);
	}

	/// Moves an ROI that is not fully inside the mask by whole-voxel steps (at most max_shift
	/// mm per axis) to the feasible position with the smallest L-infinity displacement in mm;
	/// ties go to the lexicographically smallest (dx, dy, dz).
	inline SphereRoi shift_to_fit(const SphereRoi& roi, const LiverMask& mask, const ClearanceMap& clearance, double max_shift = kMaxShiftMm)
	{
		roi.validate();
		if (roi_inside(mask, roi))
			return roi;
		const auto& s = mask.spacing();
		Index3 lim{};
		for (int a = 0; a < 3; ++a)
			lim[a] = static_cast<long>(std::floor(max_shift / s[a] + 1e-9));

		struct Shift
		{
			double linf;
			double dx, dy, dz;
		};
		std::vector<Shift> shifts;
		shifts.reserve(static_cast<std::size_t>((2 * lim[0] + 1) * (2 * lim[1] + 1) * (2 * lim[2] + 1)));
		for (long a = -lim[0]; a <= lim[0]; ++a)
			for (long b = -lim[1]; b <= lim[1]; ++b)
				for (long c = -lim[2]; c <= lim[2]; ++c)
				{
					const double dx = a * s[0], dy = b * s[1], dz = c * s[2];
					shifts.push_back({std::max({std::abs(dx), std::abs(dy), std::abs(dz)}), dx, dy, dz});
				}
		std::sort(shifts.begin(), shifts.end(),
		          [](const Shift& l, const Shift& r) { return std::tie(l.linf, l.dx, l.dy, l.dz) < std::tie(r.linf, r.dx, r.dy, r.dz); });

		for (const auto& sh : shifts)
		{
			const Vec3 c = roi.center + Vec3{sh.dx, sh.dy, sh.dz};
			// Cheap rejection: clearance is 1-Lipschitz, so the nearest voxel bounds it.
			Index3 near{};
			bool in_grid = true;
			for (int a = 0; a < 3; ++a)
			{
				near[a] = std::lround((c[a] - mask.origin()[a]) / s[a]);
				in_grid = in_grid && near[a] >= 0 && near[a] < mask.dims()[a];
			}
			if (in_grid)
			{
				const double gap = distance(c, mask.position(near[0], near[1], near[2]));
				if (clearance.at(near[0], near[1], near[2]) + gap <= roi.radius)
					continue;
			}
			if (sphere_fits(mask, c, roi.radius))
				return SphereRoi{c, roi.radius, roi.kind};
		}
		fail("roi", "ROI cannot be fitted");
	}

	inline SphereRoi shift_to_fit(const SphereRoi& roi, const LiverMask& mask, double max_shift = kMaxShiftMm)
	{
		if (roi_inside(mask, roi))
			return roi;
		return shift_to_fit(roi, mask, ClearanceMap(mask), max_shift);
	}

	/// Voxels of `v` inside the sphere, x-fastest, plus a context box spanning the ROI's
	/// bounding box grown by `context_margin` voxels (clamped to the grid).
	inline RoiVoxels extract_roi(const Volume& v, const SphereRoi& roi, long context_margin = 2)
	{
		const auto sel = sphere_mask(v, roi);
		RoiVoxels out;
		out.source_spacing = v.spacing();
		Index3 lo{v.dims()[0], v.dims()[1], v.dims()[2]}, hi{-1, -1, -1};
		for (long k = 0; k < v.dims()[2]; ++k)
			for (long j = 0; j < v.dims()[1]; ++j)
				for (long i = 0; i < v.dims()[0]; ++i)
				{
					const auto n = v.index(i, j, k);
					if (!sel.on[n])
						continue;
					out.values.push_back(v.voxels()[n]);
					out.coords.push_back({i, j, k});
					lo = {std::min(lo[0], i), std::min(lo[1], j), std::min(lo[2], k)};
					hi = {std::max(hi[0], i), std::max(hi[1], j), std::max(hi[2], k)};
				}
		VoxelBox box;
		for (int a = 0; a < 3; ++a)
		{
			box.lo[a] = std::max(0L, lo[a] - context_margin);
			box.dims[a] = std::min(v.dims()[a] - 1, hi[a] + context_margin) - box.lo[a] + 1;
		}
		box.values.reserve(static_cast<std::size_t>(box.dims[0] * box.dims[1] * box.dims[2]));
		for (long k = 0; k < box.dims[2]; ++k)
			for (long j = 0; j < box.dims[1]; ++j)
				for (long i = 0; i < box.dims[0]; ++i)
					box.values.push_back(v.at(box.lo[0] + i, box.lo[1] + j, box.lo[2] + k));
		out.context = std::move(box);
		return out;
	}

	// ---- ROI manifest --------------------------------------------------------

	struct RoiManifestEntry
	{
		std::string patient_id;
		SphereRoi roi;
	};

	inline void write_roi_manifest(const std::filesystem::path& path, const std::vector<RoiManifestEntry>& entries)
	{
		csv::Table t;
		t.header = {"patient_id", "kind", "cx_mm", "cy_mm", "cz_mm", "radius_mm"};
		for (const auto& e : entries)
			t.rows.push_back({e.patient_id, to_string(e.roi.kind), format_double(e.roi.center[0]), format_double(e.roi.center[1]),
			                  format_double(e.roi.center[2]), format_double(e.roi.radius)});
		csv::write(path, t);
	}

	inline std::vector<RoiManifestEntry> read_roi_manifest(const std::filesystem::path& path)
	{
		const auto t = csv::read(path);
		const auto pid = t.column("patient_id"), kind = t.column("kind"), cx = t.column("cx_mm"), cy = t.column("cy_mm"), cz = t.column("cz_mm"),
		           rad = t.column("radius_mm");
		std::vector<RoiManifestEntry> out;
		for (const auto& r : t.rows)
		{
			RoiManifestEntry e{r[pid], SphereRoi{{csv::to_double(r[cx]), csv::to_double(r[cy]), csv::to_double(r[cz])}, csv::to_double(r[rad]),
			                                     parse_roi_kind(r[kind])}};
			e.roi.validate();
			out.push_back(std::move(e));
		}
		return out;
	}
}

#endif
