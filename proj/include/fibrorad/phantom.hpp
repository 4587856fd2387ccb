#ifndef FIBRORAD_PHANTOM_HPP
#define FIBRORAD_PHANTOM_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fibrorad/common.hpp"
#include "fibrorad/roi.hpp"
#include "fibrorad/volume.hpp"

namespace fibrorad
{
	/// Texture model: Gaussian white noise smoothed by a separable Gaussian (per-class
	/// correlation length), scaled to noise_sd and offset by base_hu. Class 1 adds sparse
	/// single-voxel bright speckles; the per-patient density and every amplitude are gamma draws.
	struct PhantomSpec
	{
		int class_label = 0;
		double base_hu = 55.0;
		double noise_sd = 6.0;
		std::array<double, 2> smoothing_mm{1.5, 1.5}; ///< indexed by class
		double speckle_density = 0.004;               ///< mean speckles per voxel (class 1)
		double speckle_density_shape = 4.0;
		double speckle_amplitude = 30.0;              ///< mean HU added per speckle
		double speckle_amplitude_shape = 3.0;
		double signal_strength = 1.0;                 ///< scales the speckle density; 0 gives a null phantom
		Index3 dims{170, 170, 85};
		Vec3 spacing{1.0, 1.0, 2.0};
		Vec3 semi_axes{80.0, 80.0, 80.0};
		double background_hu = -60.0;
		double max_tilt_deg = 20.0;
		ContrastPhase phase = ContrastPhase::NC;
		std::uint64_t seed = 0;

		void validate() const
		{
			if (class_label != 0 && class_label != 1)
				invalid("phantom", "class label must be 0 or 1");
			if (!(noise_sd >= 0.0) || !(smoothing_mm[0] >= 0.0) || !(smoothing_mm[1] >= 0.0))
				invalid("phantom", "noise and smoothing must be non-negative");
			if (!(speckle_density >= 0.0 && speckle_density < 1.0) || !(speckle_amplitude >= 0.0) || !(signal_strength >= 0.0))
				invalid("phantom", "speckle parameters out of range");
			if (!(speckle_density_shape > 0.0) || !(speckle_amplitude_shape > 0.0))
				invalid("phantom", "gamma shapes must be positive");
			const double needed = kRoiRadiusMm + kMaxShiftMm;
			for (int a = 0; a < 3; ++a)
			{
				if (dims[a] < 1 || !(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
					invalid("phantom", "dims and spacing must be positive");
				if (!(semi_axes[a] >= needed))
					invalid("phantom", "liver semi-axes too small to hold a 15 mm ROI after 30 mm shifts");
				if (dims[a] * spacing[a] < 2.0 * semi_axes[a] + 2.0 * spacing[a])
					invalid("phantom", "dims too small to contain the liver with a 15 mm ROI after 30 mm shifts");
			}
		}
	};

	struct Phantom
	{
		Volume volume;
		LiverMask mask;
		Vec3 needle_tip;
		Vec3 needle_dir;
	};

	namespace detail
	{
		inline std::vector<double> gaussian_kernel(double sigma_vox)
		{
			if (!(sigma_vox > 0.0))
				return {1.0};
			const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_vox)));
			std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
			double sum = 0.0;
			for (int t = -half; t <= half; ++t)
				sum += k[static_cast<std::size_t>(t + half)] = std::exp(-0.5 * t * t / (sigma_vox * sigma_vox));
			for (double& w : k)
				w /= sum;
			return k;
		}

		/// In-place 1D convolution along `axis` with clamp-to-edge boundaries.
		inline void convolve_axis(std::vector<double>& data, const Index3& dims, int axis, const std::vector<double>& kernel)
		{
			if (kernel.size() == 1)
				return;
			const long half = static_cast<long>(kernel.size() / 2);
			const long n = dims[axis];
			const long stride = axis == 0 ? 1 : (axis == 1 ? dims[0] : dims[0] * dims[1]);
			const long o1 = dims[(axis + 1) % 3], o2 = dims[(axis + 2) % 3];
			const long s1 = (axis + 1) % 3 == 0 ? 1 : ((axis + 1) % 3 == 1 ? dims[0] : dims[0] * dims[1]);
			const long s2 = (axis + 2) % 3 == 0 ? 1 : ((axis + 2) % 3 == 1 ? dims[0] : dims[0] * dims[1]);
			std::vector<double> line(static_cast<std::size_t>(n));
			for (long b = 0; b < o2; ++b)
				for (long a = 0; a < o1; ++a)
				{
					const long base = a * s1 + b * s2;
					for (long t = 0; t < n; ++t)
						line[static_cast<std::size_t>(t)] = data[static_cast<std::size_t>(base + t * stride)];
					for (long t = 0; t < n; ++t)
					{
						double acc = 0.0;
						for (long q = -half; q <= half; ++q)
							acc += kernel[static_cast<std::size_t>(q + half)] * line[static_cast<std::size_t>(std::clamp(t + q, 0L, n - 1))];
						data[static_cast<std::size_t>(base + t * stride)] = acc;
					}
				}
		}

		inline Vec3 normalized(const Vec3& v) { return (1.0 / norm(v)) * v; }

		inline Vec3 cross(const Vec3& a, const Vec3& b)
		{
			return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
		}

		inline Vec3 grid_center(const PhantomSpec& s)
		{
			return {0.5 * (s.dims[0] - 1) * s.spacing[0], 0.5 * (s.dims[1] - 1) * s.spacing[1], 0.5 * (s.dims[2] - 1) * s.spacing[2]};
		}
	}

	/// Deterministic in spec.seed. The liver is the axis-aligned ellipsoid centred in the grid;
	/// the needle tip sits on its surface and points inward, tilted off the inward normal.
	inline Phantom generate_phantom(const PhantomSpec& spec)
	{
		spec.validate();
		const Index3& d = spec.dims;
		const std::size_t n = static_cast<std::size_t>(d[0] * d[1] * d[2]);
		const Vec3 origin{0.0, 0.0, 0.0};
		const Vec3 c = detail::grid_center(spec);
		Rng rng(derive_seed(spec.seed, 0x54455854ULL));

		// Texture.
		std::vector<double> tex(n);
		std::normal_distribution<double> gauss(0.0, 1.0);
		for (double& x : tex)
			x = gauss(rng);
		double gain = 1.0;
		const double smooth = spec.smoothing_mm[static_cast<std::size_t>(spec.class_label)];
		for (int a = 0; a < 3; ++a)
		{
			const auto k = detail::gaussian_kernel(smooth / spec.spacing[a]);
			detail::convolve_axis(tex, d, a, k);
			double sq = 0.0;
			for (double w : k)
				sq += w * w;
			gain *= std::sqrt(sq);
		}
		const double scale = spec.noise_sd / gain;
		for (double& x : tex)
			x = spec.base_hu + scale * x;

		if (spec.class_label == 1 && spec.signal_strength > 0.0 && spec.speckle_density > 0.0)
		{
			const double mean_density = spec.speckle_density * spec.signal_strength;
			std::gamma_distribution<double> density(spec.speckle_density_shape, mean_density / spec.speckle_density_shape);
			const double rho = std::min(density(rng), 0.5);
			std::poisson_distribution<long> count(rho * static_cast<double>(n));
			std::uniform_int_distribution<std::size_t> where(0, n - 1);
			std::gamma_distribution<double> amp(spec.speckle_amplitude_shape, spec.speckle_amplitude / spec.speckle_amplitude_shape);
			const long m = count(rng);
			for (long s = 0; s < m; ++s)
			{
				const std::size_t at = where(rng);
				tex[at] += amp(rng);
			}
		}

		std::vector<std::uint8_t> on(n, 0);
		const double offset = spec.phase == ContrastPhase::CE ? 60.0 : 0.0;
		for (long k = 0; k < d[2]; ++k)
			for (long j = 0; j < d[1]; ++j)
				for (long i = 0; i < d[0]; ++i)
				{
					const std::size_t idx = static_cast<std::size_t>(i + d[0] * (j + d[1] * k));
					const Vec3 p{i * spec.spacing[0], j * spec.spacing[1], k * spec.spacing[2]};
					double q = 0.0;
					for (int a = 0; a < 3; ++a)
						q += (p[a] - c[a]) * (p[a] - c[a]) / (spec.semi_axes[a] * spec.semi_axes[a]);
					on[idx] = q <= 1.0 ? 1 : 0;
					tex[idx] = std::round((on[idx] ? tex[idx] : spec.background_hu) + offset);
				}

		// Needle: uniform direction from the centre to the surface, inward normal tilted.
		Vec3 u;
		do
			u = {gauss(rng), gauss(rng), gauss(rng)};
		while (norm(u) < 1e-6);
		u = detail::normalized(u);
		double t = 0.0;
		for (int a = 0; a < 3; ++a)
			t += u[a] * u[a] / (spec.semi_axes[a] * spec.semi_axes[a]);
		const Vec3 tip = c + (1.0 / std::sqrt(t)) * u;
		Vec3 normal{};
		for (int a = 0; a < 3; ++a)
			normal[a] = -(tip[a] - c[a]) / (spec.semi_axes[a] * spec.semi_axes[a]);
		normal = detail::normalized(normal);
		Vec3 helper = std::abs(normal[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
		const Vec3 e1 = detail::normalized(detail::cross(normal, helper));
		const Vec3 e2 = detail::cross(normal, e1);
		std::uniform_real_distribution<double> unit(0.0, 1.0);
		const double tilt = spec.max_tilt_deg * std::numbers::pi / 180.0 * unit(rng);
		const double az = 2.0 * std::numbers::pi * unit(rng);
		Vec3 dir = std::cos(tilt) * normal + std::sin(tilt) * (std::cos(az) * e1 + std::sin(az) * e2);
		dir = detail::normalized(dir);

		return Phantom{Volume(d, spec.spacing, origin, std::move(tex)), LiverMask(d, spec.spacing, origin, std::move(on)), tip, dir};
	}

	// ---- cohort --------------------------------------------------------------------

	struct PhantomPatient
	{
		std::string id;
		int label = 0;
		int fstage = 0;
		PhantomSpec spec; ///< NC spec; the CE volume is the same texture with the phase offset
		SphereRoi biopsy;
		SphereRoi nonbiopsy;
	};

	/// Patient specs and ROI geometry; volumes are regenerated on demand from the stored specs.
	struct PhantomCohort
	{
		std::vector<PhantomPatient> patients;

		Phantom volume(std::size_t i, ContrastPhase phase = ContrastPhase::NC) const
		{
			PhantomSpec s = patients.at(i).spec;
			s.phase = phase;
			return generate_phantom(s);
		}

		std::vector<RoiManifestEntry> manifest() const
		{
			std::vector<RoiManifestEntry> out;
			for (const auto& p : patients)
			{
				out.push_back({p.id, p.biopsy});
				out.push_back({p.id, p.nonbiopsy});
			}
			return out;
		}
	};

	inline std::string patient_id(std::size_t i)
	{
		char buf[32];
		std::snprintf(buf, sizeof buf, "P%03zu", i + 1);
		return buf;
	}

	/// n_fibrosis patients with label 1 (stage F1-F4) and n_healthy with label 0 (F0), in a
	/// seed-shuffled order. Each gets a biopsy ROI 25 mm along the needle (shifted to fit)
	/// and a non-biopsy ROI at least 30 mm away.
	inline PhantomCohort generate_cohort(int n_fibrosis, int n_healthy, std::uint64_t master_seed, const PhantomSpec& base = {}, unsigned jobs = 1)
	{
		if (n_fibrosis < 2 || n_healthy < 2)
			invalid("phantom", "each class needs at least 2 patients");
		base.validate();
		std::vector<int> labels(static_cast<std::size_t>(n_fibrosis), 1);
		labels.insert(labels.end(), static_cast<std::size_t>(n_healthy), 0);
		Rng order_rng(derive_seed(master_seed, 0x4f524445ULL));
		std::shuffle(labels.begin(), labels.end(), order_rng);

		PhantomCohort cohort;
		cohort.patients.resize(labels.size());
		parallel_for(labels.size(), jobs, [&](std::size_t i) {
			PhantomPatient& p = cohort.patients[i];
			p.id = patient_id(i);
			p.label = labels[i];
			Rng rng(derive_seed(master_seed, i));
			p.fstage = p.label == 1 ? std::uniform_int_distribution<int>(1, 4)(rng) : 0;
			p.spec = base;
			p.spec.class_label = p.label;
			p.spec.phase = ContrastPhase::NC;
			p.spec.seed = derive_seed(master_seed, i, 0x564f4cULL);
			const Phantom ph = generate_phantom(p.spec);
			const ClearanceMap clearance(ph.mask);
			p.biopsy = shift_to_fit(place_biopsy_roi(ph.needle_tip, ph.needle_dir), ph.mask, clearance);
			p.nonbiopsy = place_nonbiopsy_roi(rng, ph.mask, clearance, p.biopsy.center);
		});
		return cohort;
	}
}

#endif
