#ifndef FIBRORAD_TESTS_SUPPORT_HPP
#define FIBRORAD_TESTS_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "fibrorad.hpp"

namespace fibrorad::test
{
	/// Fresh directory under the system temp dir, removed on scope exit.
	class TempDir
	{
	public:
		explicit TempDir(const std::string& tag)
		{
			static int counter = 0;
			path_ = std::filesystem::temp_directory_path() / ("fibrorad-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
			std::filesystem::remove_all(path_);
			std::filesystem::create_directories(path_);
		}
		~TempDir() { std::filesystem::remove_all(path_); }
		TempDir(const TempDir&) = delete;
		TempDir& operator=(const TempDir&) = delete;

		const std::filesystem::path& path() const { return path_; }
		std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

	private:
		std::filesystem::path path_;
	};

	inline std::string slurp(const std::filesystem::path& p)
	{
		std::ifstream in(p, std::ios::binary);
		std::ostringstream ss;
		ss << in.rdbuf();
		return ss.str();
	}

	inline Volume random_volume(Rng& rng, Index3 dims, Vec3 spacing, double lo = -100, double hi = 200, bool integral = true)
	{
		std::uniform_real_distribution<double> u(lo, hi);
		std::vector<double> v(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
		for (double& x : v)
			x = integral ? std::round(u(rng)) : u(rng);
		return Volume(dims, spacing, {0, 0, 0}, std::move(v));
	}

	/// Ellipsoid-free box mask: voxels with every index in [lo, hi].
	inline LiverMask box_mask(Index3 dims, Vec3 spacing, Index3 lo, Index3 hi)
	{
		std::vector<std::uint8_t> on(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), 0);
		for (long k = lo[2]; k <= hi[2]; ++k)
			for (long j = lo[1]; j <= hi[1]; ++j)
				for (long i = lo[0]; i <= hi[0]; ++i)
					on[static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k))] = 1;
		return LiverMask(dims, spacing, {0, 0, 0}, std::move(on));
	}

	/// Cohort over X with one row per patient ("Q0000", ...) and stage = label.
	inline Cohort make_cohort(const Eigen::MatrixXd& X, const std::vector<int>& labels, std::vector<std::string> names = {})
	{
		Cohort c;
		if (names.empty())
			for (Eigen::Index j = 0; j < X.cols(); ++j)
				names.push_back("f" + std::to_string(j));
		c.features = names;
		c.X = X;
		for (std::size_t r = 0; r < labels.size(); ++r)
		{
			char id[16];
			std::snprintf(id, sizeof id, "Q%04zu", r);
			c.labels.push_back(labels[r]);
			c.fstage.push_back(labels[r]);
			c.patient_ids.push_back(id);
			c.roi_ids.push_back(std::string(id) + "-biopsy");
			c.roi_kinds.push_back(RoiKind::BiopsyBased);
			c.synthetic.push_back(0);
		}
		c.validate();
		return c;
	}

	inline std::vector<int> class_labels(int n1, int n0)
	{
		std::vector<int> y(static_cast<std::size_t>(n1), 1);
		y.insert(y.end(), static_cast<std::size_t>(n0), 0);
		return y;
	}

	inline Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index n, Eigen::Index p)
	{
		std::normal_distribution<double> g(0, 1);
		Eigen::MatrixXd X(n, p);
		for (Eigen::Index i = 0; i < n; ++i)
			for (Eigen::Index j = 0; j < p; ++j)
				X(i, j) = g(rng);
		return X;
	}

	/// A small phantom geometry that keeps CLI and I/O tests fast.
	inline PhantomSpec small_phantom()
	{
		PhantomSpec s;
		s.dims = {96, 96, 48};
		s.spacing = {1.0, 1.0, 2.0};
		s.semi_axes = {45.0, 45.0, 45.0};
		return s;
	}
}

#endif
