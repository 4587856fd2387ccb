#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace fibrorad;
using Catch::Approx;

namespace
{
	RoiVoxels sample(const std::vector<double>& v)
	{
		RoiVoxels x;
		x.values = v;
		for (std::size_t n = 0; n < v.size(); ++n)
			x.coords.push_back({static_cast<long>(n), 0, 0});
		return x;
	}

	std::vector<NormalizationKind> all_kinds()
	{
		auto s = sweep_normalizations();
		return {s.begin(), s.end()};
	}
}

TEST_CASE("normalization names round-trip")
{
	for (const auto& k : sweep_normalizations())
		CHECK(parse_normalization(to_string(k)) == k);
	CHECK(to_string(NormalizationKind::gamma_correction(0.5)) == "gamma0.5");
	CHECK(to_string(NormalizationKind::gamma_correction(1.5)) == "gamma1.5");
	CHECK_THROWS_AS(parse_normalization("clahe"), ValidationError);
	CHECK_THROWS_AS(NormalizationKind::gamma_correction(0.0), ValidationError);
}

TEST_CASE("closed-form normalization values")
{
	CHECK(normalize_values({0, 2}, NormalizationKind::zscore()) == std::vector<double>{-1, 1});
	// 0.25 after scaling, raised to 0.5
	CHECK(normalize_values({0, 1, 4}, NormalizationKind::gamma_correction(0.5))[1] == Approx(0.5));
	CHECK(normalize_values({3, 5, 7}, NormalizationKind::minmax()) == std::vector<double>{0, 0.5, 1});
	CHECK(normalize_values({3, 5, 7}, NormalizationKind::none()) == std::vector<double>{3, 5, 7});
}

TEST_CASE("histogram equalization of a uniform sample is near identity")
{
	std::vector<double> v(256);
	for (int i = 0; i < 256; ++i)
		v[static_cast<std::size_t>(i)] = i / 255.0;
	const auto out = normalize_values(v, NormalizationKind::histeq());
	for (std::size_t i = 0; i < v.size(); ++i)
		CHECK(std::abs(out[i] - v[i]) <= 1.0 / 256 + 1e-12);
}

TEST_CASE("histogram equalization equals the empirical CDF oracle")
{
	Rng rng(12);
	std::normal_distribution<double> g(40, 15);
	std::vector<double> v(500);
	for (double& x : v)
		x = g(rng);
	const auto out = normalize_values(v, NormalizationKind::histeq());
	const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
	auto bin = [&](double x) { return std::min(255, static_cast<int>(std::floor((x - *mn) / (*mx - *mn) * 256))); };
	for (std::size_t i = 0; i < v.size(); ++i)
	{
		std::size_t below = 0;
		for (double y : v)
			below += bin(y) <= bin(v[i]);
		CHECK(out[i] == Approx(static_cast<double>(below) / v.size()).margin(1e-12));
	}
}

TEST_CASE("gamma 1 coincides with min-max")
{
	Rng rng(2);
	std::uniform_real_distribution<double> u(-50, 80);
	std::vector<double> v(100);
	for (double& x : v)
		x = u(rng);
	CHECK(normalize_values(v, NormalizationKind::gamma_correction(1.0)) == normalize_values(v, NormalizationKind::minmax()));
}

TEST_CASE("constant input is flagged and zeroed")
{
	for (const auto& k : all_kinds())
	{
		const auto r = normalize(sample({7, 7, 7}), k);
		if (k.method == NormalizationMethod::None)
		{
			CHECK_FALSE(r.degenerate);
			CHECK(r.voxels.values == std::vector<double>{7, 7, 7});
		}
		else
		{
			CHECK(r.degenerate);
			CHECK(r.voxels.values == std::vector<double>{0, 0, 0});
		}
	}
	CHECK_THROWS_AS(normalize(RoiVoxels{}, NormalizationKind::minmax()), ValidationError);

	// The mean of repeated 0.1 is not exactly 0.1.
	const auto z = normalize_values(std::vector<double>(7, 0.1), NormalizationKind::zscore());
	CHECK(z == std::vector<double>(7, 0.0));
}

TEST_CASE("context voxels share the ROI map and stay in range")
{
	RoiVoxels x = sample({10, 20, 30});
	x.context = VoxelBox{{0, 0, 0}, {5, 1, 1}, {0, 10, 20, 30, 100}};
	const auto r = normalize(x, NormalizationKind::minmax());
	CHECK(r.voxels.context->values == std::vector<double>{0, 0, 0.5, 1, 1});
}

TEST_CASE("normalizations are monotone and bounded on random samples")
{
	Rng rng(77);
	std::uniform_int_distribution<int> len(1, 60);
	std::uniform_real_distribution<double> u(-200, 300);
	std::bernoulli_distribution constant(0.1), ties(0.3);
	for (int t = 0; t < 1000; ++t)
	{
		std::vector<double> v(static_cast<std::size_t>(len(rng)));
		const double c = u(rng);
		for (double& x : v)
			x = constant(rng) ? c : (ties(rng) ? std::round(u(rng) / 50) * 50 : u(rng));
		for (const auto& k : all_kinds())
		{
			const auto out = normalize_values(v, k);
			for (std::size_t i = 0; i < v.size(); ++i)
				for (std::size_t j = 0; j < v.size(); ++j)
					if (v[i] <= v[j])
						REQUIRE(out[i] <= out[j]);
			if (k.method == NormalizationMethod::MinMax || k.method == NormalizationMethod::Gamma || k.method == NormalizationMethod::HistEq)
				for (double o : out)
					REQUIRE((o >= 0.0 && o <= 1.0));
			const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
			if (k.method == NormalizationMethod::ZScore && *mx > *mn)
			{
				double mean = 0, ss = 0;
				for (double o : out)
					mean += o;
				mean /= static_cast<double>(out.size());
				for (double o : out)
					ss += (o - mean) * (o - mean);
				REQUIRE(std::abs(mean) < 1e-9);
				REQUIRE(std::abs(std::sqrt(ss / static_cast<double>(out.size())) - 1.0) < 1e-9);
			}
		}
	}
}
