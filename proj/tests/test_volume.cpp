#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace fibrorad;
using Catch::Approx;

TEST_CASE("volume constructor rejects inconsistent grids")
{
	CHECK_THROWS_AS(Volume({0, 1, 1}, {1, 1, 1}, {0, 0, 0}, {}), ValidationError);
	CHECK_THROWS_AS(Volume({1, 1, 1}, {0, 1, 1}, {0, 0, 0}, {1.0}), ValidationError);
	CHECK_THROWS_WITH(Volume({2, 1, 1}, {1, 1, 1}, {0, 0, 0}, {1.0}), Catch::Matchers::ContainsSubstring("buffer length mismatch"));
	CHECK_THROWS_AS(Volume({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {std::nan("")}), ValidationError);
}

TEST_CASE("clip_hu clamps into the phase window")
{
	const Volume v({3, 1, 1}, {1, 1, 1}, {0, 0, 0}, {-50, 50, 150});
	CHECK(clip_hu(v, ContrastPhase::NC).voxels() == std::vector<double>{0, 50, 100});
	const Volume b({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {-10});
	CHECK(clip_hu(b, ContrastPhase::CE).voxels() == std::vector<double>{-10});
	const Volume inside({2, 1, 1}, {1, 1, 1}, {0, 0, 0}, {10, 90});
	CHECK(clip_hu(inside, ContrastPhase::NC) == inside);
	CHECK(clip_range(ContrastPhase::CE).low == -10.0);
	CHECK(clip_range(ContrastPhase::CE).high == 200.0);
}

TEST_CASE("clip_hu is idempotent")
{
	Rng rng(3);
	for (int t = 0; t < 20; ++t)
	{
		const Volume v = test::random_volume(rng, {5, 4, 3}, {1, 1, 1}, -400, 400);
		for (auto ph : {ContrastPhase::NC, ContrastPhase::CE})
			CHECK(clip_hu(clip_hu(v, ph), ph) == clip_hu(v, ph));
	}
}

TEST_CASE("resample keeps values when spacing already matches")
{
	Rng rng(1);
	const Volume v = test::random_volume(rng, {6, 5, 4}, {0.5, 0.5, 0.5}, -100, 100, false);
	CHECK(resample_trilinear(v, 0.5) == v);
}

TEST_CASE("resample of a constant volume is constant")
{
	const Volume v = Volume::filled({7, 3, 5}, {1.3, 0.7, 2.0}, {1, 2, 3}, 55.0);
	const Volume r = resample_trilinear(v, 0.5);
	for (double x : r.voxels())
		CHECK(x == Approx(55.0).margin(1e-12));
	CHECK(r.spacing() == Vec3{0.5, 0.5, 0.5});
	CHECK(r.dims() == Index3{static_cast<long>(std::ceil(7 * 1.3 / 0.5)), static_cast<long>(std::ceil(3 * 0.7 / 0.5)), 20});
}

TEST_CASE("resample of a ramp hits the linear midpoint")
{
	const Volume v({2, 1, 1}, {1, 1, 1}, {0, 0, 0}, {0, 100});
	const Volume r = resample_trilinear(v, 0.5);
	REQUIRE(r.dims()[0] == 4);
	CHECK(r.at(0, 0, 0) == Approx(0.0));
	CHECK(r.at(1, 0, 0) == Approx(50.0));
	CHECK(r.at(2, 0, 0) == Approx(100.0));
	CHECK(r.at(3, 0, 0) == Approx(100.0)); // clamp to edge
}

TEST_CASE("resample output stays within the input range")
{
	Rng rng(9);
	for (int t = 0; t < 10; ++t)
	{
		const Volume v = test::random_volume(rng, {6, 6, 4}, {0.8, 1.1, 2.0}, -100, 300, false);
		const auto [mn, mx] = std::minmax_element(v.voxels().begin(), v.voxels().end());
		for (double x : resample_trilinear(v, 0.5).voxels())
		{
			CHECK(x >= *mn - 1e-9);
			CHECK(x <= *mx + 1e-9);
		}
	}
}

TEST_CASE("resample rejects non-positive spacing")
{
	const Volume v = Volume::filled({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, 1.0);
	CHECK_THROWS_AS(resample_trilinear(v, 0.0), ValidationError);
	CHECK_THROWS_AS(resample_trilinear(v, -1.0), ValidationError);
}

TEST_CASE("crop_physical snaps outward and keeps positions")
{
	Rng rng(2);
	const Volume v = test::random_volume(rng, {10, 10, 10}, {1, 1, 2});
	const Volume c = crop_physical(v, {2.5, 3.0, 4.1}, {5.2, 6.0, 9.0});
	CHECK(c.dims() == Index3{5, 4, 4});
	CHECK(c.origin() == Vec3{2, 3, 4});
	CHECK(c.at(0, 0, 0) == v.at(2, 3, 2));
	CHECK(c.at(4, 3, 3) == v.at(6, 6, 5));
	CHECK_THROWS_AS(crop_physical(v, {50, 50, 50}, {40, 40, 40}), ValidationError);
}

TEST_CASE("read_volume inverts write_volume")
{
	test::TempDir dir("volume");
	Rng rng(5);
	const Volume v({3, 4, 5}, {0.123456789012345, 1.0 / 3.0, 2.5}, {-10.25, 1e-3, 7}, test::random_volume(rng, {3, 4, 5}, {1, 1, 1}, -1000, 1000).voxels());
	write_volume(v, dir / "a.mhd");
	CHECK(std::filesystem::exists(dir / "a.raw"));
	CHECK(read_volume(dir / "a.mhd") == v);

	const Volume c = Volume::filled({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, 55);
	write_volume(c, dir / "c.mhd");
	const Volume r = read_volume(dir / "c.mhd");
	CHECK(r.size() == 8);
	for (double x : r.voxels())
		CHECK(x == 55.0);
}

TEST_CASE("read_volume reports damaged files")
{
	test::TempDir dir("volume-bad");
	write_volume(Volume::filled({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, 1), dir / "v.mhd");
	std::filesystem::resize_file(dir / "v.raw", 10);
	CHECK_THROWS_WITH(read_volume(dir / "v.mhd"), Catch::Matchers::ContainsSubstring("buffer length mismatch"));

	std::ofstream(dir / "g.mhd") << "NDims = 3\nDimSize = 2 2\n";
	CHECK_THROWS_AS(read_volume(dir / "g.mhd"), ValidationError);
	std::ofstream(dir / "t.mhd") << "NDims = 3\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nOffset = 0 0 0\nElementType = MET_FLOAT\nElementDataFile = t.raw\n";
	CHECK_THROWS_AS(read_volume(dir / "t.mhd"), ValidationError);
	CHECK_THROWS_AS(read_volume(dir / "missing.mhd"), ValidationError);
}

TEST_CASE("write_volume rejects values outside int16")
{
	test::TempDir dir("volume-range");
	CHECK_THROWS_AS(write_volume(Volume::filled({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 40000), dir / "x.mhd"), ValidationError);
	CHECK_THROWS_AS(write_volume(Volume::filled({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 0.5), dir / "x.mhd"), ValidationError);
}
