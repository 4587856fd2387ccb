#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "support.hpp"

using namespace fibrorad;

TEST_CASE("auc on small examples")
{
	CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
	CHECK(auc(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 0, 1, 1}) == 1.0);
	CHECK(auc(std::vector<double>{2, 2, 2, 2}, std::vector<int>{0, 1, 0, 1}) == 0.5);
	CHECK(auc(std::vector<double>{4, 3, 2, 1}, std::vector<int>{0, 0, 1, 1}) == 0.0);
}

TEST_CASE("auc rejects single-class and mismatched input")
{
	CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), ValidationError);
	CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, std::vector<int>{1}), ValidationError);
}

TEST_CASE("auc agrees with pair counting, negation and monotone transforms")
{
	Rng rng(21);
	std::uniform_int_distribution<int> len(2, 50), lvl(0, 6), bit(0, 1);
	for (int t = 0; t < 1000; ++t)
	{
		const int n = len(rng);
		std::vector<double> s(static_cast<std::size_t>(n));
		std::vector<int> y(static_cast<std::size_t>(n));
		for (int i = 0; i < n; ++i)
		{
			s[static_cast<std::size_t>(i)] = lvl(rng) * 0.25;
			y[static_cast<std::size_t>(i)] = bit(rng);
		}
		y[0] = 0;
		y[1] = 1;
		const double a = auc(s, y);
		REQUIRE(std::abs(a - oracle::auc_pairs(s, y)) <= 1e-12);
		std::vector<double> neg(s), mono(s);
		for (std::size_t i = 0; i < s.size(); ++i)
		{
			neg[i] = -s[i];
			mono[i] = std::exp(3 * s[i]) + 7;
		}
		REQUIRE(std::abs(a + auc(neg, y) - 1.0) <= 1e-12);
		REQUIRE(auc(mono, y) == a);
	}
}

TEST_CASE("sensitivity and specificity")
{
	const std::vector<double> s{0.2, 0.6, 0.4, 0.9};
	const std::vector<int> y{0, 0, 1, 1};
	auto r = sens_spec(s, y, 0.5);
	CHECK(r.sensitivity == 0.5);
	CHECK(r.specificity == 0.5);
	r = sens_spec(s, y, -1.0);
	CHECK(r.sensitivity == 1.0);
	CHECK(r.specificity == 0.0);
	r = sens_spec(s, y, 0.4);
	CHECK(r.sensitivity == 1.0);
	CHECK(r.specificity == 0.5);

	std::vector<double> many(21);
	std::vector<int> lab(21);
	for (int i = 0; i < 21; ++i)
	{
		many[static_cast<std::size_t>(i)] = i;
		lab[static_cast<std::size_t>(i)] = i < 11 ? 1 : 0;
	}
	r = sens_spec(many, lab, 1.0);
	CHECK(r.sensitivity == 10.0 / 11.0);
	CHECK(r.specificity == 0.0);

	r = sens_spec(std::vector<double>{0.3, 0.7}, std::vector<int>{1, 1}, 0.5);
	CHECK(r.sensitivity == 0.5);
	CHECK(std::isnan(r.specificity));
	CHECK_THROWS_AS(sens_spec(std::vector<double>{0.3}, std::vector<int>{2}, 0.5), ValidationError);
}

TEST_CASE("flipping labels swaps sensitivity and specificity")
{
	Rng rng(22);
	std::uniform_real_distribution<double> u(0, 1);
	for (int t = 0; t < 200; ++t)
	{
		std::vector<double> s(30), neg(30);
		std::vector<int> y(30), flip(30);
		for (std::size_t i = 0; i < 30; ++i)
		{
			s[i] = u(rng);
			neg[i] = -s[i];
			y[i] = i % 3 == 0;
			flip[i] = 1 - y[i];
		}
		// No score equals the threshold, so >= and > coincide.
		const double thr = 0.5;
		const auto a = sens_spec(s, y, thr);
		const auto b = sens_spec(neg, flip, -thr);
		REQUIRE(a.sensitivity == b.specificity);
		REQUIRE(a.specificity == b.sensitivity);
	}
}

TEST_CASE("normal confidence interval")
{
	const auto one = ci_normal(std::vector<double>{0.7});
	CHECK(one.mean == 0.7);
	CHECK(one.ci_low == 0.7);
	CHECK(one.ci_high == 0.7);
	CHECK(one.n == 1);
	const auto two = ci_normal(std::vector<double>{0.6, 0.8});
	CHECK(two.mean == Catch::Approx(0.7));
	const double half = 1.96 * std::sqrt(0.02) / std::sqrt(2.0);
	CHECK(two.ci_low == Catch::Approx(0.7 - half));
	CHECK(two.ci_high == Catch::Approx(0.7 + half));
	const auto flat = ci_normal(std::vector<double>(5, 0.9));
	CHECK(flat.ci_high - flat.ci_low == 0.0);
	CHECK_THROWS_AS(ci_normal(std::vector<double>{}), ValidationError);
}
