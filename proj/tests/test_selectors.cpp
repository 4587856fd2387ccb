#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace fibrorad;

namespace
{
	std::vector<std::string> names(Eigen::Index p)
	{
		std::vector<std::string> s;
		for (Eigen::Index j = 0; j < p; ++j)
			s.push_back("f" + std::to_string(j));
		return s;
	}

	Eigen::MatrixXd uniform(Rng& rng, Eigen::Index n, Eigen::Index p)
	{
		std::uniform_real_distribution<double> u(0, 1);
		Eigen::MatrixXd X(n, p);
		for (Eigen::Index i = 0; i < n; ++i)
			for (Eigen::Index j = 0; j < p; ++j)
				X(i, j) = u(rng);
		return X;
	}

	Eigen::VectorXd alternating(Eigen::Index n)
	{
		Eigen::VectorXd y(n);
		for (Eigen::Index i = 0; i < n; ++i)
			y[i] = static_cast<double>(i % 2);
		return y;
	}
}

TEST_CASE("selector names round-trip")
{
	for (SelectorKind k : kAllSelectors)
		CHECK(parse_selector(to_string(k)) == k);
	CHECK_THROWS_AS(parse_selector("rfe"), ValidationError);
}

TEST_CASE("binomial two-sided p-values")
{
	CHECK(binomial_two_sided(5, 10) == Catch::Approx(1.0));
	CHECK(binomial_two_sided(10, 10) == Catch::Approx(2.0 / 1024.0));
	CHECK(binomial_two_sided(0, 10) == Catch::Approx(2.0 / 1024.0));
	CHECK(binomial_two_sided(8, 10) == Catch::Approx(2.0 * 56.0 / 1024.0));
}

TEST_CASE("boruta confirms a planted feature and keeps shadows out")
{
	Rng rng(51);
	const Eigen::Index n = 200;
	Eigen::MatrixXd X = test::gaussian(rng, n, 21);
	const Eigen::VectorXd y = alternating(n);
	X.col(0) = y;
	BorutaOptions opt;
	opt.max_iter = 30;
	for (std::uint64_t seed = 0; seed < 3; ++seed)
	{
		const Selection s = select_boruta(X, y, names(21), seed, opt);
		CHECK_FALSE(s.fallback);
		CHECK(std::find(s.retained.begin(), s.retained.end(), 0u) != s.retained.end());
		for (std::size_t r : s.retained)
			CHECK(r < 21);
		CHECK(std::is_sorted(s.retained.begin(), s.retained.end()));
	}
	const Selection a = select_boruta(X, y, names(21), 7, opt);
	const Selection b = select_boruta(X, y, names(21), 7, opt);
	CHECK(a.retained == b.retained);
}

TEST_CASE("boruta on pure noise falls back to five features")
{
	Rng rng(52);
	const Eigen::MatrixXd X = test::gaussian(rng, 200, 20);
	BorutaOptions opt;
	opt.max_iter = 30;
	const Selection s = select_boruta(X, alternating(200), names(20), 1, opt);
	CHECK(s.confirmed <= 1);
	if (s.confirmed == 0)
	{
		CHECK(s.fallback);
		CHECK(s.retained.size() == 5);
	}
	CHECK_THROWS_AS(select_boruta(X.leftCols(1), alternating(200), names(1), 1, opt), ValidationError);
}

TEST_CASE("lasso coordinate descent matches soft thresholding on an orthonormal design")
{
	Rng rng(53);
	const Eigen::Index n = 64, p = 6;
	Eigen::MatrixXd Z = test::gaussian(rng, n, p);
	Z = Z.rowwise() - Z.colwise().mean();
	Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
	const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
	const Eigen::MatrixXd X = Q * std::sqrt(static_cast<double>(n));
	const Eigen::VectorXd y = test::gaussian(rng, n, 1).col(0) + 0.4 * X.col(1) - 0.2 * X.col(3);
	const Eigen::VectorXd yc = y.array() - y.mean();
	const Eigen::VectorXd ols = X.transpose() * yc / static_cast<double>(n);
	for (double lambda : {0.0, 0.05, 0.1, 0.3, 1.0})
	{
		const LassoFit fit = lasso_fit(X, y, lambda);
		for (Eigen::Index j = 0; j < p; ++j)
			CHECK(fit.w[j] == Catch::Approx(soft_threshold(ols[j], lambda)).margin(1e-6));
	}
	CHECK(soft_threshold(0.5, 0.2) == Catch::Approx(0.3));
	CHECK(soft_threshold(-0.5, 0.2) == Catch::Approx(-0.3));
	CHECK(soft_threshold(0.1, 0.2) == 0.0);
}

TEST_CASE("lasso objective never increases across sweeps")
{
	Rng rng(54);
	for (int t = 0; t < 20; ++t)
	{
		const Eigen::MatrixXd X = uniform(rng, 50, 12);
		const Eigen::VectorXd y = (X.col(0).array() + 0.3 * X.col(4).array() > 0.65).cast<double>();
		const double lmax = lasso_lambda_max(X, y);
		const LassoFit fit = lasso_fit(X, y, 0.05 * lmax, nullptr, 1e-7, 10000, true);
		REQUIRE(!fit.objective.empty());
		for (std::size_t i = 1; i < fit.objective.size(); ++i)
			REQUIRE(fit.objective[i] <= fit.objective[i - 1] + 1e-15);
	}
}

TEST_CASE("lasso at lambda max zeroes every weight and falls back")
{
	Rng rng(55);
	const Eigen::MatrixXd X = uniform(rng, 40, 10);
	const Eigen::VectorXd y = (X.col(2).array() > 0.5).cast<double>();
	const double lmax = lasso_lambda_max(X, y);
	LassoOptions opt;
	opt.lambda = lmax;
	const LassoSelection s = select_lasso_detailed(X, y, names(10), 1, opt);
	CHECK(s.weights.isZero());
	CHECK(s.selection.fallback);
	CHECK(s.selection.retained.size() == 5);
	CHECK(std::find(s.selection.retained.begin(), s.selection.retained.end(), 2u) != s.selection.retained.end());
	CHECK_FALSE(lasso_fit(X, y, 0.9 * lmax).w.isZero());
}

TEST_CASE("lasso keeps a planted column across seeds")
{
	for (std::uint64_t seed = 0; seed < 20; ++seed)
	{
		Rng rng(derive_seed(56, seed));
		const Eigen::MatrixXd X = uniform(rng, 100, 30);
		const Eigen::VectorXd y = (X.col(7).array() > 0.5).cast<double>();
		const Selection s = select_lasso(X, y, names(30), seed);
		CHECK_FALSE(s.fallback);
		CHECK(std::find(s.retained.begin(), s.retained.end(), 7u) != s.retained.end());
	}
}

TEST_CASE("pca component count and reconstruction")
{
	Rng rng(57);
	Eigen::MatrixXd R(30, 4);
	const Eigen::VectorXd t = test::gaussian(rng, 30, 1).col(0);
	for (Eigen::Index j = 0; j < 4; ++j)
		R.col(j) = t * (j + 1.0) + Eigen::VectorXd::Constant(30, j);
	CHECK(select_pca(R, names(4)).components.cols() == 1);

	const Eigen::MatrixXd iso = test::gaussian(rng, 10000, 3);
	CHECK(select_pca(iso, names(3)).components.cols() == 3);

	for (int trial = 0; trial < 20; ++trial)
	{
		Eigen::MatrixXd X = test::gaussian(rng, 80, 6);
		X.col(1) = X.col(0) * 2 + 0.1 * X.col(1);
		X.col(5) *= 0.05;
		const Selection s = select_pca(X, names(6));
		const Eigen::Index k = s.components.cols();
		const Eigen::MatrixXd I = s.components.transpose() * s.components;
		REQUIRE((I - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-9);
		const Eigen::MatrixXd Xc = X.rowwise() - s.mean.transpose();
		const Eigen::MatrixXd Z = apply_selection(s, X);
		REQUIRE(Z.cols() == k);
		const double err = (Xc - Z * s.components.transpose()).squaredNorm() / 79.0;
		const double discarded = s.eigenvalues.tail(6 - k).sum();
		REQUIRE(err == Catch::Approx(discarded).epsilon(1e-9).margin(1e-12));
		double acc = s.eigenvalues.head(k).sum() / s.eigenvalues.sum();
		REQUIRE(acc >= 0.95 - 1e-12);
		if (k > 1)
			REQUIRE(s.eigenvalues.head(k - 1).sum() / s.eigenvalues.sum() < 0.95);
	}
}

TEST_CASE("applying selections")
{
	Rng rng(58);
	const Cohort c = test::make_cohort(test::gaussian(rng, 20, 5), test::class_labels(10, 10));
	const Selection none = fit_selector(SelectorKind::None, c, 0);
	CHECK(apply_selection(none, c).X == c.X);
	CHECK(apply_selection(none, c).features == c.features);

	Selection keep = select_none(c.features);
	keep.kind = SelectorKind::Boruta;
	keep.retained = {1, 3};
	keep.output_names = {"f1", "f3"};
	const Cohort k = apply_selection(keep, c);
	CHECK(k.X.col(0) == c.X.col(1));
	CHECK(k.X.col(1) == c.X.col(3));

	const Selection pca = fit_selector(SelectorKind::Pca, c, 0);
	CHECK(apply_selection(pca, c).cols() == static_cast<std::size_t>(pca.components.cols()));
	CHECK(apply_selection(pca, c).features.front() == "pc1");

	CHECK_THROWS_AS(apply_selection(none, c.select_features({"f0", "f1"})), ValidationError);
	CHECK_THROWS_AS(apply_selection(pca, Eigen::MatrixXd(3, 4)), ValidationError);
	CHECK(to_json(pca).at("components").size() == static_cast<std::size_t>(pca.components.cols()));
	CHECK(to_json(keep).at("features") == nlohmann::json({"f1", "f3"}));
}
