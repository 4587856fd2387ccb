#ifndef FIBRORAD_TESTS_ORACLES_HPP
#define FIBRORAD_TESTS_ORACLES_HPP

#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "fibrorad.hpp"

// Independent reference implementations used to cross-check the library.
namespace fibrorad::oracle
{
	/// AUC by counting every positive/negative pair; ties score one half.
	inline double auc_pairs(std::span<const double> s, std::span<const int> y)
	{
		double wins = 0, pairs = 0;
		for (std::size_t i = 0; i < s.size(); ++i)
			for (std::size_t j = 0; j < s.size(); ++j)
				if (y[i] == 1 && y[j] == 0)
				{
					pairs += 1;
					wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
				}
		return wins / pairs;
	}

	struct Moments
	{
		long double energy, skewness, kurtosis;
	};

	/// Integer samples: central moments from exact integer power sums.
	inline Moments moments_exact(const std::vector<long>& x)
	{
		long long n = static_cast<long long>(x.size()), s1 = 0, s2 = 0, s3 = 0, s4 = 0;
		for (long v : x)
		{
			s1 += v;
			s2 += v * v;
			s3 += v * v * v;
			s4 += v * v * v * v;
		}
		// n^k * m_k as exact integers
		const long long c2 = n * s2 - s1 * s1;                                            // n^2 m2
		const long long c3 = n * n * s3 - 3 * n * s1 * s2 + 2 * s1 * s1 * s1;             // n^3 m3
		const long long c4 = n * n * n * s4 - 4 * n * n * s1 * s3 + 6 * n * s1 * s1 * s2 - 3 * s1 * s1 * s1 * s1; // n^4 m4
		Moments m{static_cast<long double>(s2), 0, 0};
		if (c2 > 0)
		{
			m.skewness = static_cast<long double>(c3) / std::pow(static_cast<long double>(c2), 1.5L);
			m.kurtosis = static_cast<long double>(c4) / (static_cast<long double>(c2) * static_cast<long double>(c2));
		}
		return m;
	}

	/// Zone matrix by union-find over all voxel pairs at Chebyshev distance 1 with equal level.
	inline std::map<std::pair<int, long>, long> zones_pairwise(const std::vector<int>& levels, const std::vector<Index3>& coords)
	{
		const std::size_t n = levels.size();
		std::vector<std::size_t> parent(n);
		std::iota(parent.begin(), parent.end(), std::size_t{0});
		auto find = [&](std::size_t a) {
			while (parent[a] != a)
				a = parent[a] = parent[parent[a]];
			return a;
		};
		for (std::size_t a = 0; a < n; ++a)
			for (std::size_t b = a + 1; b < n; ++b)
			{
				if (levels[a] != levels[b])
					continue;
				long cheb = 0;
				for (int ax = 0; ax < 3; ++ax)
					cheb = std::max(cheb, std::abs(coords[a][ax] - coords[b][ax]));
				if (cheb == 1)
					parent[find(a)] = find(b);
			}
		std::map<std::size_t, long> size;
		for (std::size_t a = 0; a < n; ++a)
			++size[find(a)];
		std::map<std::pair<int, long>, long> P;
		for (const auto& [root, sz] : size)
			++P[{levels[root], sz}];
		return P;
	}

	inline long double sahgle(const std::map<std::pair<int, long>, long>& P)
	{
		long double acc = 0, nz = 0;
		for (const auto& [k, c] : P)
		{
			acc += static_cast<long double>(c) * k.first * k.first / (static_cast<long double>(k.second) * k.second);
			nz += c;
		}
		return acc / nz;
	}

	/// Brute-force sum of squares.
	inline long double sum_squares(const std::vector<double>& v)
	{
		long double s = 0;
		for (double x : v)
			s += static_cast<long double>(x) * x;
		return s;
	}
}

#endif
