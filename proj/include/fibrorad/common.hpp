#ifndef FIBRORAD_COMMON_HPP
#define FIBRORAD_COMMON_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fibrorad
{
	/// Base error for everything the library throws on bad data or failed computation.
	class Error : public std::runtime_error
	{
	public:
		using std::runtime_error::runtime_error;
	};

	/// Raised when caller-supplied input (parameters, files, configs) fails validation.
	/// The CLI maps this to exit code 2.
	class ValidationError : public Error
	{
	public:
		using Error::Error;
	};

	[[noreturn]] inline void fail(std::string_view module, std::string_view what)
	{
		throw Error(std::string(module) + ": " + std::string(what));
	}

	[[noreturn]] inline void invalid(std::string_view module, std::string_view what)
	{
		throw ValidationError(std::string(module) + ": " + std::string(what));
	}

	/// Seeded generator used everywhere; never seeded from the clock.
	using Rng = std::mt19937_64;

	using Vec3 = std::array<double, 3>;
	using Index3 = std::array<long, 3>;

	inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
	inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
	inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
	inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
	inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
	inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

	inline bool all_finite(const Vec3& a)
	{
		return std::isfinite(a[0]) && std::isfinite(a[1]) && std::isfinite(a[2]);
	}

	/// splitmix64 finalizer; the mixing step used for every derived seed.
	constexpr std::uint64_t mix64(std::uint64_t z) noexcept
	{
		z += 0x9e3779b97f4a7c15ULL;
		z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
		z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
		return z ^ (z >> 31);
	}

	/// Stable seed derivation: depends only on the arguments, never on call order.
	template<typename... Ts>
	constexpr std::uint64_t derive_seed(std::uint64_t base, Ts... parts) noexcept
	{
		std::uint64_t h = mix64(base);
		((h = mix64(h ^ static_cast<std::uint64_t>(parts))), ...);
		return h;
	}

	/// FNV-1a, used for stream tags and manifest hashes.
	constexpr std::uint64_t fnv1a(std::string_view s) noexcept
	{
		std::uint64_t h = 0xcbf29ce484222325ULL;
		for (unsigned char c : s)
		{
			h ^= c;
			h *= 0x100000001b3ULL;
		}
		return h;
	}

	inline std::string hex64(std::uint64_t v)
	{
		char buf[17];
		std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
		return buf;
	}

	/// Decimal text with 17 significant digits (round-trips every double).
	inline std::string format_double(double v)
	{
		char buf[40];
		std::snprintf(buf, sizeof buf, "%.17g", v);
		return buf;
	}

	/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown
	/// after all workers stop. Callers must not depend on execution order.
	template<typename Fn>
	void parallel_for(std::size_t n, unsigned jobs, Fn&& fn)
	{
		if (jobs <= 1 || n <= 1)
		{
			for (std::size_t i = 0; i < n; ++i)
				fn(i);
			return;
		}
		std::atomic<std::size_t> next{0};
		std::exception_ptr error;
		std::mutex error_mutex;
		auto worker = [&] {
			for (;;)
			{
				std::size_t i = next.fetch_add(1);
				if (i >= n)
					return;
				try
				{
					fn(i);
				}
				catch (...)
				{
					std::lock_guard lock(error_mutex);
					if (!error)
						error = std::current_exception();
					next.store(n);
				}
			}
		};
		std::vector<std::thread> pool;
		const unsigned count = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
		pool.reserve(count);
		for (unsigned t = 0; t < count; ++t)
			pool.emplace_back(worker);
		for (auto& th : pool)
			th.join();
		if (error)
			std::rethrow_exception(error);
	}
}

#endif
