#ifndef FIBRORAD_VOLUME_HPP
#define FIBRORAD_VOLUME_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fibrorad/common.hpp"

namespace fibrorad
{
	/// Dense 3D scalar grid in physical space. `origin` is the centre of voxel (0,0,0);
	/// voxel (i,j,k) sits at origin + (i*sx, j*sy, k*sz). Storage is x-fastest.
	/// Immutable once built: every operation below returns a new Volume.
	class Volume
	{
	public:
		Volume(Index3 dims, Vec3 spacing, Vec3 origin, std::vector<double> voxels)
			: dims_(dims), spacing_(spacing), origin_(origin), voxels_(std::move(voxels))
		{
			for (int a = 0; a < 3; ++a)
			{
				if (dims_[a] < 1)
					invalid("volume", "dimensions must be >= 1");
				if (!(spacing_[a] > 0.0) || !std::isfinite(spacing_[a]))
					invalid("volume", "spacing must be positive");
			}
			if (!all_finite(origin_))
				invalid("volume", "origin must be finite");
			if (voxels_.size() != static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]))
				invalid("volume", "buffer length mismatch");
			for (double v : voxels_)
				if (!std::isfinite(v))
					invalid("volume", "non-finite voxel value");
		}

		static Volume filled(Index3 dims, Vec3 spacing, Vec3 origin, double value)
		{
			return Volume(dims, spacing, origin, std::vector<double>(static_cast<std::size_t>(std::max(0L, dims[0] * dims[1] * dims[2])), value));
		}

		const Index3& dims() const noexcept { return dims_; }
		const Vec3& spacing() const noexcept { return spacing_; }
		const Vec3& origin() const noexcept { return origin_; }
		const std::vector<double>& voxels() const noexcept { return voxels_; }
		std::size_t size() const noexcept { return voxels_.size(); }

		std::size_t index(long i, long j, long k) const noexcept
		{
			return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k));
		}
		double at(long i, long j, long k) const noexcept { return voxels_[index(i, j, k)]; }

		Vec3 position(long i, long j, long k) const noexcept
		{
			return {origin_[0] + i * spacing_[0], origin_[1] + j * spacing_[1], origin_[2] + k * spacing_[2]};
		}

		bool operator==(const Volume&) const = default;

	private:
		Index3 dims_;
		Vec3 spacing_;
		Vec3 origin_;
		std::vector<double> voxels_;
	};

	enum class ContrastPhase
	{
		NC,
		CE
	};

	struct HuRange
	{
		double low;
		double high;
	};

	/// Attenuation window applied per acquisition phase.
	constexpr HuRange clip_range(ContrastPhase phase) noexcept
	{
		return phase == ContrastPhase::NC ? HuRange{0.0, 100.0} : HuRange{-10.0, 200.0};
	}

	inline std::string to_string(ContrastPhase p) { return p == ContrastPhase::NC ? "NC" : "CE"; }

	inline ContrastPhase parse_phase(std::string_view s)
	{
		if (s == "NC" || s == "nc")
			return ContrastPhase::NC;
		if (s == "CE" || s == "ce")
			return ContrastPhase::CE;
		invalid("volume", "unknown contrast phase '" + std::string(s) + "'");
	}

	inline Volume clip_hu(const Volume& v, ContrastPhase phase)
	{
		const auto range = clip_range(phase);
		std::vector<double> out(v.voxels());
		for (double& x : out)
			x = std::clamp(x, range.low, range.high);
		return Volume(v.dims(), v.spacing(), v.origin(), std::move(out));
	}

	/// Trilinear sample at a continuous voxel index; coordinates outside the grid clamp to the edge.
	inline double sample_trilinear(const Volume& v, double fi, double fj, double fk) noexcept
	{
		const auto& d = v.dims();
		const double c[3] = {std::clamp(fi, 0.0, double(d[0] - 1)), std::clamp(fj, 0.0, double(d[1] - 1)),
		                     std::clamp(fk, 0.0, double(d[2] - 1))};
		long i0[3];
		double t[3];
		for (int a = 0; a < 3; ++a)
		{
			i0[a] = std::min<long>(static_cast<long>(std::floor(c[a])), d[a] - 1);
			t[a] = c[a] - i0[a];
		}
		const long i1[3] = {std::min(i0[0] + 1, d[0] - 1), std::min(i0[1] + 1, d[1] - 1), std::min(i0[2] + 1, d[2] - 1)};
		double acc = 0.0;
		for (int dz = 0; dz < 2; ++dz)
		{
			const double wz = dz ? t[2] : 1.0 - t[2];
			if (wz == 0.0)
				continue;
			const long k = dz ? i1[2] : i0[2];
			for (int dy = 0; dy < 2; ++dy)
			{
				const double wy = dy ? t[1] : 1.0 - t[1];
				if (wy == 0.0)
					continue;
				const long j = dy ? i1[1] : i0[1];
				for (int dx = 0; dx < 2; ++dx)
				{
					const double wx = dx ? t[0] : 1.0 - t[0];
					if (wx == 0.0)
						continue;
					acc += wx * wy * wz * v.at(dx ? i1[0] : i0[0], j, k);
				}
			}
		}
		return acc;
	}

	/// Isotropic trilinear resampling. The output grid keeps the input origin (first voxel
	/// centre) and covers the physical extent n*s with ceil(n*s/target) samples per axis.
	inline Volume resample_trilinear(const Volume& v, double target_spacing = 0.5)
	{
		if (!(target_spacing > 0.0) || !std::isfinite(target_spacing))
			invalid("volume", "target spacing must be positive");
		Index3 nd{};
		double scale[3];
		for (int a = 0; a < 3; ++a)
		{
			const double extent = v.dims()[a] * v.spacing()[a];
			nd[a] = std::max(1L, static_cast<long>(std::ceil(extent / target_spacing - 1e-9)));
			scale[a] = target_spacing / v.spacing()[a];
		}
		std::vector<double> out(static_cast<std::size_t>(nd[0] * nd[1] * nd[2]));
		std::size_t n = 0;
		for (long k = 0; k < nd[2]; ++k)
			for (long j = 0; j < nd[1]; ++j)
				for (long i = 0; i < nd[0]; ++i)
					out[n++] = sample_trilinear(v, i * scale[0], j * scale[1], k * scale[2]);
		return Volume(nd, {target_spacing, target_spacing, target_spacing}, v.origin(), std::move(out));
	}

	/// Sub-volume covering the physical box [lo, hi] (clamped to the grid), snapped outward to voxels.
	inline Volume crop_physical(const Volume& v, const Vec3& lo, const Vec3& hi)
	{
		Index3 a{}, b{};
		for (int ax = 0; ax < 3; ++ax)
		{
			const double first = v.origin()[ax], last = v.origin()[ax] + (v.dims()[ax] - 1) * v.spacing()[ax];
			if (!(lo[ax] <= hi[ax]) || hi[ax] < first || lo[ax] > last)
				invalid("volume", "crop box outside volume");
			a[ax] = std::clamp<long>(static_cast<long>(std::floor((lo[ax] - v.origin()[ax]) / v.spacing()[ax])), 0, v.dims()[ax] - 1);
			b[ax] = std::clamp<long>(static_cast<long>(std::ceil((hi[ax] - v.origin()[ax]) / v.spacing()[ax])), 0, v.dims()[ax] - 1);
		}
		const Index3 nd{b[0] - a[0] + 1, b[1] - a[1] + 1, b[2] - a[2] + 1};
		std::vector<double> out;
		out.reserve(static_cast<std::size_t>(nd[0] * nd[1] * nd[2]));
		for (long k = a[2]; k <= b[2]; ++k)
			for (long j = a[1]; j <= b[1]; ++j)
				for (long i = a[0]; i <= b[0]; ++i)
					out.push_back(v.at(i, j, k));
		return Volume(nd, v.spacing(), v.position(a[0], a[1], a[2]), std::move(out));
	}

	// ---- MetaImage-style I/O -------------------------------------------------

	namespace detail
	{
		inline std::string trim(std::string_view s)
		{
			const auto b = s.find_first_not_of(" \t\r\n");
			if (b == std::string_view::npos)
				return {};
			const auto e = s.find_last_not_of(" \t\r\n");
			return std::string(s.substr(b, e - b + 1));
		}

		template<typename T, std::size_t N>
		std::array<T, N> parse_triple(const std::map<std::string, std::string>& h, const std::string& key)
		{
			auto it = h.find(key);
			if (it == h.end())
				invalid("volume", "missing header key '" + key + "'");
			std::istringstream in(it->second);
			std::array<T, N> out{};
			for (auto& x : out)
				if (!(in >> x))
					invalid("volume", "garbled header value for '" + key + "'");
			std::string rest;
			if (in >> rest)
				invalid("volume", "garbled header value for '" + key + "'");
			return out;
		}

		inline std::map<std::string, std::string> read_header(const std::filesystem::path& path)
		{
			std::ifstream in(path);
			if (!in)
				invalid("volume", "cannot open '" + path.string() + "'");
			std::map<std::string, std::string> header;
			std::string line;
			while (std::getline(in, line))
			{
				if (trim(line).empty())
					continue;
				const auto eq = line.find('=');
				if (eq == std::string::npos)
					invalid("volume", "garbled header line '" + line + "'");
				header[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
			}
			return header;
		}

		struct RawGrid
		{
			Index3 dims;
			Vec3 spacing;
			Vec3 origin;
			std::vector<std::int16_t> data;
		};

		inline RawGrid read_raw_grid(const std::filesystem::path& path)
		{
			const auto header = read_header(path);
			auto ndims = header.find("NDims");
			if (ndims == header.end() || ndims->second != "3")
				invalid("volume", "NDims must be 3");
			auto type = header.find("ElementType");
			if (type == header.end())
				invalid("volume", "missing header key 'ElementType'");
			if (type->second != "MET_SHORT")
				invalid("volume", "unsupported element type '" + type->second + "'");
			if (auto msb = header.find("BinaryDataByteOrderMSB"); msb != header.end() && msb->second != "False")
				invalid("volume", "big-endian data unsupported");
			if (auto comp = header.find("CompressedData"); comp != header.end() && comp->second != "False")
				invalid("volume", "compressed data unsupported");
			auto file = header.find("ElementDataFile");
			if (file == header.end() || file->second.empty())
				invalid("volume", "missing header key 'ElementDataFile'");

			RawGrid g;
			g.dims = parse_triple<long, 3>(header, "DimSize");
			g.spacing = parse_triple<double, 3>(header, "ElementSpacing");
			g.origin = header.count("Offset") ? parse_triple<double, 3>(header, "Offset") : Vec3{0, 0, 0};
			for (long d : g.dims)
				if (d < 1)
					invalid("volume", "DimSize must be >= 1");

			const auto raw_path = path.parent_path() / file->second;
			std::ifstream raw(raw_path, std::ios::binary);
			if (!raw)
				invalid("volume", "cannot open data file '" + raw_path.string() + "'");
			const std::size_t count = static_cast<std::size_t>(g.dims[0] * g.dims[1] * g.dims[2]);
			std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
			if (bytes.size() != count * 2)
				invalid("volume", "buffer length mismatch");
			g.data.resize(count);
			for (std::size_t n = 0; n < count; ++n)
				g.data[n] = static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[2 * n]) | (static_cast<std::uint16_t>(bytes[2 * n + 1]) << 8));
			return g;
		}

		inline void write_raw_grid(const std::filesystem::path& path, const Index3& dims, const Vec3& spacing, const Vec3& origin,
		                           const std::vector<std::int16_t>& data)
		{
			auto raw_path = path;
			raw_path.replace_extension(".raw");
			{
				std::ofstream out(path);
				if (!out)
					fail("volume", "cannot write '" + path.string() + "'");
				out << "ObjectType = Image\n"
				    << "NDims = 3\n"
				    << "BinaryData = True\n"
				    << "BinaryDataByteOrderMSB = False\n"
				    << "DimSize = " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n'
				    << "ElementSpacing = " << format_double(spacing[0]) << ' ' << format_double(spacing[1]) << ' ' << format_double(spacing[2]) << '\n'
				    << "Offset = " << format_double(origin[0]) << ' ' << format_double(origin[1]) << ' ' << format_double(origin[2]) << '\n'
				    << "ElementType = MET_SHORT\n"
				    << "ElementDataFile = " << raw_path.filename().string() << '\n';
				if (!out)
					fail("volume", "I/O failure writing '" + path.string() + "'");
			}
			std::vector<unsigned char> bytes(data.size() * 2);
			for (std::size_t n = 0; n < data.size(); ++n)
			{
				const auto u = static_cast<std::uint16_t>(data[n]);
				bytes[2 * n] = static_cast<unsigned char>(u & 0xff);
				bytes[2 * n + 1] = static_cast<unsigned char>(u >> 8);
			}
			std::ofstream raw(raw_path, std::ios::binary);
			raw.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
			if (!raw)
				fail("volume", "I/O failure writing '" + raw_path.string() + "'");
		}
	}

	inline Volume read_volume(const std::filesystem::path& path)
	{
		auto g = detail::read_raw_grid(path);
		std::vector<double> values(g.data.begin(), g.data.end());
		return Volume(g.dims, g.spacing, g.origin, std::move(values));
	}

	/// Writes `path` (header) plus a sibling `.raw` file. Values must be integral and
	/// representable as int16 since the on-disk element type is MET_SHORT.
	inline void write_volume(const Volume& v, const std::filesystem::path& path)
	{
		std::vector<std::int16_t> data(v.size());
		for (std::size_t n = 0; n < v.size(); ++n)
		{
			const double x = v.voxels()[n];
			if (x != std::round(x) || x < std::numeric_limits<std::int16_t>::min() || x > std::numeric_limits<std::int16_t>::max())
				invalid("volume", "value not representable as MET_SHORT");
			data[n] = static_cast<std::int16_t>(x);
		}
		detail::write_raw_grid(path, v.dims(), v.spacing(), v.origin(), data);
	}
}

#endif
