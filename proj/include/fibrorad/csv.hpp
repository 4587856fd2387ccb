#ifndef FIBRORAD_CSV_HPP
#define FIBRORAD_CSV_HPP

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "fibrorad/common.hpp"

// Minimal comma-separated tables. Fields never contain commas, quotes or newlines
// (ids and feature names are restricted), so no quoting is performed.
namespace fibrorad::csv
{
	using Row = std::vector<std::string>;

	inline Row split(std::string_view line)
	{
		Row out;
		std::size_t start = 0;
		for (;;)
		{
			const auto pos = line.find(',', start);
			out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
			if (pos == std::string_view::npos)
				break;
			start = pos + 1;
		}
		if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
			out.back().pop_back();
		return out;
	}

	struct Table
	{
		Row header;
		std::vector<Row> rows;

		std::size_t column(std::string_view name) const
		{
			for (std::size_t c = 0; c < header.size(); ++c)
				if (header[c] == name)
					return c;
			invalid("csv", "missing column '" + std::string(name) + "'");
		}
	};

	inline Table read(const std::filesystem::path& path)
	{
		std::ifstream in(path);
		if (!in)
			invalid("csv", "cannot open '" + path.string() + "'");
		Table t;
		std::string line;
		if (!std::getline(in, line))
			invalid("csv", "empty file '" + path.string() + "'");
		t.header = split(line);
		while (std::getline(in, line))
		{
			if (line.empty() || line == "\r")
				continue;
			auto row = split(line);
			if (row.size() != t.header.size())
				invalid("csv", "ragged row in '" + path.string() + "'");
			t.rows.push_back(std::move(row));
		}
		return t;
	}

	inline std::string join(const Row& row)
	{
		std::string out;
		for (std::size_t i = 0; i < row.size(); ++i)
		{
			if (i)
				out += ',';
			out += row[i];
		}
		return out;
	}

	inline void write(const std::filesystem::path& path, const Table& t)
	{
		if (path.has_parent_path())
			std::filesystem::create_directories(path.parent_path());
		std::ofstream out(path, std::ios::binary);
		if (!out)
			fail("csv", "cannot write '" + path.string() + "'");
		out << join(t.header) << '\n';
		for (const auto& r : t.rows)
			out << join(r) << '\n';
		if (!out)
			fail("csv", "I/O failure writing '" + path.string() + "'");
	}

	inline double to_double(const std::string& s)
	{
		char* end = nullptr;
		const double v = std::strtod(s.c_str(), &end);
		if (s.empty() || end != s.c_str() + s.size())
			invalid("csv", "not a number: '" + s + "'");
		return v;
	}

	inline long to_long(const std::string& s)
	{
		char* end = nullptr;
		const long v = std::strtol(s.c_str(), &end, 10);
		if (s.empty() || end != s.c_str() + s.size())
			invalid("csv", "not an integer: '" + s + "'");
		return v;
	}
}

#endif
