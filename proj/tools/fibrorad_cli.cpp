#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fibrorad.hpp"

namespace
{
	using fibrorad::cli::RunConfig;

	struct Overrides
	{
		std::string config;
		std::string seed;
		std::string out;
		std::optional<unsigned> jobs;
		std::optional<std::string> configs;
		std::optional<int> experiments;
		std::optional<int> repeats;
	};

	RunConfig resolve(const Overrides& o)
	{
		RunConfig rc = o.config.empty() ? RunConfig{} : fibrorad::cli::load_run_config(o.config);
		fibrorad::cli::apply_env(rc);
		if (!o.seed.empty())
			rc.seed = fibrorad::cli::parse_seed(o.seed);
		if (!o.out.empty())
		{
			rc.out = o.out;
			rc.paths.reset();
		}
		if (o.jobs)
			rc.jobs = *o.jobs;
		if (o.configs)
			rc.configs = *o.configs;
		if (o.experiments)
			rc.experiments = *o.experiments;
		if (o.repeats)
			rc.repeats = *o.repeats;
		return rc;
	}
}

int main(int argc, char** argv)
{
	CLI::App app{"Radiomics liver-fibrosis experiment driver"};
	app.require_subcommand(1);
	Overrides o;
	app.add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
	app.add_option("--seed", o.seed, "master seed (overrides config and RUN_SEED)");
	app.add_option("--out", o.out, "workspace root");
	app.add_option("--jobs", o.jobs, "worker threads");
	app.add_option("--configs", o.configs, "axis filter, e.g. contrast=NC,model=logreg|rf");
	app.add_option("--experiments", o.experiments, "experiments per configuration");
	app.add_option("--repeats", o.repeats, "repeats for simple, baseline and audit");

	const char* names[] = {"phantom", "extract", "sweep", "rank", "simple", "baseline", "audit", "report"};
	const char* help[] = {"generate a phantom cohort", "extract radiomic features", "run the configuration sweep", "rank selected features",
	                      "curated simple models", "cube-texture baseline", "geometry confounder audit", "render result tables"};
	for (int i = 0; i < 8; ++i)
		app.add_subcommand(names[i], help[i])->fallthrough();

	try
	{
		app.parse(argc, argv);
	}
	catch (const CLI::CallForHelp& e)
	{
		return app.exit(e);
	}
	catch (const CLI::ParseError& e)
	{
		app.exit(e);
		return 2;
	}

	const std::string cmd = app.get_subcommands().front()->get_name();
	try
	{
		const RunConfig rc = resolve(o);
		namespace c = fibrorad::cli;
		if (cmd == "phantom")
			c::cmd_phantom(rc);
		else if (cmd == "extract")
			c::cmd_extract(rc);
		else if (cmd == "sweep")
		{
			const auto out = c::cmd_sweep(rc);
			std::size_t failed = 0;
			for (const auto& r : out.results)
				failed += !r.ok;
			std::cerr << "sweep: " << out.results.size() << " experiments, " << failed << " failed\n";
		}
		else if (cmd == "rank")
			c::cmd_rank(rc);
		else if (cmd == "simple")
			c::cmd_simple(rc);
		else if (cmd == "baseline")
			c::cmd_baseline(rc);
		else if (cmd == "audit")
			c::cmd_audit(rc);
		else
			std::cout << c::cmd_report(rc);
	}
	catch (const fibrorad::ValidationError& e)
	{
		std::cerr << "fibrorad " << cmd << ": " << e.what() << '\n';
		return 2;
	}
	catch (const std::exception& e)
	{
		std::cerr << "fibrorad " << cmd << ": " << e.what() << '\n';
		return 1;
	}
	return 0;
}
