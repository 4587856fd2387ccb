#ifndef FIBRORAD_LEARNERS_HPP
#define FIBRORAD_LEARNERS_HPP

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fibrorad/common.hpp"
#include "fibrorad/learners/forest.hpp"
#include "fibrorad/learners/linear.hpp"
#include "fibrorad/learners/svm.hpp"
#include "fibrorad/metrics.hpp"

namespace fibrorad
{
	enum class ModelKind
	{
		LogisticRegression,
		RandomForest,
		Svm,
		LinearSgd
	};

	inline constexpr std::array<ModelKind, 4> kAllModels{ModelKind::LogisticRegression, ModelKind::RandomForest, ModelKind::Svm, ModelKind::LinearSgd};

	inline std::string to_string(ModelKind k)
	{
		switch (k)
		{
		case ModelKind::LogisticRegression: return "logreg";
		case ModelKind::RandomForest: return "rf";
		case ModelKind::Svm: return "svm";
		case ModelKind::LinearSgd: return "sgd";
		}
		return "?";
	}

	inline ModelKind parse_model(std::string_view s)
	{
		for (ModelKind k : kAllModels)
			if (to_string(k) == s)
				return k;
		invalid("learners", "unknown model '" + std::string(s) + "'");
	}

	enum class LogRegSolver
	{
		Lbfgs,
		NewtonCg,
		Sag,
		Saga
	};
	enum class MaxFeaturesRule
	{
		Auto,
		Sqrt
	};
	using svm::KernelKind;
	using linear::SgdLossKind;

	struct LogRegParams
	{
		LogRegSolver solver = LogRegSolver::Lbfgs;
		double C = 1.0;
		bool operator==(const LogRegParams&) const = default;
	};
	struct ForestParams
	{
		int trees = 100;
		MaxFeaturesRule max_features = MaxFeaturesRule::Auto;
		int max_depth = 0; ///< 0 = unlimited
		bool operator==(const ForestParams&) const = default;
	};
	struct SvmParams
	{
		KernelKind kernel = KernelKind::Linear;
		double C = 1.0;
		bool operator==(const SvmParams&) const = default;
	};
	struct SgdParams
	{
		double alpha = 1e-4;
		SgdLossKind loss = SgdLossKind::Logistic;
		bool operator==(const SgdParams&) const = default;
	};

	using HyperParams = std::variant<LogRegParams, ForestParams, SvmParams, SgdParams>;

	inline ModelKind kind_of(const HyperParams& h) { return static_cast<ModelKind>(h.index()); }

	/// Candidate grids, enumerated in a fixed order.
	inline std::vector<HyperParams> hyper_grid(ModelKind kind)
	{
		std::vector<HyperParams> g;
		switch (kind)
		{
		case ModelKind::LogisticRegression:
			for (LogRegSolver s : {LogRegSolver::Lbfgs, LogRegSolver::NewtonCg, LogRegSolver::Sag, LogRegSolver::Saga})
				for (double C : {0.5, 1.0, 1.5})
					g.emplace_back(LogRegParams{s, C});
			break;
		case ModelKind::RandomForest:
			for (int t : {50, 100, 200})
				for (MaxFeaturesRule r : {MaxFeaturesRule::Auto, MaxFeaturesRule::Sqrt})
					for (int d : {0, 5, 100})
						g.emplace_back(ForestParams{t, r, d});
			break;
		case ModelKind::Svm:
			for (KernelKind k : {KernelKind::Linear, KernelKind::Poly3, KernelKind::Rbf})
				for (double C : {0.5, 1.0, 1.5})
					g.emplace_back(SvmParams{k, C});
			break;
		case ModelKind::LinearSgd:
			for (double a : {1e-4, 1e-5})
				for (SgdLossKind l : {SgdLossKind::Logistic, SgdLossKind::ModifiedHuber})
					g.emplace_back(SgdParams{a, l});
			break;
		}
		return g;
	}

	inline std::string to_string(LogRegSolver s)
	{
		constexpr const char* names[] = {"lbfgs", "newton-cg", "sag", "saga"};
		return names[static_cast<int>(s)];
	}
	inline std::string to_string(MaxFeaturesRule r) { return r == MaxFeaturesRule::Auto ? "auto" : "sqrt"; }
	inline std::string to_string(KernelKind k)
	{
		constexpr const char* names[] = {"linear", "poly", "rbf"};
		return names[static_cast<int>(k)];
	}
	inline std::string to_string(SgdLossKind l) { return l == SgdLossKind::Logistic ? "log" : "modified_huber"; }

	namespace detail
	{
		template <class E, std::size_t N>
		E parse_enum(std::string_view s, const std::array<E, N>& all, const char* what)
		{
			for (E e : all)
				if (to_string(e) == s)
					return e;
			invalid("learners", std::string("unknown ") + what + " '" + std::string(s) + "'");
		}
	}

	inline nlohmann::json to_json(const HyperParams& h)
	{
		return std::visit(
		    [](const auto& p) -> nlohmann::json {
			    using P = std::decay_t<decltype(p)>;
			    if constexpr (std::is_same_v<P, LogRegParams>)
				    return {{"solver", to_string(p.solver)}, {"C", p.C}};
			    else if constexpr (std::is_same_v<P, ForestParams>)
				    return {{"trees", p.trees}, {"max_features", to_string(p.max_features)}, {"max_depth", p.max_depth}};
			    else if constexpr (std::is_same_v<P, SvmParams>)
				    return {{"kernel", to_string(p.kernel)}, {"C", p.C}};
			    else
				    return {{"alpha", p.alpha}, {"loss", to_string(p.loss)}};
		    },
		    h);
	}

	inline HyperParams hyper_from_json(ModelKind kind, const nlohmann::json& j)
	{
		switch (kind)
		{
		case ModelKind::LogisticRegression:
			return LogRegParams{detail::parse_enum(j.at("solver").get<std::string>(),
			                                       std::array{LogRegSolver::Lbfgs, LogRegSolver::NewtonCg, LogRegSolver::Sag, LogRegSolver::Saga}, "solver"),
			                    j.at("C").get<double>()};
		case ModelKind::RandomForest:
			return ForestParams{j.at("trees").get<int>(),
			                    detail::parse_enum(j.at("max_features").get<std::string>(), std::array{MaxFeaturesRule::Auto, MaxFeaturesRule::Sqrt}, "rule"),
			                    j.at("max_depth").get<int>()};
		case ModelKind::Svm:
			return SvmParams{detail::parse_enum(j.at("kernel").get<std::string>(), std::array{KernelKind::Linear, KernelKind::Poly3, KernelKind::Rbf}, "kernel"),
			                 j.at("C").get<double>()};
		case ModelKind::LinearSgd:
			return SgdParams{j.at("alpha").get<double>(),
			                 detail::parse_enum(j.at("loss").get<std::string>(), std::array{SgdLossKind::Logistic, SgdLossKind::ModifiedHuber}, "loss")};
		}
		invalid("learners", "unknown model kind");
	}

	/// Immutable fitted model. Scores are probabilities (threshold 0.5) except for SVM,
	/// whose decision values threshold at 0.
	struct TrainedModel
	{
		HyperParams params;
		std::vector<std::string> schema;
		std::uint64_t seed = 0;
		std::variant<linear::LinearModel, forest::Forest, svm::KernelMachine> fitted;
		Eigen::VectorXd importance;

		ModelKind kind() const { return kind_of(params); }
		double threshold() const { return kind() == ModelKind::Svm ? 0.0 : 0.5; }

		Eigen::VectorXd raw_scores(const Eigen::MatrixXd& X) const
		{
			Eigen::VectorXd s(X.rows());
			if (const auto* lm = std::get_if<linear::LinearModel>(&fitted))
			{
				s = lm->decision(X);
				if (lm->sigmoid_output)
					for (Eigen::Index i = 0; i < s.size(); ++i)
						s[i] = linear::sigmoid(s[i]);
			}
			else if (const auto* f = std::get_if<forest::Forest>(&fitted))
				for (Eigen::Index i = 0; i < X.rows(); ++i)
					s[i] = f->predict(X.row(i));
			else
			{
				const auto& km = std::get<svm::KernelMachine>(fitted);
				for (Eigen::Index i = 0; i < X.rows(); ++i)
					s[i] = km.decision(X.row(i));
			}
			return s;
		}
	};

	inline Eigen::VectorXd predict_score(const TrainedModel& m, const Eigen::MatrixXd& X)
	{
		if (static_cast<std::size_t>(X.cols()) != m.schema.size())
			invalid("learners", "schema mismatch: model expects " + std::to_string(m.schema.size()) + " features, got " + std::to_string(X.cols()));
		if (!X.allFinite())
			invalid("learners", "non-finite input");
		return m.raw_scores(X);
	}

	/// Feature names must match the model schema exactly (same order).
	inline Eigen::VectorXd predict_score(const TrainedModel& m, const Eigen::MatrixXd& X, const std::vector<std::string>& names)
	{
		if (names != m.schema)
			invalid("learners", "schema mismatch: feature names differ from the training schema");
		return predict_score(m, X);
	}

	namespace detail
	{
		inline std::vector<std::string> default_schema(Eigen::Index p)
		{
			std::vector<std::string> s;
			for (Eigen::Index i = 0; i < p; ++i)
				s.push_back("x" + std::to_string(i));
			return s;
		}

		inline void check_training(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& schema)
		{
			if (X.rows() != y.size())
				invalid("learners", "X/y row mismatch");
			if (static_cast<std::size_t>(X.cols()) != schema.size())
				invalid("learners", "schema length differs from column count");
			if (X.cols() == 0)
				invalid("learners", "no features");
			if (!X.allFinite())
				invalid("learners", "non-finite training input");
			linear::require_two_classes(y, "learners");
		}

		/// Mean training-AUC drop over `shuffles` column permutations, floored at 0.
		inline Eigen::VectorXd permutation_importance(const TrainedModel& m, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::uint64_t seed,
		                                              int shuffles = 5)
		{
			std::vector<int> labels(static_cast<std::size_t>(y.size()));
			for (Eigen::Index i = 0; i < y.size(); ++i)
				labels[static_cast<std::size_t>(i)] = static_cast<int>(y[i]);
			const Eigen::VectorXd base_scores = m.raw_scores(X);
			const double base = auc(std::span<const double>(base_scores.data(), static_cast<std::size_t>(base_scores.size())), labels);
			Eigen::VectorXd imp = Eigen::VectorXd::Zero(X.cols());
			Eigen::MatrixXd Xp = X;
			std::vector<Eigen::Index> perm(static_cast<std::size_t>(X.rows()));
			for (Eigen::Index f = 0; f < X.cols(); ++f)
			{
				Rng rng(derive_seed(seed, 0x5045524dULL, f));
				double drop = 0.0;
				for (int s = 0; s < shuffles; ++s)
				{
					std::iota(perm.begin(), perm.end(), Eigen::Index{0});
					std::shuffle(perm.begin(), perm.end(), rng);
					for (Eigen::Index i = 0; i < X.rows(); ++i)
						Xp(i, f) = X(perm[static_cast<std::size_t>(i)], f);
					const Eigen::VectorXd sc = m.raw_scores(Xp);
					drop += base - auc(std::span<const double>(sc.data(), static_cast<std::size_t>(sc.size())), labels);
				}
				Xp.col(f) = X.col(f);
				imp[f] = std::max(0.0, drop / shuffles);
			}
			return imp;
		}
	}

	struct FitOptions
	{
		bool importance = true; ///< nonlinear SVM permutation importance is costly; skip when unused
		unsigned jobs = 1;
	};

	inline TrainedModel fit_model(const HyperParams& h, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> schema, std::uint64_t seed,
	                              const FitOptions& opt = {})
	{
		detail::check_training(X, y, schema);
		TrainedModel m{h, std::move(schema), seed, {}, {}};
		if (const auto* lr = std::get_if<LogRegParams>(&h))
		{
			const linear::LogisticObjective obj(X, y, lr->C);
			Eigen::VectorXd theta;
			switch (lr->solver)
			{
			case LogRegSolver::Lbfgs: theta = linear::solve_lbfgs(obj); break;
			case LogRegSolver::NewtonCg: theta = linear::solve_newton_cg(obj); break;
			case LogRegSolver::Sag: theta = linear::solve_stochastic_average(obj, false, seed); break;
			case LogRegSolver::Saga: theta = linear::solve_stochastic_average(obj, true, seed); break;
			}
			linear::LinearModel lm{theta.head(X.cols()), theta[X.cols()], true};
			m.importance = lm.w.cwiseAbs();
			m.fitted = std::move(lm);
		}
		else if (const auto* rf = std::get_if<ForestParams>(&h))
		{
			auto f = forest::fit_forest(X, y, {rf->trees, rf->max_depth, true}, seed, opt.jobs);
			m.importance = f.importance;
			m.fitted = std::move(f);
		}
		else if (const auto* sv = std::get_if<SvmParams>(&h))
		{
			auto km = svm::fit_smo(X, y, svm::Kernel::for_data(sv->kernel, X), sv->C);
			const bool lin = sv->kernel == KernelKind::Linear;
			if (lin)
				m.importance = km.linear_weights().cwiseAbs();
			m.fitted = std::move(km);
			if (!lin)
				m.importance = opt.importance ? detail::permutation_importance(m, X, y, seed) : Eigen::VectorXd::Zero(X.cols());
		}
		else
		{
			const auto& sg = std::get<SgdParams>(h);
			auto lm = linear::train_sgd_linear(X, y, sg.loss, sg.alpha, seed);
			m.importance = lm.w.cwiseAbs();
			m.fitted = std::move(lm);
		}
		return m;
	}

	inline TrainedModel train_logreg(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, LogRegSolver solver, double C, std::uint64_t seed = 0)
	{
		return fit_model(LogRegParams{solver, C}, X, y, detail::default_schema(X.cols()), seed);
	}
	inline TrainedModel train_rf(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int trees, MaxFeaturesRule rule, int max_depth, std::uint64_t seed)
	{
		return fit_model(ForestParams{trees, rule, max_depth}, X, y, detail::default_schema(X.cols()), seed);
	}
	inline TrainedModel train_svm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelKind kernel, double C, std::uint64_t seed)
	{
		return fit_model(SvmParams{kernel, C}, X, y, detail::default_schema(X.cols()), seed);
	}
	inline TrainedModel train_sgd(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, SgdLossKind loss, double alpha, std::uint64_t seed)
	{
		return fit_model(SgdParams{alpha, loss}, X, y, detail::default_schema(X.cols()), seed);
	}

	// ---- JSON ---------------------------------------------------------------------

	namespace detail
	{
		inline nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

		inline Eigen::VectorXd json_vec(const nlohmann::json& j)
		{
			const auto v = j.get<std::vector<double>>();
			return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
		}
	}

	inline nlohmann::json to_json(const TrainedModel& m)
	{
		nlohmann::json j;
		j["kind"] = to_string(m.kind());
		j["hyperparameters"] = to_json(m.params);
		j["schema"] = m.schema;
		j["seed"] = m.seed;
		j["importance"] = detail::vec_json(m.importance);
		nlohmann::json p;
		if (const auto* lm = std::get_if<linear::LinearModel>(&m.fitted))
			p = {{"w", detail::vec_json(lm->w)}, {"b", lm->b}, {"sigmoid", lm->sigmoid_output}};
		else if (const auto* f = std::get_if<forest::Forest>(&m.fitted))
		{
			p["trees"] = nlohmann::json::array();
			for (const auto& t : f->trees)
			{
				nlohmann::json nodes = nlohmann::json::array();
				for (const auto& n : t.nodes)
					nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
				p["trees"].push_back(std::move(nodes));
			}
		}
		else
		{
			const auto& km = std::get<svm::KernelMachine>(m.fitted);
			p["gamma"] = km.kernel.gamma;
			p["rho"] = km.rho;
			p["coef"] = detail::vec_json(km.coef);
			p["support"] = nlohmann::json::array();
			for (Eigen::Index i = 0; i < km.support.rows(); ++i)
				p["support"].push_back(detail::vec_json(km.support.row(i).transpose()));
		}
		j["parameters"] = std::move(p);
		return j;
	}

	inline TrainedModel model_from_json(const nlohmann::json& j)
	{
		try
		{
			TrainedModel m;
			const ModelKind kind = parse_model(j.at("kind").get<std::string>());
			m.params = hyper_from_json(kind, j.at("hyperparameters"));
			m.schema = j.at("schema").get<std::vector<std::string>>();
			m.seed = j.at("seed").get<std::uint64_t>();
			m.importance = detail::json_vec(j.at("importance"));
			const auto& p = j.at("parameters");
			const auto cols = static_cast<Eigen::Index>(m.schema.size());
			switch (kind)
			{
			case ModelKind::LogisticRegression:
			case ModelKind::LinearSgd:
				m.fitted = linear::LinearModel{detail::json_vec(p.at("w")), p.at("b").get<double>(), p.at("sigmoid").get<bool>()};
				break;
			case ModelKind::RandomForest:
			{
				forest::Forest f;
				for (const auto& tj : p.at("trees"))
				{
					forest::Tree t;
					for (const auto& nj : tj)
						t.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(), nj.at(3).get<int>(), nj.at(4).get<double>()});
					f.trees.push_back(std::move(t));
				}
				f.importance = m.importance;
				m.fitted = std::move(f);
				break;
			}
			case ModelKind::Svm:
			{
				svm::KernelMachine km;
				km.kernel = {std::get<SvmParams>(m.params).kernel, p.at("gamma").get<double>()};
				km.rho = p.at("rho").get<double>();
				km.coef = detail::json_vec(p.at("coef"));
				km.support.resize(km.coef.size(), cols);
				for (Eigen::Index i = 0; i < km.coef.size(); ++i)
					km.support.row(i) = detail::json_vec(p.at("support").at(static_cast<std::size_t>(i))).transpose();
				m.fitted = std::move(km);
				break;
			}
			}
			return m;
		}
		catch (const nlohmann::json::exception& e)
		{
			invalid("learners", std::string("malformed model JSON: ") + e.what());
		}
	}
}

#endif
