#include "thinlab/cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "thinlab/diagnostics.hpp"
#include "thinlab/errors.hpp"
#include "thinlab/matrix_io.hpp"
#include "thinlab/model_eval.hpp"
#include "thinlab/simulations.hpp"
#include "thinlab/thinning.hpp"

namespace thinlab::io {

namespace {

struct FamilyOptions {
    std::string name;
    double var = 0.0;
    double size = 0.0;
    double shape = 0.0;
    std::int64_t trials = 0;
    std::string cov_path;
};

void add_family_flags(CLI::App* cmd, FamilyOptions* opts) {
    cmd->add_option("--family", opts->name,
                    "poisson | gaussian | mvgaussian | negative_binomial | gamma | "
                    "exponential | binomial | multinomial")
        ->required();
    cmd->add_option("--var", opts->var, "known variance (gaussian)");
    cmd->add_option("--size", opts->size, "known size r (negative_binomial)");
    cmd->add_option("--shape", opts->shape, "known shape alpha (gamma)");
    cmd->add_option("--trials", opts->trials, "known trials r (binomial, multinomial)");
    cmd->add_option("--cov", opts->cov_path, "CSV covariance matrix (mvgaussian)");
}

Family build_family(const FamilyOptions& opts, int row_dims) {
    if (opts.name == "poisson") return fam::Poisson{};
    if (opts.name == "exponential") return fam::Exponential{};
    if (opts.name == "gaussian") {
        if (!(opts.var > 0.0)) throw UsageError("gaussian family needs --var > 0");
        return fam::Gaussian(opts.var);
    }
    if (opts.name == "mvgaussian") {
        if (opts.cov_path.empty()) throw UsageError("mvgaussian family needs --cov");
        return fam::MultivariateGaussian(read_matrix(opts.cov_path, ValueKind::real));
    }
    if (opts.name == "negative_binomial") {
        if (!(opts.size > 0.0)) throw UsageError("negative_binomial family needs --size > 0");
        return fam::NegativeBinomial(opts.size);
    }
    if (opts.name == "gamma") {
        if (!(opts.shape > 0.0)) throw UsageError("gamma family needs --shape > 0");
        return fam::Gamma(opts.shape);
    }
    if (opts.name == "binomial") {
        if (opts.trials < 1) throw UsageError("binomial family needs --trials >= 1");
        return fam::Binomial(opts.trials);
    }
    if (opts.name == "multinomial") {
        if (opts.trials < 1) throw UsageError("multinomial family needs --trials >= 1");
        if (row_dims < 2) throw UsageError("multinomial family needs a matrix with >= 2 columns");
        return fam::Multinomial(opts.trials, row_dims);
    }
    throw UsageError("unknown family: " + opts.name);
}

ValueKind input_kind(const std::string& family_name) {
    if (family_name == "poisson" || family_name == "negative_binomial" ||
        family_name == "binomial" || family_name == "multinomial")
        return ValueKind::count;
    return ValueKind::real;
}

nlohmann::json family_json(const FamilyOptions& opts) {
    nlohmann::json j;
    j["name"] = opts.name;
    if (opts.name == "gaussian") j["var"] = opts.var;
    if (opts.name == "mvgaussian") j["cov"] = opts.cov_path;
    if (opts.name == "negative_binomial") j["size"] = opts.size;
    if (opts.name == "gamma") j["shape"] = opts.shape;
    if (opts.name == "binomial" || opts.name == "multinomial") j["trials"] = opts.trials;
    return j;
}

std::vector<double> parse_eps_list(const std::string& text) {
    std::vector<double> eps;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            eps.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw UsageError("cannot parse fold weight: " + cell);
        }
    }
    return eps;
}

int cmd_thin(const FamilyOptions& fam_opts, const std::vector<double>& epsilons,
             std::uint64_t seed, const std::string& in_path, const std::string& out_base,
             const std::string& mode_name, const std::string& command) {
    const Eigen::MatrixXd X = read_matrix(in_path, input_kind(fam_opts.name));
    const Family family = build_family(fam_opts, static_cast<int>(X.cols()));
    const ThinPlan plan{epsilons};

    ThinMode mode = is_multivariate(family) ? ThinMode::rowwise : ThinMode::elementwise;
    if (mode_name == "elementwise") mode = ThinMode::elementwise;
    else if (mode_name == "rowwise") mode = ThinMode::rowwise;
    else if (!mode_name.empty()) throw UsageError("unknown --mode: " + mode_name);

    const RandomStream stream(seed);
    const FoldSet fs = thin_dataset(X, family, plan, mode, stream);

    std::vector<std::string> outputs;
    for (int m = 0; m < fs.fold_count(); ++m) {
        std::ostringstream name;
        name << out_base << ".fold" << m + 1 << ".csv";
        write_matrix(fs.folds[static_cast<std::size_t>(m)], name.str());
        outputs.push_back(name.str());
    }

    nlohmann::json manifest;
    manifest["command"] = command;
    manifest["family"] = family_json(fam_opts);
    manifest["plan"] = epsilons;
    manifest["seed"] = seed;
    manifest["mode"] = mode == ThinMode::rowwise ? "rowwise" : "elementwise";
    manifest["input"] = in_path;
    manifest["input_checksum"] = file_checksum(in_path);
    manifest["outputs"] = outputs;
    write_text(out_base + ".manifest.json", manifest.dump(2) + "\n");
    return 0;
}

int cmd_diagnose(const std::string& family, double mean, double var, double size, double prob,
                 double shape, double rate, double eps, int grid_points, int reps,
                 std::uint64_t seed, const std::string& out_path) {
    diag::MismatchSpec spec = [&]() -> diag::MismatchSpec {
        if (family == "gaussian") return diag::GaussianMismatch(mean, var, var, eps);
        if (family == "negative_binomial") return diag::NegBinMismatch(size, prob, size, eps);
        if (family == "gamma") return diag::GammaMismatch(shape, rate, shape, eps);
        throw UsageError("diagnose: family must be gaussian, negative_binomial or gamma");
    }();
    const double true_nuisance = family == "gaussian" ? var : (family == "gamma" ? shape : size);
    const std::vector<double> grid = diag::nuisance_grid_around(true_nuisance, grid_points);
    RandomStream stream(seed);
    const std::vector<diag::SweepRow> rows = diag::mismatch_sweep(spec, grid, reps, stream);

    std::ostringstream out;
    out << "nuisance,corr_theory,corr_hat\n";
    char buf[40];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.nuisance);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", row.corr_theory);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", row.corr_hat);
        out << buf << '\n';
    }
    write_text(out_path, out.str());
    return 0;
}

int cmd_cv(const FamilyOptions& fam_opts, const std::string& method_name, double eps,
           int folds, const std::string& loss_name, int kmin, int kmax, std::uint64_t seed,
           const std::string& in_path, const std::string& out_prefix) {
    const Eigen::MatrixXd X = read_matrix(in_path, input_kind(fam_opts.name));
    const Family family = build_family(fam_opts, static_cast<int>(X.cols()));

    eval::Task task;
    if (std::holds_alternative<fam::Binomial>(family)) task = eval::Task::pca;
    else if (std::holds_alternative<fam::Gamma>(family)) task = eval::Task::cluster;
    else throw UsageError("cv: family must be binomial (pca) or gamma (cluster)");

    eval::CvMethod method = eval::CvMethod::naive();
    if (method_name == "single") method = eval::CvMethod::single(eps);
    else if (method_name == "multifold") method = eval::CvMethod::multifold(folds);
    else if (method_name != "naive") throw UsageError("cv: unknown --method " + method_name);

    eval::LossKind loss;
    if (loss_name == "nll") loss = eval::LossKind::nll;
    else if (loss_name == "mse") loss = eval::LossKind::mse;
    else throw UsageError("cv: --loss must be nll or mse");

    if (kmin < 1 || kmax < kmin) throw UsageError("cv: need 1 <= kmin <= kmax");
    std::vector<int> candidates;
    for (int k = kmin; k <= kmax; ++k) candidates.push_back(k);

    RandomStream stream(seed);
    const eval::LossCurve curve =
        eval::cv_select_k(X, family, candidates, method, loss, task, stream);

    write_loss_curve_csv(curve, out_prefix + ".curve.csv");
    nlohmann::json summary;
    summary["selected_k"] = curve.selected_k;
    summary["method"] = method_name;
    summary["loss"] = loss_name;
    summary["kmin"] = kmin;
    summary["kmax"] = kmax;
    summary["seed"] = seed;
    summary["family"] = family_json(fam_opts);
    summary["input"] = in_path;
    summary["input_checksum"] = file_checksum(in_path);
    if (method.kind == eval::CvMethod::Kind::single) summary["eps_train"] = eps;
    if (method.kind == eval::CvMethod::Kind::multifold) summary["folds"] = folds;
    write_text(out_prefix + ".summary.json", summary.dump(2) + "\n");
    return 0;
}

int cmd_simulate(const std::string& experiment, int reps, std::uint64_t seed,
                 const std::string& loss_name, const std::string& eps_grid_text,
                 const std::string& out_prefix) {
    std::vector<double> eps_grid;
    if (!eps_grid_text.empty()) eps_grid = parse_eps_list(eps_grid_text);

    const RandomStream stream(seed);
    sim::SimReport report;

    if (experiment == "split-iid" || experiment == "split-leverage") {
        const bool iid = experiment == "split-iid";
        if (eps_grid.empty()) eps_grid = iid ? std::vector<double>{0.2, 0.8}
                                             : std::vector<double>{0.5, 0.8};
        report.experiment = experiment;
        report.n_reps = reps;
        report.seed = seed;
        for (std::size_t g = 0; g < eps_grid.size(); ++g) {
            const auto cfg = iid ? sim::RegressionSimConfig::iid(eps_grid[g], reps)
                                 : sim::RegressionSimConfig::high_leverage(eps_grid[g], reps);
            const sim::SimReport part = sim::run_split_comparison(cfg, stream.substream(g));
            for (const auto& m : part.methods) report.methods.push_back(m);
        }
    } else {
        sim::SelectionTask task;
        if (experiment == "pca") task = sim::SelectionTask::binomial_pca;
        else if (experiment == "gamma-small") task = sim::SelectionTask::gamma_small;
        else if (experiment == "gamma-large") task = sim::SelectionTask::gamma_large;
        else throw UsageError("simulate: unknown --experiment " + experiment);

        sim::SelectionSimConfig cfg = sim::SelectionSimConfig::defaults(task);
        cfg.n_reps = reps;
        cfg.seed = seed;
        if (loss_name == "nll") cfg.losses = {eval::LossKind::nll};
        else if (loss_name == "mse") cfg.losses = {eval::LossKind::mse};
        else if (loss_name == "both") cfg.losses = {eval::LossKind::nll, eval::LossKind::mse};
        else throw UsageError("simulate: --loss must be nll, mse or both");
        if (!eps_grid.empty()) {
            cfg.methods = {eval::CvMethod::naive(), eval::CvMethod::multifold(5)};
            for (double e : eps_grid) cfg.methods.push_back(eval::CvMethod::single(e));
        }
        report = sim::run_selection_sim(cfg, stream);
    }

    write_sim_report_json(report, out_prefix + ".report.json");
    write_sim_report_csvs(report, out_prefix);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"thinlab: data thinning for convolution-closed distributions"};
    app.require_subcommand(1);

    // thin / multithin
    FamilyOptions thin_family;
    std::string thin_eps_text;
    std::uint64_t thin_seed = 1;
    std::string thin_in, thin_out, thin_mode;
    double thin_eps = 0.5;

    CLI::App* thin_cmd = app.add_subcommand("thin", "two-fold data thinning of a CSV matrix");
    add_family_flags(thin_cmd, &thin_family);
    thin_cmd->add_option("--eps", thin_eps, "training fold weight in (0,1)")->required();
    thin_cmd->add_option("--seed", thin_seed, "master seed");
    thin_cmd->add_option("--in", thin_in, "input CSV matrix")->required();
    thin_cmd->add_option("--out", thin_out, "output file base name")->required();
    thin_cmd->add_option("--mode", thin_mode, "elementwise | rowwise");

    FamilyOptions multi_family;
    std::string multi_eps_text;
    std::uint64_t multi_seed = 1;
    std::string multi_in, multi_out, multi_mode;

    CLI::App* multi_cmd =
        app.add_subcommand("multithin", "multifold data thinning of a CSV matrix");
    add_family_flags(multi_cmd, &multi_family);
    multi_cmd->add_option("--eps", multi_eps_text, "comma-separated fold weights summing to 1")
        ->required();
    multi_cmd->add_option("--seed", multi_seed, "master seed");
    multi_cmd->add_option("--in", multi_in, "input CSV matrix")->required();
    multi_cmd->add_option("--out", multi_out, "output file base name")->required();
    multi_cmd->add_option("--mode", multi_mode, "elementwise | rowwise");

    // diagnose
    std::string diag_family;
    double diag_mean = 0.0, diag_var = 0.0, diag_size = 0.0, diag_prob = 0.0,
           diag_shape = 0.0, diag_rate = 0.0, diag_eps = 0.44;
    int diag_grid = 50, diag_reps = 100000;
    std::uint64_t diag_seed = 1;
    std::string diag_out;

    CLI::App* diag_cmd = app.add_subcommand(
        "diagnose", "nuisance-mismatch correlation sweep (theory vs Monte Carlo)");
    diag_cmd->add_option("--family", diag_family, "gaussian | negative_binomial | gamma")
        ->required();
    diag_cmd->add_option("--mean", diag_mean, "true mean (gaussian)");
    diag_cmd->add_option("--var", diag_var, "true variance (gaussian)");
    diag_cmd->add_option("--size", diag_size, "true size r (negative_binomial)");
    diag_cmd->add_option("--prob", diag_prob, "success prob p (negative_binomial)");
    diag_cmd->add_option("--shape", diag_shape, "true shape alpha (gamma)");
    diag_cmd->add_option("--rate", diag_rate, "rate beta (gamma)");
    diag_cmd->add_option("--eps", diag_eps, "fold weight");
    diag_cmd->add_option("--grid-points", diag_grid, "number of nuisance grid values");
    diag_cmd->add_option("--reps", diag_reps, "Monte Carlo replicates per grid value");
    diag_cmd->add_option("--seed", diag_seed, "master seed");
    diag_cmd->add_option("--out", diag_out, "output CSV path")->required();

    // cv
    FamilyOptions cv_family;
    std::string cv_method = "single", cv_loss = "nll", cv_in, cv_out;
    double cv_eps = 0.5;
    int cv_folds = 5, cv_kmin = 1, cv_kmax = 10;
    std::uint64_t cv_seed = 1;

    CLI::App* cv_cmd =
        app.add_subcommand("cv", "candidate-K selection by thinned cross-validation");
    add_family_flags(cv_cmd, &cv_family);
    cv_cmd->add_option("--method", cv_method, "naive | single | multifold");
    cv_cmd->add_option("--eps", cv_eps, "training fold weight (single)");
    cv_cmd->add_option("--folds", cv_folds, "fold count (multifold)");
    cv_cmd->add_option("--loss", cv_loss, "nll | mse");
    cv_cmd->add_option("--kmin", cv_kmin, "smallest candidate K");
    cv_cmd->add_option("--kmax", cv_kmax, "largest candidate K");
    cv_cmd->add_option("--seed", cv_seed, "master seed");
    cv_cmd->add_option("--in", cv_in, "input CSV matrix")->required();
    cv_cmd->add_option("--out", cv_out, "output file prefix")->required();

    // simulate
    std::string sim_experiment, sim_loss = "nll", sim_eps_grid, sim_out;
    int sim_reps = 200;
    std::uint64_t sim_seed = 1;

    CLI::App* sim_cmd = app.add_subcommand("simulate", "reference simulation experiments");
    sim_cmd->add_option("--experiment", sim_experiment,
                        "split-iid | split-leverage | pca | gamma-small | gamma-large")
        ->required();
    sim_cmd->add_option("--reps", sim_reps, "replicates");
    sim_cmd->add_option("--seed", sim_seed, "master seed");
    sim_cmd->add_option("--loss", sim_loss, "nll | mse | both (selection experiments)");
    sim_cmd->add_option("--eps-grid", sim_eps_grid, "comma-separated fold weights");
    sim_cmd->add_option("--out", sim_out, "output file prefix")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help() << std::endl;
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << std::endl;
        return 2;
    }

    try {
        if (thin_cmd->parsed()) {
            return cmd_thin(thin_family, {thin_eps, 1.0 - thin_eps}, thin_seed, thin_in,
                            thin_out, thin_mode, "thin");
        }
        if (multi_cmd->parsed()) {
            return cmd_thin(multi_family, parse_eps_list(multi_eps_text), multi_seed, multi_in,
                            multi_out, multi_mode, "multithin");
        }
        if (diag_cmd->parsed()) {
            return cmd_diagnose(diag_family, diag_mean, diag_var, diag_size, diag_prob,
                                diag_shape, diag_rate, diag_eps, diag_grid, diag_reps,
                                diag_seed, diag_out);
        }
        if (cv_cmd->parsed()) {
            return cmd_cv(cv_family, cv_method, cv_eps, cv_folds, cv_loss, cv_kmin, cv_kmax,
                          cv_seed, cv_in, cv_out);
        }
        if (sim_cmd->parsed()) {
            return cmd_simulate(sim_experiment, sim_reps, sim_seed, sim_loss, sim_eps_grid,
                                sim_out);
        }
        std::cerr << app.help() << std::endl;
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << std::endl;
        return 2;
    } catch (const PlanError& e) {
        std::cerr << "invalid plan: " << e.what() << std::endl;
        return 2;
    } catch (const ParamError& e) {
        std::cerr << "invalid parameters: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}

}  // namespace thinlab::io
