#include <peermech/peermech.hpp>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef PEERMECH_VERSION
#define PEERMECH_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace peermech;

namespace {

// ---------------------------------------------------------------------------
// Settings: key=value config file, overridden by flags.

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::map<std::string, std::string> read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(std::string(csv::chomp(line)));
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

class Settings {
public:
    void merge_file(const std::string& path, const std::set<std::string>& allowed)
    {
        for (auto& [k, v] : read_config_file(path)) {
            if (!allowed.count(k))
                throw ConfigError(path + ": unknown key '" + k + "'");
            if (!flags_.count(k))
                values_[k] = v;
        }
    }

    void set_flag(const std::string& key, const std::string& value)
    {
        values_[key] = value;
        flags_.insert(key);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string text(const std::string& key, const std::string& fallback)
    {
        const auto it = values_.find(key);
        return record(key, it == values_.end() ? fallback : it->second);
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key)) {
            record(key, csv::format(fallback));
            return fallback;
        }
        const double v = parse_number(key, values_.at(key));
        record(key, values_.at(key));
        return v;
    }

    std::size_t count(const std::string& key, std::size_t fallback)
    {
        const double v = number(key, static_cast<double>(fallback));
        if (!(v >= 0.0) || v != std::floor(v) || v > 1e15)
            throw ConfigError(key + " must be a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback)
    {
        if (!has(key)) {
            std::string joined;
            for (double v : fallback)
                joined += (joined.empty() ? "" : ",") + csv::format(v);
            record(key, joined);
            return fallback;
        }
        std::vector<double> out;
        for (const auto& part : csv::split(values_.at(key)))
            out.push_back(parse_number(key, trim(part)));
        record(key, values_.at(key));
        return out;
    }

    bool boolean(const std::string& key, bool fallback)
    {
        const std::string v = text(key, fallback ? "true" : "false");
        if (v == "true" || v == "1" || v == "yes")
            return true;
        if (v == "false" || v == "0" || v == "no")
            return false;
        throw ConfigError(key + ": expected true or false, got '" + v + "'");
    }

    /// Effective configuration, including defaults, as read so far.
    const std::map<std::string, std::string>& echo() const { return echo_; }

private:
    static double parse_number(const std::string& key, const std::string& s)
    {
        // accepts plain decimals and a/b fractions such as 1600/9
        const auto slash = s.find('/');
        if (slash != std::string::npos)
            return parse_number(key, s.substr(0, slash)) / parse_number(key, s.substr(slash + 1));
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (s.empty() || used != s.size() || !std::isfinite(v))
            throw ConfigError(key + ": not a number: '" + s + "'");
        return v;
    }

    std::string record(const std::string& key, std::string value)
    {
        echo_[key] = value;
        return value;
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> flags_;
    std::map<std::string, std::string> echo_;
};

struct Command {
    CLI::App* app = nullptr;
    std::set<std::string> keys;
    std::string config_path;
};

void add_setting(Command& cmd, Settings& s, const std::string& key, const std::string& help)
{
    cmd.keys.insert(key);
    cmd.app->add_option_function<std::string>(
        "--" + key, [&s, key](const std::string& v) { s.set_flag(key, v); }, help);
}

std::uint64_t resolve_seed(Settings& s)
{
    if (s.has("seed"))
        return static_cast<std::uint64_t>(s.count("seed", 0));
    if (const char* env = std::getenv("PEERMECH_SEED")) {
        s.set_flag("seed", env);
        return static_cast<std::uint64_t>(s.count("seed", 0));
    }
    return static_cast<std::uint64_t>(s.count("seed", 0));
}

CohortShape resolve_shape(Settings& s)
{
    const std::string scale = s.text("scale", "desk");
    CohortShape shape;
    if (scale == "desk")
        shape = {50, 10, 10};
    else if (scale == "paper")
        shape = {500, 50, 10};
    else
        throw ConfigError("scale must be desk or paper, got '" + scale + "'");
    shape.n = s.count("n", shape.n);
    shape.probes = s.count("probes", shape.probes);
    shape.k = s.count("k", shape.k);
    // surface infeasible shapes as config errors before any work starts
    build_assignment(shape.n, shape.probes, shape.k, 0);
    return shape;
}

std::size_t resolve_jobs(Settings& s)
{
    const std::size_t jobs = s.count("jobs", 1);
    if (jobs < 1)
        throw ConfigError("jobs must be >= 1");
    return jobs;
}

// ---------------------------------------------------------------------------
// Output plumbing

std::string git_blob_sha1(const std::string& content)
{
    const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
        throw std::runtime_error("SHA-1 digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int k = 0; k < len; ++k) {
        std::snprintf(buf, sizeof buf, "%02x", digest[k]);
        hex += buf;
    }
    return hex;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    void write(const std::string& relative, const std::string& content)
    {
        const fs::path p = root_ / relative;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        out << content;
        out.close();
        if (!out)
            throw std::runtime_error("failed writing " + p.string());
        files_.push_back(relative);
    }

    void write_manifest(const std::string& command, const Settings& s, std::uint64_t seed,
                        const std::string& inputs, double seconds)
    {
        nlohmann::ordered_json j;
        j["tool"] = "peermech";
        j["version"] = PEERMECH_VERSION;
        j["command"] = command;
        j["config"] = s.echo();
        j["seed"] = seed;
        j["input_hash"] = git_blob_sha1(inputs);
        j["outputs"] = files_;
        j["duration_seconds"] = seconds;
        std::ofstream out(root_ / "manifest.json");
        out << j.dump(2) << '\n';
        out.close();
        if (!out)
            throw std::runtime_error("failed writing manifest");
    }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

std::string canonical_config(const Settings& s)
{
    std::string out;
    for (const auto& [k, v] : s.echo())
        if (k != "jobs" && k != "out-dir")
            out += k + "=" + v + "\n";
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(Settings& s)
{
    const auto start = std::chrono::steady_clock::now();
    const std::string preset = s.text("preset", "truthful");
    std::vector<std::string> families;
    if (preset == "all")
        families = {"truthful", "strategic", "mismatched"};
    else if (preset == "truthful" || preset == "strategic" || preset == "mismatched")
        families = {preset};
    else
        throw ConfigError("preset must be truthful, strategic, mismatched or all, got '" + preset + "'");

    ExperimentConfig base;
    base.shape = resolve_shape(s);
    base.mu = s.number("true-mu", 1.0);
    base.gamma = s.number("true-gamma", 16.0);
    const auto etas = s.numbers("eta", {1600.0 / 9.0, 400.0});
    const auto reliabilities = s.numbers("reliability-means", {625.0, 10000.0 / 9.0, 2500.0, 10000.0});
    base.reliability_shape = s.number("reliability-shape", 25.0);
    base.threshold = s.number("threshold", 0.005);
    base.trials_outer = s.count("trials-outer", 10);
    base.trials_inner = s.count("trials-inner", 10);
    base.gibbs_iterations = s.count("gibbs-iterations", 1000);
    base.gibbs_burn_in = s.count("gibbs-burn-in", 200);
    base.trupeqa_sees_manipulated = s.boolean("trupeqa-sees-manipulated", false);
    const bool mismatched = std::find(families.begin(), families.end(), "mismatched") != families.end();
    const double prior_mu = s.number("prior-mu", mismatched ? 1.25 : base.mu);
    const double prior_gamma = s.number("prior-gamma", base.gamma);
    base.master_seed = resolve_seed(s);
    base.jobs = resolve_jobs(s);
    OutputDir out(s.text("out-dir", "out"));
    if (etas.empty() || reliabilities.empty())
        throw ConfigError("eta and reliability-means need at least one value");

    for (const auto& family : families) {
        ExperimentConfig cfg = base;
        cfg.behavior = family == "strategic" ? GraderBehavior::Strategic : GraderBehavior::Truthful;
        cfg.mechanism_prior = family == "mismatched" ? ContinuousPrior{prior_mu, prior_gamma}
                                                     : ContinuousPrior{base.mu, base.gamma};
        if (family != "mismatched" && s.has("prior-mu"))
            cfg.mechanism_prior.mu = prior_mu;
        if (family != "mismatched" && s.has("prior-gamma"))
            cfg.mechanism_prior.gamma = prior_gamma;
        std::ostringstream aggregate;
        write_aggregate_header(aggregate);
        for (double eta : etas) {
            for (double rel : reliabilities) {
                cfg.eta = eta;
                cfg.reliability_mean = rel;
                cfg.validate();
                const auto result = run_experiment(cfg);
                write_aggregate_rows(aggregate, result);
                std::ostringstream reps;
                write_replications_csv(reps, result);
                out.write(family + "/replications_eta" + label(eta) + "_rel" + label(rel) + ".csv", reps.str());
                std::printf("%s eta=%s reliability=%s:", family.c_str(), label(eta).c_str(), label(rel).c_str());
                for (const auto& m : result.summaries)
                    std::printf(" %s %.5f", std::string(to_string(m.mechanism)).c_str(), m.rmse.mean);
                std::printf("\n");
                std::fflush(stdout);
            }
        }
        out.write(family + "/aggregate.csv", aggregate.str());
    }
    out.write_manifest("simulate", s, base.master_seed, canonical_config(s), seconds_since(start));
    return 0;
}

int cmd_audit(Settings& s)
{
    const auto start = std::chrono::steady_clock::now();
    AuditConfig cfg;
    cfg.shape = resolve_shape(s);
    const double mu = s.number("prior-mu", 1.0);
    const double gamma = s.number("prior-gamma", 16.0);
    const double eta = s.number("eta", 400.0);
    const double rel = s.number("reliability-means", 2500.0);
    cfg.generation = ContinuousModelParams::with_reliability_mean(mu, gamma, eta, rel, s.number("reliability-shape", 25.0));
    cfg.prior = {mu, gamma};
    cfg.replications = s.count("replications", 2000);
    cfg.designated = static_cast<GraderId>(s.count("designated", 0));
    cfg.z = s.number("z", 3.0);
    cfg.deviations.clear();
    for (const auto& name : csv::split(s.text("strategies", "constant,own-score,uniform-noise")))
        cfg.deviations.push_back(parse_deviation(trim(name)));
    cfg.master_seed = resolve_seed(s);
    cfg.jobs = resolve_jobs(s);
    OutputDir out(s.text("out-dir", "out"));

    const auto report = run_audit(cfg);
    std::ostringstream csv;
    write_audit_header(csv);
    write_audit_rows(csv, report);
    out.write("audit.csv", csv.str());
    std::printf("epir: worst grader mean/SE %.2f, population mean %.6g -> %s\n", report.epir.worst_z,
                report.epir.population.mean, report.epir.pass() ? "pass" : "fail");
    for (const auto& row : report.eiic)
        std::printf("truthful_ge_deviation %s: difference %.6g (combined SE %.3g) -> %s\n",
                    std::string(to_string(row.deviation)).c_str(), row.truthful.mean - row.deviating.mean,
                    row.combined_se, row.pass ? "pass" : "fail");
    out.write_manifest("audit", s, cfg.master_seed, canonical_config(s), seconds_since(start));
    return 0;
}

int cmd_dataset(Settings& s)
{
    const auto start = std::chrono::steady_clock::now();
    const std::string input = s.text("input", "");
    if (input.empty())
        throw ConfigError("dataset needs --input");
    DatasetRunConfig cfg;
    cfg.prior = parse_prior_mode(s.text("prior", "uniform"));
    cfg.repeats = s.count("repeats", 10);
    cfg.grid_points = s.count("grid-points", 100);
    cfg.q_max = s.number("q-max", 16.0);
    cfg.gibbs_iterations = s.count("gibbs-iterations", 1000);
    cfg.gibbs_burn_in = s.count("gibbs-burn-in", 200);
    const std::size_t probes = s.count("probes-per-grader", 5);
    const double transfer_scale = s.number("transfer-scale", 1.0);
    cfg.seed = resolve_seed(s);
    cfg.jobs = resolve_jobs(s);
    GibbsConfig{cfg.gibbs_iterations, cfg.gibbs_burn_in, 0}.validate();
    OutputDir out(s.text("out-dir", "out"));

    const std::string raw = slurp(input);
    std::istringstream in(raw);
    const DatasetBundle bundle = load_dataset(in, probes);
    for (const auto& w : bundle.warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    const auto result = run_dataset(bundle, cfg);

    std::ostringstream metrics;
    write_dataset_metrics_csv(metrics, result, cfg.prior);
    out.write("metrics.csv", metrics.str());
    for (const auto& m : result.mechanisms) {
        std::ostringstream scores;
        write_dataset_scores_csv(scores, bundle, m.scores);
        out.write("scores_" + std::string(to_string(m.mechanism)) + ".csv", scores.str());
        std::printf("%s: rmse %.5f, regrade fraction %.4f\n", std::string(to_string(m.mechanism)).c_str(),
                    m.rmse.mean, m.regrade_fraction.mean);
    }
    std::ostringstream transfers;
    write_dataset_transfers_csv(transfers, bundle, result.trupeqa, transfer_scale);
    out.write("transfers.csv", transfers.str());
    out.write_manifest("dataset", s, cfg.seed, canonical_config(s) + raw, seconds_since(start));
    return 0;
}

int cmd_make_dataset(Settings& s)
{
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = resolve_seed(s);
    OutputDir out(s.text("out-dir", "out"));
    std::ostringstream os;
    write_dataset_records(os, generate_synthetic_dataset(seed));
    out.write("dataset.csv", os.str());
    out.write_manifest("make-dataset", s, seed, canonical_config(s), seconds_since(start));
    return 0;
}

int cmd_assign(Settings& s)
{
    const auto start = std::chrono::steady_clock::now();
    const CohortShape shape = resolve_shape(s);
    AssignmentOptions options;
    options.strict_uniform_load = s.boolean("strict-uniform", false);
    const std::uint64_t seed = resolve_seed(s);
    OutputDir out(s.text("out-dir", "out"));
    std::ostringstream os;
    write_plan_csv(os, build_assignment(shape.n, shape.probes, shape.k, seed, options));
    out.write("plan.csv", os.str());
    out.write_manifest("assign", s, seed, canonical_config(s), seconds_since(start));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Peer grading with probe-based accuracy estimation and marginal-contribution transfers"};
    app.set_version_flag("--version", PEERMECH_VERSION);
    app.require_subcommand(1);

    Settings settings;
    std::vector<Command> commands;
    commands.reserve(5);
    auto make = [&](const char* name, const char* help, std::vector<std::pair<std::string, std::string>> keys) {
        Command c;
        c.app = app.add_subcommand(name, help);
        for (const auto& [k, h] : keys)
            add_setting(c, settings, k, h);
        commands.push_back(c);
        auto& stored = commands.back();
        stored.app->add_option("--config", stored.config_path, "key=value file; flags win");
        return stored.app;
    };

    const std::vector<std::pair<std::string, std::string>> shape_keys{
        {"scale", "desk (n=50, l=10, K=10) or paper (n=500, l=50, K=10)"},
        {"n", "cohort size"},
        {"probes", "number of probe papers"},
        {"k", "papers per grader (even)"},
    };
    auto with = [&](std::vector<std::pair<std::string, std::string>> extra, bool shape) {
        if (shape)
            extra.insert(extra.begin(), shape_keys.begin(), shape_keys.end());
        extra.push_back({"seed", "master seed (falls back to PEERMECH_SEED)"});
        extra.push_back({"out-dir", "output directory"});
        return extra;
    };

    auto* simulate = make("simulate", "Run the simulated experiment grid",
                          with({{"preset", "truthful, strategic, mismatched or all"},
                                {"eta", "bias precision(s), comma separated; default 1600/9,400"},
                                {"reliability-means", "mean reliabilities, comma separated"},
                                {"reliability-shape", "Gamma shape of the reliability prior"},
                                {"true-mu", "generating prior mean"},
                                {"true-gamma", "generating prior precision"},
                                {"prior-mu", "prior mean used by TRUPEQA and Gibbs"},
                                {"prior-gamma", "prior precision used by TRUPEQA and Gibbs"},
                                {"threshold", "regrade threshold (default 0.005)"},
                                {"trials-outer", "populations per cell"},
                                {"trials-inner", "observation draws per population"},
                                {"gibbs-iterations", "Gibbs iterations"},
                                {"gibbs-burn-in", "Gibbs burn-in"},
                                {"trupeqa-sees-manipulated", "feed manipulated reports to TRUPEQA too"},
                                {"jobs", "worker threads"}},
                               true));
    auto* audit = make("audit", "Monte-Carlo audit of participation and truthfulness",
                       with({{"eta", "bias precision"},
                             {"reliability-means", "mean reliability"},
                             {"reliability-shape", "Gamma shape of the reliability prior"},
                             {"prior-mu", "prior mean"},
                             {"prior-gamma", "prior precision"},
                             {"replications", "paired replications"},
                             {"designated", "grader who deviates"},
                             {"strategies", "deviations: constant, own-score, uniform-noise, truthful"},
                             {"z", "pass threshold in standard errors"},
                             {"jobs", "worker threads"}},
                            true));
    auto* dataset = make("dataset", "Score a discrete peer-grading dataset",
                         with({{"input", "dataset CSV"},
                               {"prior", "uniform or empirical"},
                               {"repeats", "Gibbs re-runs for the confidence intervals"},
                               {"probes-per-grader", "earliest graded papers used as probes"},
                               {"grid-points", "accuracy grid size"},
                               {"q-max", "largest accuracy on the grid"},
                               {"gibbs-iterations", "Gibbs iterations"},
                               {"gibbs-burn-in", "Gibbs burn-in"},
                               {"transfer-scale", "multiplier applied to reported transfers"},
                               {"jobs", "worker threads"}},
                              false));
    auto* make_dataset = make("make-dataset", "Write a synthetic discrete dataset", with({}, false));
    auto* assign = make("assign", "Write an assignment plan",
                        with({{"strict-uniform", "require equal grader counts per paper"}}, true));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (auto& c : commands)
            if (c.app->parsed() && !c.config_path.empty())
                settings.merge_file(c.config_path, c.keys);
        if (simulate->parsed())
            return cmd_simulate(settings);
        if (audit->parsed())
            return cmd_audit(settings);
        if (dataset->parsed())
            return cmd_dataset(settings);
        if (make_dataset->parsed())
            return cmd_make_dataset(settings);
        if (assign->parsed())
            return cmd_assign(settings);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
