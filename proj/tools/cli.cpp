#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string_view>

#include <CLI11.hpp>
#include <json.hpp>

#include <coprimary/coprimary.hpp>

namespace coprimary::cli
{

namespace
{

using nlohmann::json;

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
    {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view line, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;)
    {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
        {
            return out;
        }
        start = pos + 1;
    }
}

std::string where(const std::string& source, std::size_t line)
{
    return source + ":" + std::to_string(line);
}

std::uint8_t parse_bit(const std::string& field, const std::string& source, std::size_t line, const std::string& column)
{
    if (field == "0")
    {
        return 0;
    }
    if (field == "1")
    {
        return 1;
    }
    throw Error(ErrorKind::ParseError,
                where(source, line) + ": column '" + column + "' expects 0 or 1, got '" + field + "'");
}

template <typename T>
T parse_number(const std::string& text, const std::string& what)
{
    T v{};
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (text.empty() || res.ec != std::errc() || res.ptr != end)
    {
        throw Error(ErrorKind::ConfigError, what + ": cannot parse '" + text + "'");
    }
    return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& what)
{
    std::vector<T> out;
    for (const auto& item : split(text, ','))
    {
        out.push_back(parse_number<T>(item, what));
    }
    return out;
}

struct ConfigToken
{
    std::string key;
    std::string token;
    std::size_t line;
};

std::vector<ConfigToken> read_config(std::istream& in, const std::string& source)
{
    std::vector<ConfigToken> out;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw))
    {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(std::string_view(raw).substr(0, hash));
        if (text.empty())
        {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
        {
            throw Error(ErrorKind::ConfigError, where(source, line) + ": expected key = value");
        }
        std::string key = trim(std::string_view(text).substr(0, eq));
        std::string value = trim(std::string_view(text).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        {
            value = value.substr(1, value.size() - 2);
        }
        if (key.empty() || key.find_first_of(" \t") != std::string::npos)
        {
            throw Error(ErrorKind::ConfigError, where(source, line) + ": invalid key '" + key + "'");
        }
        std::replace(key.begin(), key.end(), '_', '-');
        out.push_back({key, "--" + key + "=" + value, line});
    }
    return out;
}

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
    {
        throw Error(ErrorKind::ConfigError, "cannot write " + path.string());
    }
    return f;
}

json double_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

/// Options shared by every subcommand.
struct Common
{
    double alpha{0.025};
    double se0{0.8};
    std::optional<double> sp0;
    std::optional<double> delta0;
    std::uint64_t seed{20200322};
    double mc_tol{1e-4};
    double quantile_tol{1e-3};
    std::string format{"json"};
    std::string out_dir;
    std::size_t workers{1};
    std::string config;

    StudyConfig study_config() const
    {
        double sp = se0;
        if (sp0 && delta0 && std::fabs((se0 - *sp0) - *delta0) > 1e-12)
        {
            throw Error(ErrorKind::ConfigError, "--sp0 and --delta0 disagree (delta0 = se0 - sp0)");
        }
        if (sp0)
        {
            sp = *sp0;
        }
        else if (delta0)
        {
            sp = se0 - *delta0;
        }
        StudyConfig cfg;
        cfg.threshold = Threshold(se0, sp);
        cfg.alpha = alpha;
        cfg.seed = seed;
        cfg.mc_tolerance = mc_tol;
        cfg.quantile_tolerance = quantile_tol;
        cfg.validate();
        return cfg;
    }
};

void add_common(CLI::App& app, Common& c)
{
    app.add_option("--config", c.config, "key = value file; command-line flags take precedence");
    app.add_option("--alpha", c.alpha, "one-sided significance level")->capture_default_str();
    app.add_option("--se0", c.se0, "sensitivity threshold")->capture_default_str();
    app.add_option("--sp0", c.sp0, "specificity threshold (default: se0 - delta0, or se0)");
    app.add_option("--delta0", c.delta0, "se0 - sp0");
    app.add_option("--seed", c.seed, "master seed")->capture_default_str();
    app.add_option("--mc-tol", c.mc_tol, "error target of each normal probability")->capture_default_str();
    app.add_option("--quantile-tol", c.quantile_tol, "bracket width of the critical value")->capture_default_str();
    app.add_option("--format", c.format, "stdout format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    app.add_option("--out-dir", c.out_dir, "also write json and csv files here (env COPRIMARY_OUT_DIR)");
    app.add_option("--workers", c.workers, "threads for simulations")->capture_default_str();
}

json header(const char* command, const Common& c, const StudyConfig& cfg)
{
    return json{{"tool", "coprimary"},
                {"version", tool_version},
                {"command", command},
                {"seed", c.seed},
                {"alpha", cfg.alpha},
                {"threshold", {{"se0", cfg.threshold.se0()}, {"sp0", cfg.threshold.sp0()}, {"delta0", cfg.threshold.delta0()}}}};
}

struct DataFiles
{
    std::string data;
    std::string predictions;
    std::string labels;

    LabeledPredictions load() const
    {
        if (!data.empty())
        {
            if (!predictions.empty() || !labels.empty())
            {
                throw Error(ErrorKind::ConfigError, "use either --data or --predictions with --labels");
            }
            return parse_combined(read_csv_file(data), data);
        }
        if (predictions.empty() || labels.empty())
        {
            throw Error(ErrorKind::ConfigError, "input missing: give --data, or --predictions and --labels");
        }
        return parse_separate(read_csv_file(predictions), read_csv_file(labels), predictions, labels);
    }
};

void add_data(CLI::App& app, DataFiles& d, const char* data_flag)
{
    app.add_option(data_flag, d.data, "CSV with a 0/1 'label' column and one 0/1 column per model");
    app.add_option("--predictions", d.predictions, "CSV of 0/1 model predictions");
    app.add_option("--labels", d.labels, "CSV with a 0/1 'label' column");
}

/// Writes the report to stdout in the chosen format and both formats to the output directory.
void emit(const Common& c, const std::string& stem, const json& report, const std::string& csv, std::ostream& out,
          const std::vector<std::pair<std::string, std::string>>& extra = {})
{
    if (c.format == "json")
    {
        out << report.dump(2) << '\n';
    }
    else
    {
        out << csv;
    }
    if (!c.out_dir.empty())
    {
        const std::filesystem::path dir(c.out_dir);
        std::filesystem::create_directories(dir);
        open_output(dir / (stem + ".json")) << report.dump(2) << '\n';
        open_output(dir / (stem + ".csv")) << csv;
        for (const auto& [name, body] : extra)
        {
            open_output(dir / name) << body;
        }
    }
}

std::string csv_row(const std::vector<std::string>& fields)
{
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i)
    {
        if (i > 0)
        {
            line += ',';
        }
        line += fields[i];
    }
    return line + '\n';
}

std::string fmt(double v)
{
    return format_double(v);
}

int cmd_evaluate(const Common& c, const DataFiles& files, std::ostream& out)
{
    const StudyConfig cfg = c.study_config();
    const LabeledPredictions data = files.load();
    const auto [q_se, q_sp] = build_similarity(data.predictions, data.labels);
    const CoPrimaryEstimate est = regularized_estimate(q_se, q_sp);
    const TestOutcome res = max_t_test(est, cfg);
    Rng tie = make_rng(c.seed, final_stream, 0);
    const std::size_t m_star = *final_model(res, FinalModelChoice{}, tie);
    const auto& st = res.statistics;

    json report = header("evaluate", c, cfg);
    report["n1"] = est.n1;
    report["n0"] = est.n0;
    report["c_alpha"] = res.critical_value;
    report["c_median"] = res.median_critical_value;
    report["final_model"] = data.names[m_star];
    report["final_model_rejected"] = res.rejected[m_star] != 0;
    report["any_rejected"] = res.any_rejected();
    json rows = json::array();
    std::string csv = csv_row({"model", "se_hat", "sp_hat", "t_se", "t_sp", "t_min", "rejected", "ci_lower_se",
                               "ci_lower_sp", "corrected_se", "corrected_sp", "final", "c_alpha", "n1", "n0", "seed"});
    for (std::size_t m = 0; m < data.names.size(); ++m)
    {
        const auto i = static_cast<Eigen::Index>(m);
        rows.push_back({{"name", data.names[m]},
                        {"se_hat", est.se_mean(i)},
                        {"sp_hat", est.sp_mean(i)},
                        {"t_se", st.t_se(i)},
                        {"t_sp", st.t_sp(i)},
                        {"t_min", st.t_min(i)},
                        {"rejected", res.rejected[m] != 0},
                        {"ci_lower_se", res.ci_lower_se(i)},
                        {"ci_lower_sp", res.ci_lower_sp(i)},
                        {"corrected_se", res.corrected_se(i)},
                        {"corrected_sp", res.corrected_sp(i)}});
        csv += csv_row({data.names[m], fmt(est.se_mean(i)), fmt(est.sp_mean(i)), fmt(st.t_se(i)), fmt(st.t_sp(i)),
                        fmt(st.t_min(i)), std::to_string(res.rejected[m]), fmt(res.ci_lower_se(i)),
                        fmt(res.ci_lower_sp(i)), fmt(res.corrected_se(i)), fmt(res.corrected_sp(i)),
                        m == m_star ? "1" : "0", fmt(res.critical_value), std::to_string(est.n1),
                        std::to_string(est.n0), std::to_string(c.seed)});
    }
    report["models"] = rows;
    emit(c, "evaluate", report, csv, out);
    return res.any_rejected() ? exit_ok : exit_study_failed;
}

struct SelectOptions
{
    std::string rule{"default"};
    double k{1.0};
    std::string n_eval{"400"};
    std::size_t s_max{0};
    std::size_t max_iter{250};
    double num_tol{0.001};
    std::string s_star_rule{"one_se"};
    std::optional<std::size_t> n1_learn;
    std::optional<std::size_t> n0_learn;
};

int cmd_select(const Common& c, const DataFiles& files, const SelectOptions& o, std::ostream& out)
{
    const StudyConfig cfg_base = c.study_config();
    const auto n_evals = parse_list<std::size_t>(o.n_eval, "--n-eval");
    if (!(o.k >= 0.0))
    {
        throw Error(ErrorKind::ConfigError, "--k must be non-negative");
    }
    const LabeledPredictions data = files.load();
    const auto [q_se, q_sp] = build_similarity(data.predictions, data.labels);
    const ValidationData val(q_se, q_sp);
    const CoPrimaryEstimate est = regularized_estimate(q_se, q_sp);
    const BalancedAccuracy bacc = balanced_accuracy(est);
    const TestStatistics st = test_statistics(est, cfg_base.threshold);

    IndexList selected;
    json report = header("select", c, cfg_base);
    report["rule"] = o.rule;
    report["n1"] = est.n1;
    report["n0"] = est.n0;
    std::string curve_csv;
    if (o.rule == "default")
    {
        selected = select_default(val);
    }
    else if (o.rule == "within_k_se")
    {
        report["k"] = o.k;
        selected = select_within_k_se(val, o.k);
    }
    else
    {
        EfpOptions opt;
        opt.s_max = o.s_max;
        opt.max_iter = o.max_iter;
        opt.num_tol = o.num_tol;
        opt.s_star_rule = o.s_star_rule == "argmax" ? SStarRule::argmax : SStarRule::one_se;
        opt.n1_learn = o.n1_learn;
        opt.n0_learn = o.n0_learn;
        opt.workers = c.workers;
        json curves = json::array();
        curve_csv = csv_row({"n_eval", "S", "model", "efp", "se", "s_star", "iterations", "seed"});
        for (std::size_t e = 0; e < n_evals.size(); ++e)
        {
            StudyConfig cfg = cfg_base;
            cfg.n_eval = n_evals[e];
            const EfpCurve curve = optimal_efp(val, cfg, opt, derive_seed(c.seed, selection_stream, e));
            json points = json::array();
            for (std::size_t s = 0; s < curve.ranking.size(); ++s)
            {
                const auto i = static_cast<Eigen::Index>(s);
                points.push_back({{"S", s + 1},
                                  {"model", data.names[curve.ranking[s]]},
                                  {"efp", curve.efp(i)},
                                  {"se", double_or_null(curve.se(i))}});
                curve_csv += csv_row({std::to_string(cfg.n_eval), std::to_string(s + 1), data.names[curve.ranking[s]],
                                      fmt(curve.efp(i)), fmt(curve.se(i)), s + 1 == curve.s_star ? "1" : "0",
                                      std::to_string(curve.iterations_used), std::to_string(c.seed)});
            }
            json names = json::array();
            for (auto m : curve.selected())
            {
                names.push_back(data.names[m]);
            }
            curves.push_back({{"n_eval", cfg.n_eval},
                              {"s_star", curve.s_star},
                              {"iterations_used", curve.iterations_used},
                              {"projections", curve.projections},
                              {"selected", names},
                              {"curve", points}});
            if (e == 0)
            {
                selected = curve.selected();
                std::sort(selected.begin(), selected.end());
            }
        }
        report["s_star_rule"] = o.s_star_rule;
        report["max_iter"] = o.max_iter;
        report["num_tol"] = o.num_tol;
        report["efp"] = curves;
    }

    std::vector<std::uint8_t> chosen(data.names.size(), 0);
    for (auto m : selected)
    {
        chosen[m] = 1;
    }
    json models = json::array();
    std::string csv = csv_row({"index", "model", "balanced_accuracy", "balanced_accuracy_se", "t_min", "selected", "seed"});
    for (std::size_t m = 0; m < data.names.size(); ++m)
    {
        const auto i = static_cast<Eigen::Index>(m);
        models.push_back({{"index", m},
                          {"name", data.names[m]},
                          {"balanced_accuracy", bacc.value(i)},
                          {"balanced_accuracy_se", bacc.stderr_(i)},
                          {"t_min", st.t_min(i)},
                          {"selected", chosen[m] != 0}});
        csv += csv_row({std::to_string(m), data.names[m], fmt(bacc.value(i)), fmt(bacc.stderr_(i)), fmt(st.t_min(i)),
                        std::to_string(chosen[m]), std::to_string(c.seed)});
    }
    json names = json::array();
    for (auto m : selected)
    {
        names.push_back(data.names[m]);
    }
    report["selected"] = names;
    report["models"] = models;

    std::vector<std::pair<std::string, std::string>> extra;
    if (!curve_csv.empty())
    {
        extra.emplace_back("efp_curve.csv", curve_csv);
    }
    emit(c, "select", report, curve_csv.empty() ? csv : curve_csv, out, extra);
    return exit_ok;
}

struct LfcOptions
{
    std::string num_models{"1"};
    std::string theta0;
    std::string epsilon{"0"};
    std::string prevalence{"0.2"};
    std::string n{"200"};
    double corr_strength{0.5};
    std::string corr_structure{"equicorrelation"};
    std::optional<double> acc_cap;
    std::size_t n_sim{1000};
    bool random_group_sizes{false};
};

CorrStructure parse_structure(const std::string& s)
{
    if (s == "equicorrelation")
    {
        return CorrStructure::equicorrelation;
    }
    if (s == "independence")
    {
        return CorrStructure::independence;
    }
    return CorrStructure::autocorrelation;
}

inline constexpr std::uint64_t scenario_stream = 0x5C3;

int cmd_simulate_lfc(const Common& c, const LfcOptions& o, std::ostream& out)
{
    const StudyConfig cfg = c.study_config();
    const auto sizes = parse_list<std::size_t>(o.num_models, "--num-models");
    const auto epsilons = parse_list<double>(o.epsilon, "--epsilon");
    const auto prevalences = parse_list<double>(o.prevalence, "--prevalence");
    const auto totals = parse_list<std::size_t>(o.n, "--n");
    std::vector<Threshold> thresholds;
    if (o.theta0.empty())
    {
        thresholds.push_back(cfg.threshold);
    }
    else
    {
        for (double t : parse_list<double>(o.theta0, "--theta0"))
        {
            if (!(t > 0.0 && t < 1.0))
            {
                throw Error(ErrorKind::ConfigError, "--theta0 entries must lie in (0,1)");
            }
            thresholds.push_back(Threshold(t, t));
        }
    }

    std::vector<LfcScenario> grid;
    for (auto s : sizes)
    {
        for (const auto& thr : thresholds)
        {
            for (double eps : epsilons)
            {
                for (double rho : prevalences)
                {
                    for (auto n : totals)
                    {
                        LfcScenario sc;
                        sc.S = s;
                        sc.theta0 = thr;
                        sc.epsilon = eps;
                        sc.prevalence = rho;
                        sc.n_total = n;
                        sc.corr_strength = o.corr_strength;
                        sc.corr_structure = parse_structure(o.corr_structure);
                        sc.acc_cap = o.acc_cap;
                        sc.n_sim = o.n_sim;
                        sc.random_group_sizes = o.random_group_sizes;
                        grid.push_back(sc);
                    }
                }
            }
        }
    }
    // reject the whole grid before any simulation starts
    for (std::size_t k = 0; k < grid.size(); ++k)
    {
        try
        {
            grid[k].validate();
            if (!grid[k].random_group_sizes)
            {
                Rng probe = make_rng(0);
                sample_group_sizes(grid[k].n_total, 0, 0, probe, grid[k].prevalence);
            }
        }
        catch (const Error& e)
        {
            throw Error(ErrorKind::ConfigError, "scenario " + std::to_string(k + 1) + ": " + e.what());
        }
    }

    json report = header("simulate-lfc", c, cfg);
    report["n_sim"] = o.n_sim;
    json rows = json::array();
    std::string csv = csv_row({"scenario", "num_models", "se0", "sp0", "epsilon", "prevalence", "n", "corr_structure",
                               "corr_strength", "acc_cap", "random_group_sizes", "n_sim", "seed", "metric", "value"});
    for (std::size_t k = 0; k < grid.size(); ++k)
    {
        const LfcScenario& sc = grid[k];
        const std::uint64_t seed = derive_seed(c.seed, scenario_stream, k);
        const FwerResult r = simulate_fwer(sc, cfg, seed, c.workers);
        rows.push_back({{"scenario", k + 1},
                        {"num_models", sc.S},
                        {"se0", sc.theta0.se0()},
                        {"sp0", sc.theta0.sp0()},
                        {"epsilon", sc.epsilon},
                        {"prevalence", sc.prevalence},
                        {"n", sc.n_total},
                        {"corr_structure", to_string(sc.corr_structure)},
                        {"corr_strength", sc.corr_strength},
                        {"acc_cap", sc.acc_cap ? json(*sc.acc_cap) : json(nullptr)},
                        {"random_group_sizes", sc.random_group_sizes},
                        {"n_sim", r.n_sim},
                        {"seed", seed},
                        {"fwer", r.fwer},
                        {"mc_se", r.mc_se},
                        {"rejections_any", r.rejections_any}});
        const std::vector<std::string> key = {std::to_string(k + 1),
                                              std::to_string(sc.S),
                                              fmt(sc.theta0.se0()),
                                              fmt(sc.theta0.sp0()),
                                              fmt(sc.epsilon),
                                              fmt(sc.prevalence),
                                              std::to_string(sc.n_total),
                                              to_string(sc.corr_structure),
                                              fmt(sc.corr_strength),
                                              sc.acc_cap ? fmt(*sc.acc_cap) : "",
                                              sc.random_group_sizes ? "1" : "0",
                                              std::to_string(r.n_sim),
                                              std::to_string(seed)};
        const std::pair<const char*, std::string> metrics[] = {
            {"fwer", fmt(r.fwer)}, {"mc_se", fmt(r.mc_se)}, {"rejections_any", std::to_string(r.rejections_any)}};
        for (const auto& [metric, value] : metrics)
        {
            auto row = key;
            row.push_back(metric);
            row.push_back(value);
            csv += csv_row(row);
        }
    }
    report["scenarios"] = rows;
    emit(c, "simulate_lfc", report, csv, out);
    return exit_ok;
}

} // namespace

CsvTable read_csv(std::istream& in, const std::string& source)
{
    CsvTable t;
    std::string raw;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, raw))
    {
        ++line;
        if (trim(raw).empty())
        {
            continue;
        }
        auto fields = split(raw, ',');
        if (!have_header)
        {
            if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0)
            {
                fields[0] = fields[0].substr(3);
            }
            for (const auto& f : fields)
            {
                if (f.empty())
                {
                    throw Error(ErrorKind::ParseError, where(source, line) + ": empty column name");
                }
            }
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
        {
            throw Error(ErrorKind::ParseError, where(source, line) + ": expected " + std::to_string(t.header.size()) +
                                                   " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.lines.push_back(line);
    }
    if (!have_header)
    {
        throw Error(ErrorKind::EmptyInput, source + ": no header row");
    }
    return t;
}

CsvTable read_csv_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
    {
        throw Error(ErrorKind::ParseError, "cannot open " + path);
    }
    return read_csv(f, path);
}

LabeledPredictions parse_combined(const CsvTable& table, const std::string& source)
{
    const auto it = std::find(table.header.begin(), table.header.end(), "label");
    if (it == table.header.end())
    {
        throw Error(ErrorKind::ParseError, source + ": no 'label' column");
    }
    const auto label_col = static_cast<std::size_t>(it - table.header.begin());
    LabeledPredictions out;
    std::vector<std::size_t> model_cols;
    for (std::size_t j = 0; j < table.header.size(); ++j)
    {
        if (j != label_col)
        {
            model_cols.push_back(j);
            out.names.push_back(table.header[j]);
        }
    }
    if (model_cols.empty())
    {
        throw Error(ErrorKind::EmptyModelSet, source + ": no model columns");
    }
    out.predictions.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(model_cols.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i)
    {
        const auto& row = table.rows[i];
        out.labels.push_back(parse_bit(row[label_col], source, table.lines[i], "label"));
        for (std::size_t k = 0; k < model_cols.size(); ++k)
        {
            out.predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                parse_bit(row[model_cols[k]], source, table.lines[i], out.names[k]);
        }
    }
    return out;
}

LabeledPredictions parse_separate(const CsvTable& predictions, const CsvTable& labels, const std::string& pred_source,
                                  const std::string& label_source)
{
    const auto it = std::find(labels.header.begin(), labels.header.end(), "label");
    if (it == labels.header.end())
    {
        throw Error(ErrorKind::ParseError, label_source + ": no 'label' column");
    }
    if (predictions.rows.size() != labels.rows.size())
    {
        throw Error(ErrorKind::DimensionMismatch, pred_source + " has " + std::to_string(predictions.rows.size()) +
                                                      " rows but " + label_source + " has " +
                                                      std::to_string(labels.rows.size()));
    }
    const auto label_col = static_cast<std::size_t>(it - labels.header.begin());
    LabeledPredictions out;
    out.names = predictions.header;
    out.predictions.resize(static_cast<Eigen::Index>(predictions.rows.size()),
                           static_cast<Eigen::Index>(predictions.header.size()));
    for (std::size_t i = 0; i < predictions.rows.size(); ++i)
    {
        out.labels.push_back(parse_bit(labels.rows[i][label_col], label_source, labels.lines[i], "label"));
        for (std::size_t k = 0; k < out.names.size(); ++k)
        {
            out.predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                parse_bit(predictions.rows[i][k], pred_source, predictions.lines[i], out.names[k]);
        }
    }
    return out;
}

std::vector<std::string> config_arguments(std::istream& in, const std::string& source)
{
    std::vector<std::string> out;
    for (auto& t : read_config(in, source))
    {
        out.push_back(std::move(t.token));
    }
    return out;
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Co-primary diagnostic accuracy evaluation of multiple models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Common common;
    if (const char* env = std::getenv("COPRIMARY_OUT_DIR"))
    {
        common.out_dir = env;
    }
    DataFiles files;
    SelectOptions sel;
    LfcOptions lfc;

    auto* evaluate = app.add_subcommand("evaluate", "maxT test of all models in an evaluation sample");
    add_common(*evaluate, common);
    add_data(*evaluate, files, "--data");

    auto add_select = [&](CLI::App& sub, bool fixed_rule) {
        add_common(sub, common);
        add_data(sub, files, "--data");
        sub.add_option("--validation", files.data, "same as --data");
        if (!fixed_rule)
        {
            sub.add_option("--rule", sel.rule, "selection rule")
                ->check(CLI::IsMember({"default", "within_k_se", "optimal_efp"}))
                ->capture_default_str();
        }
        sub.add_option("--k", sel.k, "standard errors for within_k_se")->capture_default_str();
        sub.add_option("--n-eval", sel.n_eval, "planned evaluation sample size(s), comma separated")->capture_default_str();
        sub.add_option("--s-max", sel.s_max, "pre-ranked candidates (0: round(sqrt(n_eval)))")->capture_default_str();
        sub.add_option("--max-iter", sel.max_iter, "Monte Carlo iterations")->capture_default_str();
        sub.add_option("--num-tol", sel.num_tol, "stop when the standard error at s_star falls below")->capture_default_str();
        sub.add_option("--s-star-rule", sel.s_star_rule, "one_se or argmax")
            ->check(CLI::IsMember({"one_se", "argmax"}))
            ->capture_default_str();
        sub.add_option("--n1-learn", sel.n1_learn, "diseased count for the prevalence prior");
        sub.add_option("--n0-learn", sel.n0_learn, "healthy count for the prevalence prior");
    };
    auto* select = app.add_subcommand("select", "choose models to evaluate from validation data");
    add_select(*select, false);
    auto* plan = app.add_subcommand("plan-efp", "select --rule optimal_efp");
    add_select(*plan, true);

    auto* simulate = app.add_subcommand("simulate-lfc", "FWER at least favorable configurations over a grid");
    add_common(*simulate, common);
    simulate->add_option("--num-models", lfc.num_models, "models per study, comma separated")->capture_default_str();
    simulate->add_option("--theta0", lfc.theta0, "symmetric thresholds, comma separated (default: se0/sp0)");
    simulate->add_option("--epsilon", lfc.epsilon, "distance steps from the LFC, comma separated")->capture_default_str();
    simulate->add_option("--prevalence", lfc.prevalence, "prevalences, comma separated")->capture_default_str();
    simulate->add_option("--n", lfc.n, "total sample sizes, comma separated")->capture_default_str();
    simulate->add_option("--corr-strength", lfc.corr_strength, "correlation parameter")->capture_default_str();
    simulate->add_option("--corr-structure", lfc.corr_structure, "correlation structure")
        ->check(CLI::IsMember({"equicorrelation", "independence", "autocorrelation"}))
        ->capture_default_str();
    simulate->add_option("--acc-cap", lfc.acc_cap, "upper bound on overall accuracy");
    simulate->add_option("--n-sim", lfc.n_sim, "replicates per scenario")->capture_default_str();
    simulate->add_flag("--random-group-sizes", lfc.random_group_sizes, "binomial instead of fixed group sizes");

    try
    {
        // config values go first so that later command-line values win
        std::vector<std::string> argv = args;
        if (!argv.empty())
        {
            CLI::App* sub = nullptr;
            for (auto* s : {evaluate, select, plan, simulate})
            {
                if (s->get_name() == argv[0])
                {
                    sub = s;
                }
            }
            std::string config_path;
            for (std::size_t i = 1; i < argv.size(); ++i)
            {
                if (argv[i] == "--config" && i + 1 < argv.size())
                {
                    config_path = argv[i + 1];
                }
                else if (argv[i].rfind("--config=", 0) == 0)
                {
                    config_path = argv[i].substr(9);
                }
            }
            if (sub && !config_path.empty())
            {
                std::ifstream f(config_path);
                if (!f)
                {
                    throw Error(ErrorKind::ConfigError, "cannot open " + config_path);
                }
                std::vector<std::string> injected;
                for (auto& t : read_config(f, config_path))
                {
                    if (t.key == "config" || sub->get_option_no_throw("--" + t.key) == nullptr)
                    {
                        throw Error(ErrorKind::ConfigError,
                                    where(config_path, t.line) + ": unknown key '" + t.key + "' for " + sub->get_name());
                    }
                    injected.push_back(std::move(t.token));
                }
                argv.insert(argv.begin() + 1, injected.begin(), injected.end());
            }
        }
        std::reverse(argv.begin(), argv.end());
        try
        {
            app.parse(argv);
        }
        catch (const CLI::ParseError& e)
        {
            const int code = app.exit(e, out, err);
            return code == 0 ? exit_ok : exit_error;
        }

        if (evaluate->parsed())
        {
            return cmd_evaluate(common, files, out);
        }
        if (select->parsed())
        {
            return cmd_select(common, files, sel, out);
        }
        if (plan->parsed())
        {
            sel.rule = "optimal_efp";
            return cmd_select(common, files, sel, out);
        }
        return cmd_simulate_lfc(common, lfc, out);
    }
    catch (const Error& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_error;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << '\n';
        return exit_error;
    }
}

} // namespace coprimary::cli
