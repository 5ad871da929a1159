#include "cli.hpp"

#include <coprimary/coprimary.hpp>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace coprimary;
using nlohmann::json;
namespace fs = std::filesystem;

namespace
{

struct Result
{
    int code;
    std::string out;
    std::string err;
};

Result invoke(const std::vector<std::string>& args)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir = fs::temp_directory_path() /
              ("coprimary_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string write(const std::string& name, const std::string& body) const
    {
        const auto p = dir / name;
        std::ofstream(p) << body;
        return p.string();
    }

    // n subjects, prevalence 1/2, model j correct with probability acc[j]
    std::string dataset(const std::string& name, const std::vector<double>& acc, std::size_t n, std::uint64_t seed) const
    {
        std::mt19937_64 rng(seed);
        std::ostringstream s;
        s << "label";
        for (std::size_t j = 0; j < acc.size(); ++j)
        {
            s << ",m" << j + 1;
        }
        s << '\n';
        for (std::size_t i = 0; i < n; ++i)
        {
            const int y = static_cast<int>(i % 2);
            s << y;
            for (double a : acc)
            {
                const bool correct = std::bernoulli_distribution(a)(rng);
                s << ',' << (correct ? y : 1 - y);
            }
            s << '\n';
        }
        return write(name, s.str());
    }

    fs::path dir;
};

double z975()
{
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.975);
}

} // namespace

TEST(CsvReader, ParsesAndTracksLines)
{
    std::istringstream in("a,b\n1,0\n\n0, 1\r\n");
    const auto t = cli::read_csv(in, "x.csv");
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1][1], "1");
    EXPECT_EQ(t.lines[1], 4u);
}

TEST(CsvReader, MalformedRowNamesLine)
{
    std::istringstream in("label,m1\n1,1\n0,1,1\n");
    try
    {
        cli::read_csv(in, "bad.csv");
        FAIL();
    }
    catch (const Error& e)
    {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
        EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
    }
}

TEST(CsvReader, NonBinaryValueNamesLine)
{
    std::istringstream in("label,m1\n1,1\n0,2\n");
    const auto t = cli::read_csv(in, "v.csv");
    try
    {
        cli::parse_combined(t, "v.csv");
        FAIL();
    }
    catch (const Error& e)
    {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
        EXPECT_NE(std::string(e.what()).find("v.csv:3"), std::string::npos);
    }
}

TEST(CsvReader, SeparateFilesMustMatch)
{
    std::istringstream p("m1,m2\n1,0\n0,0\n");
    std::istringstream l("label\n1\n");
    const auto tp = cli::read_csv(p, "p");
    const auto tl = cli::read_csv(l, "l");
    EXPECT_THROW(cli::parse_separate(tp, tl, "p", "l"), Error);
}

TEST(ConfigFile, Tokens)
{
    std::istringstream in("# comment\nalpha = 0.05\nn_eval = \"100\"  # trailing\n\n");
    EXPECT_EQ(cli::config_arguments(in, "c"), (std::vector<std::string>{"--alpha=0.05", "--n-eval=100"}));
    std::istringstream bad("alpha 0.05\n");
    EXPECT_THROW(cli::config_arguments(bad, "c"), Error);
}

TEST(FormatDouble, RoundTrips)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int i = 0; i < 1000; ++i)
    {
        const double v = u(rng) * std::pow(10.0, (i % 20) - 10);
        EXPECT_EQ(std::stod(cli::format_double(v)), v);
    }
}

TEST_F(CliTest, SingleModelIsTwoZTests)
{
    const auto data = dataset("one.csv", {0.9}, 400, 3);
    const auto r = invoke({"evaluate", "--data", data, "--se0", "0.8", "--sp0", "0.8"});
    ASSERT_TRUE(r.code == 0 || r.code == 2) << r.err;
    const json j = json::parse(r.out);
    EXPECT_NEAR(j["c_alpha"].get<double>(), z975(), 1e-3);
    const auto& m = j["models"][0];
    const double z = z975();
    const bool expect = m["t_se"].get<double>() > z && m["t_sp"].get<double>() > z;
    EXPECT_EQ(m["rejected"].get<bool>(), expect);
    EXPECT_EQ(r.code, expect ? 0 : 2);
    EXPECT_EQ(j["seed"].get<std::uint64_t>(), 20200322u);
    EXPECT_EQ(j["version"], cli::tool_version);
}

TEST_F(CliTest, PerfectPredictionsAreRegularized)
{
    std::string body = "label,m1\n";
    for (int i = 0; i < 60; ++i)
    {
        body += std::to_string(i % 2) + "," + std::to_string(i % 2) + "\n";
    }
    const auto r = invoke({"evaluate", "--data", write("perfect.csv", body)});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    const auto& m = j["models"][0];
    EXPECT_NEAR(m["se_hat"].get<double>(), 31.0 / 32.0, 1e-15);
    EXPECT_GT(m["ci_lower_se"].get<double>(), 0.8);
    EXPECT_TRUE(m["rejected"].get<bool>());
}

TEST_F(CliTest, FailedStudyExitCode)
{
    const auto data = dataset("weak.csv", {0.6, 0.62}, 200, 4);
    const auto r = invoke({"evaluate", "--data", data, "--se0", "0.9"});
    EXPECT_EQ(r.code, 2) << r.err;
}

TEST_F(CliTest, ErrorsExitOne)
{
    const auto r = invoke({"evaluate", "--data", write("bad.csv", "label,m1\n1,1\n0\n")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(":3"), std::string::npos) << r.err;
    EXPECT_EQ(invoke({"evaluate"}).code, 1);
    EXPECT_EQ(invoke({"nonsense"}).code, 1);
    EXPECT_EQ(invoke({"evaluate", "--data", "x.csv", "--format", "xml"}).code, 1);
}

TEST_F(CliTest, SeparateFilesMatchCombined)
{
    const auto combined = invoke({"evaluate", "--data", write("c.csv", "label,a,b\n1,1,0\n1,1,1\n0,0,0\n0,1,0\n1,1,1\n0,0,1\n")});
    const auto separate = invoke({"evaluate", "--predictions", write("p.csv", "a,b\n1,0\n1,1\n0,0\n1,0\n1,1\n0,1\n"),
                                  "--labels", write("l.csv", "label\n1\n1\n0\n0\n1\n0\n")});
    EXPECT_EQ(combined.out, separate.out);
}

TEST_F(CliTest, JsonRoundTripIsExact)
{
    const auto data = dataset("rt.csv", {0.85, 0.9, 0.88}, 300, 5);
    const auto r = invoke({"evaluate", "--data", data, "--out-dir", (dir / "out").string()});
    ASSERT_NE(r.code, 1) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(json::parse(j.dump()), j);

    // CSV numbers equal the JSON numbers bit for bit
    std::ifstream csv(dir / "out" / "evaluate.csv");
    const auto table = cli::read_csv(csv, "evaluate.csv");
    for (std::size_t m = 0; m < 3; ++m)
    {
        EXPECT_EQ(std::stod(table.rows[m][1]), j["models"][m]["se_hat"].get<double>());
        EXPECT_EQ(std::stod(table.rows[m][9]), j["models"][m]["corrected_se"].get<double>());
    }
    std::ifstream js(dir / "out" / "evaluate.json");
    EXPECT_EQ(json::parse(js), j);
}

TEST_F(CliTest, RerunIsByteIdentical)
{
    const auto data = dataset("rep.csv", {0.85, 0.9, 0.88, 0.86}, 300, 6);
    const auto a = invoke({"evaluate", "--data", data, "--seed", "77"});
    const auto b = invoke({"evaluate", "--data", data, "--seed", "77"});
    EXPECT_EQ(a.out, b.out);
    const auto sa = invoke({"plan-efp", "--data", data, "--seed", "77", "--n-eval", "100", "--max-iter", "20"});
    const auto sb = invoke({"plan-efp", "--data", data, "--seed", "77", "--n-eval", "100", "--max-iter", "20"});
    ASSERT_EQ(sa.code, 0) << sa.err;
    EXPECT_EQ(sa.out, sb.out);
}

TEST_F(CliTest, ConfigPrecedence)
{
    const auto data = dataset("cfg.csv", {0.9}, 200, 7);
    const auto cfg = write("run.cfg", "alpha = 0.05\nse0 = 0.7\nsp0 = 0.7\n");
    const json from_file = json::parse(invoke({"evaluate", "--data", data, "--config", cfg}).out);
    EXPECT_EQ(from_file["alpha"].get<double>(), 0.05);
    EXPECT_EQ(from_file["threshold"]["se0"].get<double>(), 0.7);
    const json flag = json::parse(invoke({"evaluate", "--alpha", "0.01", "--data", data, "--config", cfg}).out);
    EXPECT_EQ(flag["alpha"].get<double>(), 0.01);
    EXPECT_EQ(flag["threshold"]["se0"].get<double>(), 0.7);
    const json defaults = json::parse(invoke({"evaluate", "--data", data}).out);
    EXPECT_EQ(defaults["alpha"].get<double>(), 0.025);

    const auto bad = write("bad.cfg", "alpha = 0.05\nwidgets = 3\n");
    const auto r = invoke({"evaluate", "--data", data, "--config", bad});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
}

TEST_F(CliTest, DeltaDefinesSpecificityThreshold)
{
    const auto data = dataset("d.csv", {0.9}, 200, 8);
    const json j = json::parse(invoke({"evaluate", "--data", data, "--se0", "0.8", "--delta0", "0.05"}).out);
    EXPECT_NEAR(j["threshold"]["sp0"].get<double>(), 0.75, 1e-15);
    EXPECT_EQ(invoke({"evaluate", "--data", data, "--se0", "0.8", "--sp0", "0.7", "--delta0", "0.05"}).code, 1);
}

TEST_F(CliTest, SelectRules)
{
    const auto data = dataset("val.csv", {0.7, 0.9, 0.8, 0.89}, 400, 9);
    const json def = json::parse(invoke({"select", "--data", data}).out);
    ASSERT_EQ(def["selected"].size(), 1u);
    EXPECT_EQ(def["selected"][0], "m2");

    const json within = json::parse(invoke({"select", "--data", data, "--rule", "within_k_se", "--k", "1"}).out);
    // independent recomputation of the within-1-SE set from the reported accuracies
    const auto& models = within["models"];
    double best = -1;
    double best_se = 0;
    for (const auto& m : models)
    {
        if (m["balanced_accuracy"].get<double>() > best)
        {
            best = m["balanced_accuracy"].get<double>();
            best_se = m["balanced_accuracy_se"].get<double>();
        }
    }
    std::vector<std::string> expect;
    for (const auto& m : models)
    {
        if (m["balanced_accuracy"].get<double>() >= best - best_se)
        {
            expect.push_back(m["name"]);
        }
    }
    EXPECT_EQ(within["selected"].get<std::vector<std::string>>(), expect);
    EXPECT_GE(within["selected"].size(), def["selected"].size());
}

TEST_F(CliTest, PlanEfpWritesCurve)
{
    const auto data = dataset("efp.csv", {0.8, 0.82, 0.85, 0.84, 0.78, 0.86}, 300, 10);
    const auto out = (dir / "efp").string();
    const auto r = invoke({"plan-efp", "--data", data, "--n-eval", "100,400", "--max-iter", "40", "--out-dir", out});
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    ASSERT_EQ(j["efp"].size(), 2u);
    EXPECT_EQ(j["efp"][0]["curve"].size(), 6u);
    const auto s_star = j["efp"][0]["s_star"].get<std::size_t>();
    EXPECT_EQ(j["selected"].size(), s_star);
    std::ifstream f(fs::path(out) / "efp_curve.csv");
    const auto t = cli::read_csv(f, "efp_curve.csv");
    EXPECT_EQ(t.rows.size(), 12u);
    EXPECT_EQ(t.header[3], "efp");
    // select --rule optimal_efp is the same command
    const auto same = invoke({"select", "--rule", "optimal_efp", "--data", data, "--n-eval", "100,400", "--max-iter", "40"});
    EXPECT_EQ(json::parse(same.out)["efp"], j["efp"]);
}

TEST_F(CliTest, SimulateLfcGrid)
{
    const auto r = invoke({"simulate-lfc", "--num-models", "1,2", "--theta0", "0.8", "--epsilon", "0", "--n", "100,200",
                           "--n-sim", "30", "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    const auto t = cli::read_csv(in, "lfc");
    EXPECT_EQ(t.rows.size(), 4u * 3u);
    EXPECT_EQ(t.header.back(), "value");
    for (const auto& row : t.rows)
    {
        EXPECT_EQ(row[11], "30");
    }
}

TEST_F(CliTest, SimulateLfcConfigAndOverride)
{
    const auto cfg = write("grid.cfg", "num_models = 2\nn = 150\nn_sim = 50\nprevalence = 0.3\n");
    const json a = json::parse(invoke({"simulate-lfc", "--config", cfg}).out);
    EXPECT_EQ(a["scenarios"][0]["n_sim"].get<int>(), 50);
    EXPECT_EQ(a["scenarios"][0]["prevalence"].get<double>(), 0.3);
    const json b = json::parse(invoke({"simulate-lfc", "--config", cfg, "--n-sim", "20"}).out);
    EXPECT_EQ(b["scenarios"][0]["n_sim"].get<int>(), 20);
}

TEST_F(CliTest, InvalidEpsilonFailsBeforeSimulation)
{
    const auto out = (dir / "never").string();
    const auto r = invoke({"simulate-lfc", "--num-models", "2,20", "--theta0", "0.8", "--epsilon", "0.05", "--n-sim",
                           "100000", "--out-dir", out});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("ConfigError"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, Executable)
{
    const auto data = dataset("exe.csv", {0.95}, 200, 11);
    const std::string cmd = std::string(COPRIMARY_TOOL_PATH) + " evaluate --data " + data + " --format csv > " +
                            (dir / "exe.out").string();
    const int status = std::system(cmd.c_str());
    ASSERT_NE(status, -1);
    EXPECT_EQ(WEXITSTATUS(status), 0);
    std::ifstream f(dir / "exe.out");
    const auto t = cli::read_csv(f, "exe.out");
    EXPECT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.header.front(), "model");
    EXPECT_EQ(WEXITSTATUS(std::system((std::string(COPRIMARY_TOOL_PATH) + " --version > /dev/null").c_str())), 0);
}
