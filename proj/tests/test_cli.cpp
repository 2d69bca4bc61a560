#include <cirmil/cli.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

using namespace cirmil;
using namespace cirmil::cli;

namespace {

ParseResult parse(std::vector<std::string> args)
{
    args.insert(args.begin(), "cirmil");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return parse_args(static_cast<int>(argv.size()), argv.data());
}

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr)
{
    args.insert(args.begin(), "cirmil");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), o, e);
    if (out)
        *out = o.str();
    if (err)
        *err = e.str();
    return code;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content)
{
    const auto path = std::filesystem::temp_directory_path() / ("cirmil_test_" + name);
    std::ofstream(path) << content;
    return path;
}

std::vector<std::string> data_lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream ss(text);
    for (std::string line; std::getline(ss, line);)
        if (!line.empty() && line[0] != '#')
            out.push_back(line);
    return out;
}

} // namespace

TEST(Fmt17, RoundTrips)
{
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678, 0.0}) {
        EXPECT_EQ(std::stod(fmt17(v)), v);
    }
    EXPECT_EQ(fmt17(0.0), "0");
    EXPECT_EQ(fmt17(0.25), "0.25");
}

TEST(ParseArgs, Defaults)
{
    const ParseResult r = parse({"simulate"});
    ASSERT_TRUE(r.config);
    EXPECT_DOUBLE_EQ(r.config->params().a(), 0.5);
    EXPECT_EQ(r.config->reps, 10000u);
    EXPECT_EQ(r.config->format, Format::csv);
}

TEST(ParseArgs, DeltaAlternative)
{
    const ParseResult r = parse({"simulate", "--delta", "2", "--sigma", "1"});
    ASSERT_TRUE(r.config);
    EXPECT_DOUBLE_EQ(r.config->params().a(), 0.5);
    EXPECT_DOUBLE_EQ(r.config->params().delta(), 2.0);
}

TEST(ParseArgs, Errors)
{
    EXPECT_EQ(parse({"simulate", "--a", "1", "--delta", "1"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--sigma", "-1"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--x0", "-0.1"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--levels", "9..3"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--levels", "x"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--p", "0.5"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--reps", "-3"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--format", "xml"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--scheme", "euler"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--preset", "nope"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"frobnicate"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--unknown", "1"}).exit_code, kExitConfig);
    EXPECT_EQ(parse({}).exit_code, kExitConfig);
    EXPECT_EQ(parse({"simulate", "--b", "1x"}).exit_code, kExitConfig);
}

TEST(ParseArgs, LevelForms)
{
    const ParseResult single = parse({"simulate", "--levels", "7"});
    ASSERT_TRUE(single.config);
    EXPECT_EQ(single.config->level_lo, 7u);
    EXPECT_EQ(single.config->level_hi, 7u);
    const ParseResult range = parse({"simulate", "--levels", "3..9", "--p", "1,2,4"});
    ASSERT_TRUE(range.config);
    EXPECT_EQ(range.config->level_lo, 3u);
    EXPECT_EQ(range.config->level_hi, 9u);
    EXPECT_EQ(range.config->p, (std::vector<double>{1, 2, 4}));
}

TEST(ParseArgs, Precedence)
{
    // defaults < preset < config file < flags
    const auto file = temp_file("prec.ini", "b = 0.25\nx0 = 3\nreps = 77\n");
    const ParseResult r = parse({"convergence", "--preset", "fig2", "--config", file.string(), "--x0", "4"});
    ASSERT_TRUE(r.config) << r.message;
    EXPECT_DOUBLE_EQ(r.config->b, 0.25);  // file over preset
    EXPECT_DOUBLE_EQ(r.config->x0, 4.0);  // flag over file
    EXPECT_EQ(r.config->reps, 77u);       // file over default
    EXPECT_DOUBLE_EQ(r.config->sigma, 2.0);
    EXPECT_EQ(r.config->level_hi, 12u);   // preset over default
    std::filesystem::remove(file);
}

TEST(ParseArgs, ConfigFileRejectsUnknownKeys)
{
    const auto file = temp_file("bad.ini", "b = 0.25\ncolour = blue\n");
    EXPECT_EQ(parse({"simulate", "--config", file.string()}).exit_code, kExitConfig);
    std::filesystem::remove(file);
    EXPECT_EQ(parse({"simulate", "--config", "/nonexistent/cirmil.ini"}).exit_code, kExitConfig);
}

TEST(ParseArgs, PresetKeepsExplicitDelta)
{
    const ParseResult r = parse({"convergence", "--preset", "fig2", "--delta", "1"});
    ASSERT_TRUE(r.config);
    EXPECT_DOUBLE_EQ(r.config->params().a(), 1.0);
}

TEST(Simulate, OutputShape)
{
    std::string out;
    ASSERT_EQ(run({"simulate", "--levels", "2", "--seed", "4", "--x0", "0.125"}, &out), kExitOk);
    const auto lines = data_lines(out);
    ASSERT_EQ(lines.size(), 6u);
    EXPECT_EQ(lines[0], "t,y");
    EXPECT_EQ(lines[1], "0,0.125");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const double y = std::stod(lines[i].substr(lines[i].find(',') + 1));
        EXPECT_GE(y, 0.0);
    }
    for (const char* key : {"# scheme: truncated-milstein", "# seed: 4", "# reps: ", "# eval_policy: ", "# version: ",
                            "# params: "})
        EXPECT_NE(out.find(key), std::string::npos) << key;
}

TEST(Simulate, ByteIdenticalAcrossRuns)
{
    std::string a, b;
    run({"simulate", "--levels", "2", "--seed", "9"}, &a);
    run({"simulate", "--levels", "2", "--seed", "9"}, &b);
    EXPECT_EQ(a, b);
    std::string c;
    run({"simulate", "--levels", "2", "--seed", "10"}, &c);
    EXPECT_NE(a, c);
}

TEST(Simulate, JsonFormat)
{
    std::string out;
    ASSERT_EQ(run({"simulate", "--levels", "3", "--format", "json"}, &out), kExitOk);
    const auto j = nlohmann::json::parse(out);
    EXPECT_EQ(j["y"].size(), 9u);
    EXPECT_EQ(j["metadata"]["scheme"], "truncated-milstein");
}

TEST(Convergence, RowsAndSummary)
{
    std::string out, err;
    ASSERT_EQ(run({"convergence", "--preset", "fig2", "--levels", "2..6", "--reps", "200"}, &out, &err), kExitOk);
    const auto lines = data_lines(out);
    ASSERT_EQ(lines.size(), 1u + 2u * 5u);
    EXPECT_EQ(lines[0], "p,N,error,stderr,reps");
    EXPECT_EQ(lines[1].substr(0, 5), "1,4,0");
    const auto summary = nlohmann::json::parse(err);
    ASSERT_EQ(summary["fits"].size(), 2u);
    EXPECT_TRUE(summary["fits"][0]["rate"].is_number());
    EXPECT_EQ(summary["criterion"], "consecutive-difference");
}

TEST(Convergence, SidecarSummaryFile)
{
    const auto dir = std::filesystem::temp_directory_path() / "cirmil_cli_sidecar";
    std::filesystem::create_directories(dir);
    const auto out = dir / "run.csv";
    ASSERT_EQ(run({"convergence", "--levels", "2..5", "--reps", "100", "--out", out.string()}), kExitOk);
    EXPECT_TRUE(std::filesystem::exists(out));
    EXPECT_TRUE(std::filesystem::exists(dir / "run.summary.json"));
    std::filesystem::remove_all(dir);
}

TEST(OracleCompare, RequiresBesselParameters)
{
    std::string err;
    EXPECT_EQ(run({"oracle-compare", "--levels", "2..5", "--reps", "100"}, nullptr, &err), kExitConfig);
    std::string out;
    EXPECT_EQ(run({"oracle-compare", "--preset", "bessel1", "--levels", "2..5", "--reps", "100", "--format", "json"},
                  &out),
              kExitOk);
    const auto j = nlohmann::json::parse(out);
    EXPECT_EQ(j["criterion"], "vs-oracle");
    EXPECT_EQ(j["rows"].size(), 4u);
}

TEST(Check, SuitesAndExitCodes)
{
    std::string out;
    EXPECT_EQ(run({"check", "--suite", "scaling", "--reps", "20000"}, &out), kExitOk);
    EXPECT_TRUE(nlohmann::json::parse(out)["pass"].get<bool>());
    EXPECT_EQ(run({"check", "--suite", "appendix"}, &out), kExitOk);
    EXPECT_EQ(run({"check", "--suite", "a1", "--delta", "1", "--b", "0"}, &out), kExitOk);
    EXPECT_EQ(run({"check", "--suite", "lemma-initial", "--reps", "100000"}, &out), kExitOk);
    const auto j = nlohmann::json::parse(out);
    EXPECT_EQ(j["suite"], "lemma-initial");
    EXPECT_TRUE(j.contains("statistics"));
    EXPECT_EQ(run({"check", "--suite", "nope"}), kExitConfig);
    EXPECT_EQ(run({"check"}), kExitConfig);
}

TEST(Check, FailingSuiteExitsOne)
{
    // clipped Euler's local error is not of Milstein type
    std::string out;
    EXPECT_EQ(run({"check", "--suite", "a2", "--delta", "1", "--b", "0", "--scheme", "clipped-euler", "--reps", "5000"},
                  &out),
              kExitCheckFailed);
    EXPECT_FALSE(nlohmann::json::parse(out)["pass"].get<bool>());
}

TEST(Io, UnwritableOutput)
{
    std::string err;
    EXPECT_EQ(run({"simulate", "--out", "/nonexistent-dir/x.csv"}, nullptr, &err), kExitIo);
    EXPECT_NE(err.find("I/O"), std::string::npos);
}

TEST(Execute, IndependentOfThreadCount)
{
    RunConfig cfg = *parse({"convergence", "--preset", "fig2", "--levels", "2..6", "--reps", "500"}).config;
    const Outputs a = execute(cfg, Executor{1});
    const Outputs b = execute(cfg, Executor{4});
    EXPECT_EQ(a.primary, b.primary);
    EXPECT_EQ(*a.summary, *b.summary);
    EXPECT_EQ(a.primary.find("thread"), std::string::npos);
}

TEST(Help, ExitsZero)
{
    std::string out;
    EXPECT_EQ(run({"--help"}, &out), kExitOk);
    EXPECT_NE(out.find("--levels"), std::string::npos);
}
