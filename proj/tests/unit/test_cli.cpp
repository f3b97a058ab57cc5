#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = MA2_TEST_DATA_DIR;

struct Output {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ma2_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Output cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + MA2_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Output o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
}

}  // namespace

TEST(Cli, Eigcheck) {
    const auto dir = scratch("eig");
    const auto o = cli("eigcheck --draws 20", dir);
    ASSERT_EQ(o.code, 0) << o.err;
    const auto j = json::parse(o.out);
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_EQ(j["draws"].get<int>(), 60);
    EXPECT_TRUE(j["failures"].empty());
    EXPECT_LE(j["max_rel_err_first"].get<double>(), 1e-6);
    EXPECT_EQ(cli("eigcheck --n 3 --draws 5 --seed 9", dir).out, cli("eigcheck --n 3 --draws 5 --seed 9", dir).out);
}

TEST(Cli, SolveThenCertify) {
    const auto dir = scratch("solve");
    const auto s = cli("solve \"" + (kData / "problem_exp_radial.json").string() + "\" --out \"" + (dir / "run").string() +
                           "\"",
                       dir);
    ASSERT_EQ(s.code, 0) << s.err;
    const auto sj = json::parse(s.out);
    EXPECT_LE(sj["residual_norm"].get<double>(), 1e-8);
    EXPECT_GT(sj["convexity_margin"].get<double>(), 0.0);
    EXPECT_LE(sj["error_vs_exact"].get<double>(), 1e-3);
    for (const char* f : {"problem.json", "result.json", "field.csv"}) EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;

    const auto c = cli("certify \"" + (dir / "run").string() + "\" --out \"" + (dir / "cert.json").string() + "\"", dir);
    ASSERT_EQ(c.code, 0) << c.err;
    const auto cj = json::parse(c.out);
    for (const char* key : {"x0", "phi_max", "case_label", "residuals", "margins", "invariants", "overrides"})
        EXPECT_TRUE(cj.contains(key)) << key;
    EXPECT_EQ(cj["case_label"].get<std::string>(), "A");
    EXPECT_TRUE(cj["invariants"]["all"].get<bool>());
    EXPECT_TRUE(cj["overrides"].empty());
    EXPECT_EQ(slurp(dir / "cert.json"), c.out);

    const auto o = cli("certify \"" + (dir / "run").string() + "\" --beta 3", dir);
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(json::parse(o.out)["overrides"], json::array({"beta"}));
}

TEST(Cli, SweepAndReport) {
    const auto dir = scratch("sweep");
    fs::copy_file(kData / "sweep_kappa.json", dir / "sweep.json");
    const auto a = cli("sweep \"" + (dir / "sweep.json").string() + "\" --jobs 1", dir);
    ASSERT_EQ(a.code, 0) << a.err;
    const std::string csv = slurp(dir / "records.csv");
    const std::string summary = slurp(dir / "summary.json");
    const auto j = json::parse(summary);
    EXPECT_EQ(j["record_count"].get<int>(), 10);
    EXPECT_TRUE(j["all_passed"].get<bool>());
    ASSERT_EQ(j["fits"].size(), 1u);

    const auto b = cli("sweep \"" + (dir / "sweep.json").string() + "\" --jobs 4", dir);
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(slurp(dir / "records.csv"), csv);
    EXPECT_EQ(slurp(dir / "summary.json"), summary);

    const auto r = cli("report \"" + (dir / "records.csv").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(json::parse(r.out)["all_passed"].get<bool>());
}

TEST(Cli, Errors) {
    const auto dir = scratch("err");
    EXPECT_EQ(cli("sweep \"" + (kData / "sweep_bad.json").string() + "\"", dir).code, 2);
    EXPECT_EQ(cli("sweep \"" + (dir / "missing.json").string() + "\"", dir).code, 2);
    EXPECT_EQ(cli("", dir).code, 2);
    EXPECT_EQ(cli("frobnicate", dir).code, 2);
    EXPECT_EQ(cli("eigcheck --n 9", dir).code, 2);
    EXPECT_EQ(cli("certify \"" + dir.string() + "\"", dir).code, 2);
    const auto help = cli("--help", dir);
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("eigcheck"), std::string::npos);
}
