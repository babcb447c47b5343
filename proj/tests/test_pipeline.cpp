#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stagematte/pipeline.hpp"
#include "stagematte/png_io.hpp"
#include "test_util.hpp"

#ifndef STAGEMATTE_SOURCE_DIR
#error "STAGEMATTE_SOURCE_DIR must point at the repository root"
#endif

using namespace stagematte;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(const fs::path& ws, std::vector<std::string> args)
{
    args.insert(args.begin(), {"--workspace", ws.string()});
    std::ostringstream out, err;
    const int code = pipeline::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string smoke_config() { return (fs::path(STAGEMATTE_SOURCE_DIR) / "configs" / "smoke.json").string(); }

int line_count(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// Runs the whole smoke pipeline into `ws`; returns the eval table.
std::string run_smoke_pipeline(const fs::path& ws)
{
    const std::string c = smoke_config();
    const std::vector<std::vector<std::string>> steps = {
        {"gen-data", "--config", c, "--out", "data"},
        {"train-base", "--model", "teacher", "--config", c, "--manifest", "data/manifest.jsonl", "--out", "teacher.ckpt"},
        {"train-base", "--model", "student", "--config", c, "--manifest", "data/manifest.jsonl", "--out", "student.ckpt"},
        {"finetune-teacher", "--config", c, "--manifest", "data/manifest.jsonl", "--checkpoint", "teacher.ckpt", "--out",
         "teacher_ft.ckpt"},
        {"distill", "--checkpoint", "teacher_ft.ckpt", "--manifest", "data/manifest.jsonl", "--out", "distill"},
        {"finetune-student", "--config", c, "--manifest", "distill/manifest.jsonl", "--checkpoint", "student.ckpt",
         "--out", "student_ft.ckpt"},
        {"finetune-student-direct", "--config", c, "--manifest", "data/manifest.jsonl", "--checkpoint", "student.ckpt",
         "--out", "student_direct.ckpt"},
        {"predict", "--checkpoint", "student_ft.ckpt", "--manifest", "data/manifest.jsonl", "--out", "pred"},
        {"export-review", "--manifest", "data/manifest.jsonl", "--pred", "pred", "--out", "review"},
        {"qc", "--config", c, "--manifest", "data/manifest.jsonl", "--pred", "pred", "--json", "qc.json"},
    };
    for (const auto& s : steps) {
        const auto r = cli(ws, s);
        EXPECT_EQ(r.code, 0) << s[0] << ": " << r.err;
    }
    const auto ev = cli(ws, {"eval", "--manifest", "data/manifest.jsonl", "--pred", "pred", "--json", "eval.json"});
    EXPECT_EQ(ev.code, 0) << ev.err;
    return ev.out;
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageErrorWithOneLine)
{
    test::TempDir ws;
    const auto r = cli(ws.path, {"eval", "--bogus"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(line_count(r.err), 1) << r.err;
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST(Cli, MissingSubcommandIsUsageError)
{
    test::TempDir ws;
    EXPECT_EQ(cli(ws.path, {}).code, 1);
    EXPECT_EQ(cli(ws.path, {"--help"}).code, 0);
}

TEST(Cli, MissingFilesAreDataErrors)
{
    test::TempDir ws;
    const auto r = cli(ws.path, {"eval", "--manifest", "nope.jsonl", "--pred", "p"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(line_count(r.err), 1) << r.err;
    EXPECT_EQ(cli(ws.path, {"gen-data", "--config", "missing.json", "--out", "d"}).code, 2);
}

TEST(Cli, ExistingOutputsNeedForce)
{
    test::TempDir ws;
    const std::string c = smoke_config();
    ASSERT_EQ(cli(ws.path, {"gen-data", "--config", c, "--out", "d"}).code, 0);
    const auto again = cli(ws.path, {"gen-data", "--config", c, "--out", "d"});
    EXPECT_EQ(again.code, 1);
    EXPECT_NE(again.err.find("--force"), std::string::npos);
    EXPECT_EQ(cli(ws.path, {"--force", "gen-data", "--config", c, "--out", "d"}).code, 0);
}

TEST(Cli, BadSplitAndRatiosRejected)
{
    test::TempDir ws;
    ASSERT_EQ(cli(ws.path, {"gen-data", "--config", smoke_config(), "--out", "d"}).code, 0);
    EXPECT_EQ(cli(ws.path, {"eval", "--manifest", "d/manifest.jsonl", "--pred", "p", "--split", "everything"}).code, 1);
    EXPECT_EQ(cli(ws.path, {"ratio-sweep", "--manifest", "d/manifest.jsonl", "--checkpoint", "x", "--out", "r",
                            "--values", "0,1.5"})
                  .code,
              1);
}

TEST(Cli, TrainingOnValidationIsRejected)
{
    test::TempDir ws;
    const std::string c = smoke_config();
    ASSERT_EQ(cli(ws.path, {"gen-data", "--config", c, "--out", "d"}).code, 0);
    ASSERT_EQ(cli(ws.path, {"train-base", "--config", c, "--manifest", "d/manifest.jsonl", "--out", "t.ckpt"}).code, 0);
    ASSERT_EQ(cli(ws.path, {"train-base", "--model", "student", "--config", c, "--manifest", "d/manifest.jsonl", "--out",
                            "s.ckpt"})
                  .code,
              0);
    ASSERT_EQ(cli(ws.path, {"distill", "--checkpoint", "t.ckpt", "--manifest", "d/manifest.jsonl", "--out", "p"}).code, 0);
    // A pseudo-labelled record relabelled as validation must be refused.
    const fs::path m = ws.path / "p" / "manifest.jsonl";
    std::ifstream in(m);
    std::stringstream ss;
    ss << in.rdbuf();
    in.close();
    std::string text = ss.str();
    const std::size_t pos = text.find("\"unlabeled\"");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, std::strlen("\"unlabeled\""), "\"validation\"");
    std::ofstream(m) << text;
    const auto r = cli(ws.path, {"finetune-student", "--config", c, "--manifest", "p/manifest.jsonl", "--checkpoint",
                                 "s.ckpt", "--out", "sf.ckpt"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(line_count(r.err), 1) << r.err;
    EXPECT_NE(r.err.find("validation"), std::string::npos);
}

TEST(Cli, EvalOfGroundTruthIsAllZero)
{
    test::TempDir ws;
    ASSERT_EQ(cli(ws.path, {"gen-data", "--config", smoke_config(), "--out", "d"}).code, 0);
    const auto manifest = DatasetManifest::load(ws.path / "d" / "manifest.jsonl");
    fs::create_directories(ws.path / "gt");
    for (const auto& r : manifest.by_role(Role::Validation))
        fs::copy_file(manifest.resolve(*r.alpha_gt), ws.path / "gt" / (r.id + ".png"));
    const auto r = cli(ws.path, {"eval", "--manifest", "d/manifest.jsonl", "--pred", "gt", "--band", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string last = r.out.substr(r.out.rfind("mean"));
    EXPECT_GE(std::count(last.begin(), last.end(), '0'), 9) << last;
    EXPECT_EQ(last.find_first_of("123456789"), std::string::npos) << last;
}

TEST(Cli, SmokePipelineEmitsArtifactsDeterministically)
{
    test::TempDir a, b;
    const std::string table_a = run_smoke_pipeline(a.path);
    const std::string table_b = run_smoke_pipeline(b.path);
    EXPECT_EQ(table_a, table_b);
    for (const char* f : {"teacher.ckpt", "student.ckpt", "teacher_ft.ckpt", "student_ft.ckpt", "student_direct.ckpt",
                          "teacher.ckpt.loss.tsv", "distill/manifest.jsonl", "pred/val_0000.png",
                          "review/val_0000_review.png", "eval.json", "qc.json"}) {
        ASSERT_TRUE(fs::exists(a.path / f)) << f;
        EXPECT_EQ(read_file(a.path / f), read_file(b.path / f)) << f;
    }
}
