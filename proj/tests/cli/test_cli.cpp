#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include <circuitgcl/binary_io.hpp>
#include <circuitgcl/report.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

/// Runs the CLI with stderr folded into stdout.
Run cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(CIRCUITGCL_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("circuitgcl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

const std::string kFixtures = CIRCUITGCL_FIXTURES;
const std::string kSmallPretrain = "--epochs 3 --lr 0.1 --hidden 16 --layers 2";
const std::string kSmallTask = "--epochs 2 --lr 1e-2 --set task.hidden_dim=16 task.n_layers=2";

nlohmann::ordered_json load_report(const std::string& p) {
    return nlohmann::ordered_json::parse(circuitgcl::read_text_file(p));
}

}  // namespace

TEST_F(CliTest, SynthIsByteIdenticalAcrossRuns) {
    ASSERT_EQ(cli("synth --cells 200 --seed 42 -o " + path("a.cgl")).code, 0);
    ASSERT_EQ(cli("synth --cells 200 --seed 42 -o " + path("b.cgl")).code, 0);
    EXPECT_EQ(circuitgcl::read_file(path("a.cgl")), circuitgcl::read_file(path("b.cgl")));
    EXPECT_TRUE(fs::exists(path("a.cgl.config.ini")));
}

TEST_F(CliTest, SynthRejectsBadConfig) {
    EXPECT_EQ(cli("synth --cells 0 --seed 1 -o " + path("x.cgl")).code, 2);
    EXPECT_EQ(cli("synth --coupling-density 2.0 --seed 1 -o " + path("x.cgl")).code, 2);
    EXPECT_FALSE(fs::exists(path("x.cgl")));
}

TEST_F(CliTest, SeedIsMandatoryWithEnvironmentFallback) {
    const auto r = cli("synth --cells 10 -o " + path("x.cgl"), "env -u CIRCUITGCL_SEED");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("seed"), std::string::npos);
    EXPECT_EQ(cli("synth --cells 10 -o " + path("y.cgl"), "CIRCUITGCL_SEED=7").code, 0);
    ASSERT_EQ(cli("synth --cells 10 --seed 7 -o " + path("z.cgl")).code, 0);
    EXPECT_EQ(circuitgcl::read_file(path("y.cgl")), circuitgcl::read_file(path("z.cgl")));
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
    {
        std::ofstream ini(path("run.ini"));
        ini << "[run]\nseed = 5\n[synth]\ncells = 10\n";
    }
    ASSERT_EQ(cli("synth -c " + path("run.ini") + " --cells 12 -o " + path("a.cgl")).code, 0);
    const std::string snap = circuitgcl::read_text_file(path("a.cgl.config.ini"));
    EXPECT_NE(snap.find("cells=12"), std::string::npos);
    EXPECT_NE(snap.find("seed=5"), std::string::npos);
    // The snapshot is itself a valid config reproducing the run.
    ASSERT_EQ(cli("synth -c " + path("a.cgl.config.ini") + " -o " + path("b.cgl")).code, 0);
    EXPECT_EQ(circuitgcl::read_file(path("a.cgl")), circuitgcl::read_file(path("b.cgl")));
}

TEST_F(CliTest, UnknownConfigKeyIsUsageError) {
    {
        std::ofstream ini(path("bad.ini"));
        ini << "[synth]\ncellz = 10\n";
    }
    const auto r = cli("synth -c " + path("bad.ini") + " --seed 1 -o " + path("a.cgl"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("synth.cellz"), std::string::npos);
    EXPECT_EQ(cli("synth --set synth.nope=1 --seed 1 -o " + path("a.cgl")).code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST_F(CliTest, IngestFixture) {
    const auto r = cli("ingest --netlist " + kFixtures + "/netlists/inverter_chain.sp --spf " + kFixtures +
                       "/spf/inverter_chain.spf -o " + path("inv.cgl"));
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(path("inv.cgl")));
    EXPECT_NE(r.out.find("nodes:"), std::string::npos);
}

TEST_F(CliTest, IngestMissingFile) {
    const auto r = cli("ingest --netlist " + path("absent.sp") + " -o " + path("x.cgl"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find("file not found"), std::string::npos);
}

TEST_F(CliTest, IngestMalformedReportsFileAndLine) {
    const std::string f = kFixtures + "/netlists/bad_mos.sp";
    const auto r = cli("ingest --netlist " + f + " -o " + path("x.cgl"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find(f + ":line 3"), std::string::npos) << r.out;
}

TEST_F(CliTest, FullPipelineAndLossSwap) {
    ASSERT_EQ(cli("synth --cells 30 --seed 3 -o " + path("train.cgl")).code, 0);
    ASSERT_EQ(cli("synth --cells 30 --seed 4 -o " + path("test.cgl")).code, 0);
    ASSERT_EQ(cli("pretrain --graph " + path("train.cgl") + " --seed 3 " + kSmallPretrain + " -o " + path("p.ckpt") +
                  " --embeddings " + path("emb.csv"))
                  .code,
              0);
    EXPECT_TRUE(fs::exists(path("emb.csv")));
    const auto pre = load_report(path("p.ckpt.report.json"));
    EXPECT_TRUE(pre["payload"].contains("mean_pairwise_distance"));

    for (const std::string loss : {"mse", "gai", "bmc"}) {
        const auto r = cli("train --graph " + path("train.cgl") + " --pretrained " + path("p.ckpt") +
                           " --seed 3 --task edge --loss " + loss + " " + kSmallTask + " -o " + path(loss + ".ckpt"));
        ASSERT_EQ(r.code, 0) << r.out;
        ASSERT_EQ(cli("eval --graph " + path("test.cgl") + " --model " + path(loss + ".ckpt") + " --report " +
                      path(loss + "_eval.json"))
                      .code,
                  0);
        const auto rep = load_report(path(loss + "_eval.json"));
        EXPECT_EQ(rep["schema_version"], circuitgcl::kReportSchemaVersion);
        EXPECT_TRUE(circuitgcl::verify_report(rep));
        for (const char* key : {"mae", "mse", "r2", "per_bin_mae"}) EXPECT_TRUE(rep["payload"]["metrics"].contains(key));
        EXPECT_EQ(rep["payload"]["metrics"]["loss"], loss);
    }
    EXPECT_NE(circuitgcl::read_file(path("mse_eval.json")), circuitgcl::read_file(path("gai_eval.json")));
}

TEST_F(CliTest, NodeClassificationPipeline) {
    ASSERT_EQ(cli("synth --cells 30 --seed 3 -o " + path("g.cgl")).code, 0);
    ASSERT_EQ(cli("pretrain --graph " + path("g.cgl") + " --seed 3 " + kSmallPretrain + " -o " + path("p.ckpt")).code, 0);
    ASSERT_EQ(cli("train --graph " + path("g.cgl") + " --pretrained " + path("p.ckpt") +
                  " --seed 3 --task node --loss bsmce " + kSmallTask + " -o " + path("m.ckpt"))
                  .code,
              0);
    ASSERT_EQ(cli("eval --graph " + path("g.cgl") + " --model " + path("m.ckpt")).code, 0);
    const auto rep = load_report(path("m.ckpt.eval.report.json"));
    for (const char* key : {"accuracy", "precision", "recall", "f1"}) EXPECT_TRUE(rep["payload"]["metrics"].contains(key));
}

TEST_F(CliTest, LossMustMatchTask) {
    ASSERT_EQ(cli("synth --cells 10 --seed 3 -o " + path("g.cgl")).code, 0);
    ASSERT_EQ(cli("pretrain --graph " + path("g.cgl") + " --seed 3 " + kSmallPretrain + " -o " + path("p.ckpt")).code, 0);
    EXPECT_EQ(cli("train --graph " + path("g.cgl") + " --pretrained " + path("p.ckpt") +
                  " --seed 3 --task node --loss gai -o " + path("m.ckpt"))
                  .code,
              2);
    EXPECT_EQ(cli("train --graph " + path("g.cgl") + " --pretrained " + path("p.ckpt") +
                  " --seed 3 --task edge --loss hinge -o " + path("m.ckpt"))
                  .code,
              2);
}

TEST_F(CliTest, CheckpointVersionMismatchIsNamed) {
    ASSERT_EQ(cli("synth --cells 10 --seed 3 -o " + path("g.cgl")).code, 0);
    ASSERT_EQ(cli("pretrain --graph " + path("g.cgl") + " --seed 3 " + kSmallPretrain + " -o " + path("p.ckpt")).code, 0);
    ASSERT_EQ(cli("train --graph " + path("g.cgl") + " --pretrained " + path("p.ckpt") + " --seed 3 " + kSmallTask +
                  " -o " + path("m.ckpt"))
                  .code,
              0);
    // Bump the u32 version after the 4-byte magic and re-seal the CRC.
    auto bytes = circuitgcl::read_file(path("m.ckpt"));
    bytes[4] = 99;
    const std::uint32_t crc = circuitgcl::crc32({bytes.data(), bytes.size() - 4});
    for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
    circuitgcl::write_file(path("m.ckpt"), bytes);
    const auto r = cli("eval --graph " + path("g.cgl") + " --model " + path("m.ckpt"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find("version 99"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("expected 1"), std::string::npos) << r.out;
}

TEST_F(CliTest, CorruptGraphIsIoError) {
    circuitgcl::write_text_file(path("junk.cgl"), "not a graph");
    EXPECT_EQ(cli("pretrain --graph " + path("junk.cgl") + " --seed 1 -o " + path("p.ckpt")).code, 3);
}

TEST_F(CliTest, GradcheckExitCodes) {
    const auto ok = cli("gradcheck --report " + path("gc.json"));
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("gai"), std::string::npos);
    EXPECT_TRUE(circuitgcl::verify_report(load_report(path("gc.json"))));
    EXPECT_EQ(cli("gradcheck --inject-bug").code, 1);
    EXPECT_EQ(cli("gradcheck --tolerance 1e-12").code, 1);
    EXPECT_EQ(cli("gradcheck --tolerance -1").code, 2);
}

TEST_F(CliTest, ReportsAreDeterministicOutsideTimestamp) {
    ASSERT_EQ(cli("synth --cells 20 --seed 9 -o " + path("g.cgl")).code, 0);
    for (const std::string tag : {"a", "b"}) {
        ASSERT_EQ(cli("pretrain --graph " + path("g.cgl") + " --seed 9 " + kSmallPretrain + " -o " + path(tag + ".ckpt"))
                      .code,
                  0);
    }
    const auto a = load_report(path("a.ckpt.report.json"));
    const auto b = load_report(path("b.ckpt.report.json"));
    EXPECT_EQ(a["payload_crc32"], b["payload_crc32"]);
    EXPECT_EQ(a["payload"].dump(), b["payload"].dump());
    EXPECT_EQ(circuitgcl::read_file(path("a.ckpt")), circuitgcl::read_file(path("b.ckpt")));
}
