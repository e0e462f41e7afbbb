#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <regex>
#include <sstream>
#include <sys/wait.h>

#include "chartmark/cli.hpp"
#include "chartmark/cot.hpp"
#include "chartmark/marker.hpp"
#include "chartmark/util.hpp"

using namespace chartmark;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

// Runs the real binary so exit statuses are observed end to end.
int exit_status(const std::string& args) {
  const std::string cmd = std::string(CHARTMARK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chartmark_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const json& config) {
  const std::string path = (dir / "config.json").string();
  write_file_atomic(path, config.dump(2));
  return path;
}

}  // namespace

TEST(ExitCodes, BinaryReportsUsageAndDomainErrors) {
  const fs::path dir = fresh_dir("exit");
  EXPECT_EQ(exit_status("--version"), 0);
  EXPECT_EQ(exit_status("--help"), 0);
  EXPECT_EQ(exit_status("detect --unknown-flag"), 2);
  EXPECT_EQ(exit_status("frobnicate"), 2);
  EXPECT_EQ(exit_status("build --config " + (dir / "absent.json").string() + " --out " + (dir / "x").string()), 2);
  EXPECT_EQ(exit_status("--workers 0 build"), 2);
  write_file_atomic((dir / "bad.json").string(), "{\"seed\": \"seven\"}");
  EXPECT_EQ(exit_status("build --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string()), 1);
  EXPECT_FALSE(fs::exists(dir / "x"));
  fs::remove_all(dir);
}

TEST(ExitCodes, UsageErrorWritesNothing) {
  const fs::path dir = fresh_dir("usage");
  const Outcome o = cli({"gen", "--count", "-3", "--out", (dir / "specs").string()});
  EXPECT_EQ(o.code, kExitUsage);
  EXPECT_NE(o.err.find("Usage"), std::string::npos) << o.err;
  EXPECT_FALSE(fs::exists(dir / "specs"));
  fs::remove_all(dir);
}

TEST(Version, Printed) { EXPECT_EQ(cli({"--version"}).out, std::string(kVersionString) + "\n"); }

TEST(SingleChartCommands, GenCotEditDetectChain) {
  const fs::path dir = fresh_dir("chain");
  ASSERT_EQ(cli({"gen", "-n", "3", "--type", "bar", "--seed", "4", "--out", dir.string()}).code, 0);
  const std::string spec_path = (dir / "specs" / (generate_spec(4, 1, ChartType::bar).id + ".json")).string();
  ASSERT_TRUE(fs::exists(spec_path));
  const ChartSpec spec = parse_spec(read_file(spec_path));

  const std::string cot_path = (dir / "cot.json").string();
  ASSERT_EQ(cli({"cot", "--spec", spec_path, "--out", cot_path}).code, 0);
  const CotSample sample = validate_cot(read_file(cot_path));
  ASSERT_EQ(sample.steps[0].kind, StepKind::Grounding);

  const std::string edited_path = (dir / "edited.json").string();
  ASSERT_EQ(cli({"edit", "--spec", spec_path, "--cot", cot_path, "--step", "0", "--out", edited_path}).code, 0);
  const EditedSpec edited = parse_edited_spec(read_file(edited_path));
  EXPECT_TRUE(verify_marker(edited));

  const Outcome d = cli({"detect", "--spec", edited_path});
  ASSERT_EQ(d.code, 0) << d.err;
  const json found = json::parse(d.out);
  const PixelBBox target = *layout(spec).find(*sample.steps[0].target);
  const auto b = found["raw"];
  EXPECT_TRUE(intersects(PixelBBox{b[0], b[1], b[2], b[3]}, target));
  EXPECT_NO_THROW(parse_bbox(found["norm"].get<std::string>(), BBoxFormat::C));

  const std::string ppm = (dir / "r.ppm").string();
  ASSERT_EQ(cli({"render", "--spec", edited_path, "--format", "ppm", "--out", ppm}).code, 0);
  EXPECT_EQ(read_file(ppm).rfind("P6", 0), 0u);

  // Reasoning steps cannot be edited; that is a domain error.
  const int last = sample.steps.back().index;
  EXPECT_EQ(cli({"edit", "--spec", spec_path, "--cot", cot_path, "--step", std::to_string(last)}).code, kExitDomain);
  EXPECT_EQ(cli({"detect", "--spec", spec_path}).code, kExitDomain);
  fs::remove_all(dir);
}

TEST(Build, WritesRunAndStats) {
  const fs::path dir = fresh_dir("build");
  const std::string config = write_config(dir, {{"seed", 21}, {"n_charts", 10}});
  const Outcome o = cli({"--workers", "2", "build", "--config", config, "--out", (dir / "run").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("qa: 10/10 (100.00%)"), std::string::npos) << o.out;
  for (auto f : {"manifest.json", "dataset.jsonl", "stats.json", "stage_report.json"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  const Outcome s = cli({"stats", "--run", (dir / "run").string()});
  ASSERT_EQ(s.code, 0);
  EXPECT_EQ(json::parse(s.out)["n_passed"], 10);

  // A config that differs from the one in the run directory.
  const std::string other = write_config(dir, {{"seed", 22}, {"n_charts", 10}});
  EXPECT_EQ(cli({"build", "--config", other, "--out", (dir / "run").string()}).code, kExitDomain);
  fs::remove_all(dir);
}

TEST(Eval, TableAndJson) {
  const fs::path dir = fresh_dir("eval");
  write_file_atomic((dir / "gold.jsonl").string(),
                    "{\"sample_id\": \"a\", \"answer\": 100, \"split\": \"human\"}\n"
                    "{\"sample_id\": \"b\", \"answer\": \"Blue\", \"split\": \"aug\"}\n");
  write_file_atomic((dir / "pred.jsonl").string(),
                    "{\"sample_id\": \"a\", \"raw_text\": \"so \\\\box{104}\"}\n"
                    "{\"sample_id\": \"b\", \"raw_text\": \"\\\\box{blue}\"}\n");
  const Outcome o = cli({"eval", "--gold", (dir / "gold.jsonl").string(), "--pred", (dir / "pred.jsonl").string(),
                         "--group-by", "split", "--margins", "0.03,0.05", "--out", (dir / "r.json").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("@0.03"), std::string::npos);
  EXPECT_NE(o.out.find("human"), std::string::npos);
  const json r = json::parse(read_file((dir / "r.json").string()));
  EXPECT_EQ(r["all"]["correct"], json({1, 2}));

  write_file_atomic((dir / "extra.jsonl").string(), "{\"sample_id\": \"zzz\", \"raw_text\": \"1\"}\n");
  EXPECT_EQ(cli({"eval", "--gold", (dir / "gold.jsonl").string(), "--pred", (dir / "extra.jsonl").string()}).code,
            kExitDomain);
  EXPECT_EQ(cli({"eval", "--gold", (dir / "gold.jsonl").string(), "--pred", (dir / "pred.jsonl").string(), "--margins",
                 "0.05,abc"})
                .code,
            kExitDomain);
  fs::remove_all(dir);
}

TEST(Gallery, PagesAndLinksResolve) {
  const fs::path dir = fresh_dir("gallery");
  const std::string config =
      write_config(dir, {{"seed", 3}, {"n_charts", 10}, {"fault_injection", {{"render", 0.3}}}});
  ASSERT_EQ(cli({"build", "--config", config, "--out", (dir / "run").string()}).code, 0);
  const Outcome o = cli({"gallery", "--run", (dir / "run").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  const fs::path g = dir / "run" / "gallery";
  std::size_t pages = 0;
  const std::regex link(R"re((?:href|src)="([^"]+)")re");
  for (const auto& e : fs::directory_iterator(g)) {
    if (e.path().extension() != ".html") continue;
    pages += e.path().filename() != "index.html";
    const std::string html = read_file(e.path().string());
    for (std::sregex_iterator it(html.begin(), html.end(), link), end; it != end; ++it) {
      EXPECT_TRUE(fs::exists(g / (*it)[1].str())) << e.path() << " -> " << (*it)[1];
    }
  }
  EXPECT_EQ(pages, 10u);
  EXPECT_NE(read_file((g / "index.html").string()).find("10 samples"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Gallery, EmptyManifest) {
  const fs::path dir = fresh_dir("gallery_empty");
  DatasetManifest m;
  m.run_id = "run-empty";
  write_file_atomic((dir / "manifest.json").string(), serialize_manifest(m));
  const Outcome o = cli({"gallery", "--run", dir.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(read_file((dir / "gallery" / "index.html").string()).find("0 samples"), std::string::npos);
  EXPECT_EQ(cli({"stats", "--run", dir.string()}).code, kExitDomain);
  fs::remove_all(dir);
}

TEST(HtmlEscape, Specials) { EXPECT_EQ(html_escape("<a href=\"x\">&'"), "&lt;a href=&quot;x&quot;&gt;&amp;&#39;"); }
