#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "obr/datasets.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
};

fs::path root()
{
    static const fs::path dir = [] {
        const fs::path d = fs::path(OBR_TEST_TMP) / "cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Result run(const std::string& args)
{
    const fs::path log = root() / "last_output.txt";
    const std::string cmd = std::string("\"") + OBR_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read(log)};
}

// Small pages so training runs in seconds.
const std::string kSmallPages =
    "--set synth.page_width=192 --set synth.page_height=144 --set synth.margin_left=20 --set synth.margin_top=20";
const std::string kSmallTraining =
    "--preset desk --set augment.crop_width=64 --set augment.crop_height=64 --set augment.min_width=180 "
    "--set augment.max_width=200 --set detector.widths=[4,8,8,16] --set train.batch_size=2 "
    "--set train.stage_epochs=[1,1,1] --set train.eval_interval=1";

fs::path small_corpus()
{
    static const fs::path dir = [] {
        const fs::path d = root() / "small";
        const Result r = run("dataset synth --pages 2 --negatives 1 --seed 3 --out \"" + d.string() + "\" --preset desk " +
                             kSmallPages);
        EXPECT_EQ(r.code, 0) << r.out;
        return d;
    }();
    return dir;
}

}  // namespace

TEST(Cli, SynthIsReproducible)
{
    const fs::path a = root() / "synth_a", b = root() / "synth_b";
    ASSERT_EQ(run("dataset synth --pages 3 --seed 7 --out \"" + a.string() + "\" " + kSmallPages).code, 0);
    ASSERT_EQ(run("dataset synth --pages 3 --seed 7 --out \"" + b.string() + "\" " + kSmallPages).code, 0);
    for (const char* f : {"page_0000.png", "page_0002.png", "page_0002.json", "manifest.txt"})
        EXPECT_EQ(read(a / f), read(b / f)) << f;
    EXPECT_EQ(read(a / "manifest.txt"), "page_0000.json\npage_0001.json\npage_0002.json\n");
    EXPECT_EQ(run("dataset validate \"" + (a / "page_0001.json").string() + "\"").code, 0);
}

TEST(Cli, ValidateReportsViolations)
{
    const fs::path bad = root() / "bad.json";
    std::ofstream(bad) << R"({"image": "x.png", "width": 50, "height": 50, "negative": false, "chars": [
        {"left": 40, "top": 1, "right": 60, "bottom": 33, "dots": "1"},
        {"left": 1, "top": 1, "right": 21, "bottom": 33, "dots": "2"},
        {"left": 2, "top": 1, "right": 22, "bottom": 33, "dots": "3"}]})";
    const Result r = run("dataset validate \"" + bad.string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("bounds"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("overlap"), std::string::npos) << r.out;
}

TEST(Cli, SplitPerBook)
{
    const fs::path dir = root() / "books";
    for (const char* book : {"b1", "b2"}) {
        const int pages = std::string(book) == "b1" ? 4 : 1;
        ASSERT_EQ(run("dataset synth --pages " + std::to_string(pages) + " --seed 1 --out \"" + (dir / book).string() +
                      "\" " + kSmallPages)
                      .code,
                  0);
    }
    std::ofstream(dir / "all.txt") << "b1/page_0000.json\nb1/page_0001.json\nb1/page_0002.json\nb1/page_0003.json\n"
                                      "b2/page_0000.json\n";
    const Result r = run("dataset split --manifest \"" + (dir / "all.txt").string() + "\" --fraction 0.74 --out \"" +
                         (dir / "split").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("4 train pages, 1 test pages"), std::string::npos) << r.out;
    const std::string test = read(dir / "split/test.txt");
    EXPECT_NE(test.find("b1/page_0003.json"), std::string::npos) << test;
}

TEST(Cli, ConvertGrid)
{
    const fs::path grid = root() / "grid.json";
    std::ofstream(grid) << R"({"image": "scan.png", "width": 200, "height": 200, "angle": 0,
        "vertical_lines": [45, 55], "horizontal_lines": [50, 60, 70], "chars": [{"col": 0, "row": 0, "dots": "14"}]})";
    ASSERT_EQ(run("dataset convert \"" + grid.string() + "\" --out \"" + (root() / "converted").string() + "\"").code, 0);
    const std::string out = read(root() / "converted/grid.json");
    EXPECT_NE(out.find("\"dots\":\"14\""), std::string::npos) << out;
    EXPECT_NE(out.find("\"left\":40.0"), std::string::npos) << out;
}

TEST(Cli, InvalidConfigNamesTheField)
{
    const fs::path corpus = small_corpus();
    const Result r = run("train --manifest \"" + (corpus / "manifest.txt").string() + "\" --out \"" +
                         (root() / "bad_run").string() + "\" --preset desk --set train.batch_size=0");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.out.find("train.batch_size"), std::string::npos) << r.out;
    EXPECT_EQ(run("train --manifest m --out o --set nosuch.key=1").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, PaperPresetPrintsStagePlan)
{
    const fs::path corpus = small_corpus();
    const Result r = run("train --manifest \"" + (corpus / "manifest.txt").string() + "\" --out \"" +
                         (root() / "paper_plan").string() + "\" --preset paper --max-epochs 0");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("lambda_cls stage plan"), std::string::npos);
    EXPECT_NE(r.out.find("1000"), std::string::npos);
    EXPECT_NE(read(root() / "paper_plan/train.log").find("[train]"), std::string::npos);
}

TEST(Cli, TrainResumeEvalRecognize)
{
    const fs::path corpus = small_corpus();
    const std::string manifest = (corpus / "manifest.txt").string();
    const fs::path full = root() / "run_full", part = root() / "run_part";
    const std::string common = "--manifest \"" + manifest + "\" --test-manifest \"" + manifest + "\" --seed 5 " +
                               kSmallTraining;
    ASSERT_EQ(run("train " + common + " --out \"" + full.string() + "\"").code, 0);
    ASSERT_EQ(run("train " + common + " --out \"" + part.string() + "\" --max-epochs 2").code, 0);
    const Result resumed = run("train " + common + " --out \"" + part.string() + "\" --resume");
    ASSERT_EQ(resumed.code, 0) << resumed.out;
    EXPECT_EQ(read(full / "last.ckpt"), read(part / "last.ckpt"));
    EXPECT_EQ(read(full / "metrics.csv"), read(part / "metrics.csv"));

    const std::string model = (full / "last.ckpt").string();
    const Result ev = run("eval --manifest \"" + manifest + "\" --model \"" + model + "\" --width 0 --sweep --jobs 1 --out \"" +
                          (root() / "eval").string() + "\"");
    ASSERT_EQ(ev.code, 0) << ev.out;
    std::istringstream sweep(read(root() / "eval/sweep.csv"));
    std::string line;
    std::getline(sweep, line);
    EXPECT_EQ(line, "threshold,char_precision,char_recall,char_f1,dot_precision,dot_recall,dot_f1");
    int rows = 0;
    while (std::getline(sweep, line)) {
        EXPECT_EQ(line.substr(0, 3), "0." + std::to_string(++rows)) << line;
    }
    EXPECT_EQ(rows, 9);
    EXPECT_NE(read(root() / "eval/summary.txt").find("seconds_per_image"), std::string::npos);
    const std::string csv = read(root() / "eval/report.csv");
    EXPECT_NE(csv.find("page_0002.png,0,"), std::string::npos) << csv;

    // The negative page is blank: no output, exit 0.
    const Result blank = run("recognize \"" + (corpus / "page_0002.png").string() + "\" --model \"" + model +
                             "\" --width 0 --score-threshold 1 --json -");
    ASSERT_EQ(blank.code, 0) << blank.out;
    EXPECT_NE(blank.out.find("\"detections\": []"), std::string::npos) << blank.out;

    const Result full_page = run("recognize \"" + (corpus / "page_0000.png").string() + "\" --model \"" + model +
                                 "\" --width 0 --score-threshold 0 --json - --overlay \"" +
                                 (root() / "overlay.png").string() + "\"");
    ASSERT_EQ(full_page.code, 0) << full_page.out;
    for (const char* key : {"\"left\"", "\"top\"", "\"right\"", "\"bottom\"", "\"dots\"", "\"score\""})
        EXPECT_NE(full_page.out.find(key), std::string::npos) << key;
    EXPECT_TRUE(fs::exists(root() / "overlay.png"));
}

TEST(Cli, EvalPerfectDetections)
{
    const fs::path corpus = small_corpus();
    // Detections JSON copied from the annotations.
    const fs::path dets = root() / "perfect";
    fs::create_directories(dets);
    std::ofstream manifest(dets / "manifest.txt");
    for (const char* stem : {"page_0000", "page_0001", "page_0002"}) {
        const obr::PageAnnotation page = obr::load_canonical(corpus / (std::string(stem) + ".json"));
        std::ostringstream json;
        json << std::setprecision(17) << "{\"image\": \"" << page.image << "\", \"detections\": [";
        for (std::size_t i = 0; i < page.chars.size(); ++i) {
            const auto& c = page.chars[i];
            json << (i ? ", " : "") << "{\"left\": " << c.box.left << ", \"top\": " << c.box.top
                 << ", \"right\": " << c.box.right << ", \"bottom\": " << c.box.bottom << ", \"dots\": \""
                 << obr::decode(c.cls).to_string() << "\", \"score\": 1}";
        }
        json << "]}\n";
        std::ofstream(dets / (std::string(stem) + ".json")) << json.str();
        manifest << stem << ".json\n";
    }
    manifest.close();
    const Result r = run("eval --manifest \"" + (corpus / "manifest.txt").string() + "\" --detections \"" +
                         (dets / "manifest.txt").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("1.0000,1.0000,1.0000,1.0000,1.0000,1.0000"), std::string::npos) << r.out;

    std::ofstream(dets / "short.txt") << "page_0000.json\n";
    EXPECT_EQ(run("eval --manifest \"" + (corpus / "manifest.txt").string() + "\" --detections \"" +
                  (dets / "short.txt").string() + "\"")
                  .code,
              2);
}

TEST(Cli, ErrorExitCodes)
{
    const fs::path corpus = small_corpus();
    const fs::path junk = root() / "junk.ckpt";
    std::ofstream(junk) << "not a checkpoint";
    EXPECT_EQ(run("recognize \"" + (corpus / "page_0000.png").string() + "\" --model \"" + junk.string() + "\"").code, 3);
    EXPECT_EQ(run("recognize \"" + (root() / "nope.png").string() + "\" --model \"" + junk.string() + "\"").code, 2);
    EXPECT_EQ(run("recognize \"" + (corpus / "page_0000.png").string() + "\" --model \"" + (root() / "nope.ckpt").string() +
                  "\"")
                  .code,
              2);
}
