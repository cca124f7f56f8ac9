// obr: command-line front end (recognize, train, eval, dataset).
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "obr/config.hpp"
#include "obr/datasets.hpp"
#include "obr/evaluation.hpp"
#include "obr/pipeline.hpp"
#include "obr/png_io.hpp"
#include "obr/rng.hpp"
#include "obr/synth.hpp"
#include "obr/trainer.hpp"

namespace fs = std::filesystem;
using namespace obr;

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
// written by index so the output does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn)
{
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

struct ConfigFlags {
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;

    void add(CLI::App* cmd)
    {
        cmd->add_option("--config", config_path, "TOML-style config file");
        cmd->add_option("--preset", preset, "Start from a preset (paper, desk) when no config file is given");
        cmd->add_option("--set", overrides, "Override one value, e.g. --set train.learning_rate=1e-3");
    }

    Config load() const
    {
        if (!config_path.empty() && !preset.empty()) throw ConfigError("--config and --preset are exclusive");
        Config config = !config_path.empty() ? load_config(config_path) : preset_config(preset.empty() ? "paper" : preset);
        for (const auto& o : overrides) apply_override(config, o);
        config.validate();
        return config;
    }
};

AlphabetTable load_alphabet(const std::string& path)
{
    if (path.empty()) return AlphabetTable::load(fs::path(OBR_ALPHABET_DIR) / "latin.tsv");
    if (path == "unicode") return {};
    return AlphabetTable::load(path);
}

Detector load_model(const std::string& path)
{
    if (!fs::exists(path)) throw InputError("model not found: " + path);
    return load_checkpoint(path).detector;
}

nlohmann::ordered_json detections_json(const std::string& image, const std::vector<Detection>& detections)
{
    nlohmann::ordered_json doc;
    doc["image"] = image;
    doc["detections"] = nlohmann::ordered_json::array();
    for (const auto& d : detections) {
        nlohmann::ordered_json item;
        item["left"] = d.box.left;
        item["top"] = d.box.top;
        item["right"] = d.box.right;
        item["bottom"] = d.box.bottom;
        item["dots"] = decode(d.cls).to_string();
        item["score"] = d.score;
        doc["detections"].push_back(item);
    }
    return doc;
}

std::pair<std::string, std::vector<Detection>> read_detections(const fs::path& path)
{
    try {
        const auto doc = nlohmann::json::parse(read_file(path));
        std::vector<Detection> out;
        for (const auto& d : doc.at("detections")) {
            const Box box{d.at("left").get<double>(), d.at("top").get<double>(), d.at("right").get<double>(),
                          d.at("bottom").get<double>()};
            out.push_back({box, encode(DotPattern::parse(d.at("dots").get<std::string>())), d.at("score").get<double>()});
        }
        return {fs::path(doc.at("image").get<std::string>()).filename().string(), std::move(out)};
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

// ---- recognize ----

struct RecognizeArgs {
    std::string image, model, overlay, json, alphabet;
    int width = 864;
    std::optional<double> threshold;
};

int cmd_recognize(const RecognizeArgs& a)
{
    const RasterImage image = read_png(a.image);
    const Detector detector = load_model(a.model);
    const AlphabetTable table = load_alphabet(a.alphabet);
    const double thr = a.threshold.value_or(detector.config().score_threshold);
    const Recognition r = recognize(detector, image, table, a.width, thr);
    if (!r.text.empty()) std::cout << r.text << '\n';
    if (!a.overlay.empty()) write_png(a.overlay, draw_overlay(image, r.detections));
    if (!a.json.empty()) {
        const std::string doc = detections_json(a.image, r.detections).dump(2) + "\n";
        if (a.json == "-")
            std::cout << doc;
        else
            write_file(a.json, doc);
    }
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string manifest, test_manifest, out;
    ConfigFlags config;
    std::optional<std::uint64_t> seed;
    bool resume = false;
    int max_epochs = -1;
};

int cmd_train(const TrainArgs& a)
{
    Config config = a.config.load();
    if (a.seed) {
        // One flag drives the three training streams.
        config.train.init_seed = *a.seed;
        config.train.shuffle_seed = mix_seed(*a.seed, 1) >> 11;
        config.augment.seed = mix_seed(*a.seed, 2) >> 11;
    }
    const fs::path out = a.out;
    fs::create_directories(out);
    std::ofstream log_file(out / "train.log", a.resume ? std::ios::app : std::ios::trunc);
    auto log = [&](const std::string& line) {
        std::cout << line << std::endl;
        log_file << line << '\n';
        log_file.flush();
    };

    const std::string effective = format_config(config);
    write_file(out / "config.toml", effective);
    log("# effective config");
    std::istringstream lines(effective);
    for (std::string line; std::getline(lines, line);) log(line);
    log("# lambda_cls stage plan");
    std::istringstream plan(describe_schedule(config.train));
    for (std::string line; std::getline(plan, line);) log(line);

    const auto train = load_training_pages(a.manifest);
    const auto test = a.test_manifest.empty() ? std::vector<TrainingPage>{} : load_training_pages(a.test_manifest);
    log("# " + std::to_string(train.size()) + " training pages, " + std::to_string(test.size()) + " test pages");

    Detector detector(config.detector, config.train.init_seed);
    RunOptions options;
    options.out_dir = out;
    options.resume = a.resume;
    options.log = log;
    options.max_epochs = a.max_epochs;
    const RunResult result = run_training(detector, train, test, config.augment, config.train, options);
    log("# finished at epoch " + std::to_string(result.state.epoch) + ", best test F1 " +
        std::to_string(result.state.best_checkpoint_f1));
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string manifest, model, detections, out;
    int width = 864;
    std::optional<double> threshold;
    bool sweep = false;
    int jobs = 1;
};

std::string sweep_table(const std::vector<PageEvaluation>& pages, double seconds)
{
    std::ostringstream out;
    out << "threshold,char_precision,char_recall,char_f1,dot_precision,dot_recall,dot_f1\n";
    for (int k = 1; k <= 9; ++k) {
        const double thr = k / 10.0;
        std::vector<PageEvaluation> filtered = pages;
        for (auto& p : filtered)
            std::erase_if(p.detections, [&](const Detection& d) { return d.score < thr; });
        const EvalReport r = evaluate_corpus(filtered, seconds);
        out << std::setprecision(1) << std::fixed << thr << std::setprecision(6) << ',' << r.char_scores.precision << ','
            << r.char_scores.recall << ',' << r.char_scores.f1 << ',' << r.dot_scores.precision << ','
            << r.dot_scores.recall << ',' << r.dot_scores.f1 << '\n';
    }
    return out.str();
}

int cmd_eval(const EvalArgs& a)
{
    if (a.model.empty() == a.detections.empty()) throw InputError("give exactly one of --model or --detections");
    const auto annotation_paths = read_manifest(a.manifest);
    std::vector<PageAnnotation> truth;
    for (const auto& p : annotation_paths) truth.push_back(load_canonical(p));

    EvalReport report;
    std::vector<PageEvaluation> pages;
    if (!a.detections.empty()) {
        std::vector<std::pair<std::string, std::vector<Detection>>> dets;
        for (const auto& p : read_manifest(a.detections)) dets.push_back(read_detections(p));
        std::vector<std::pair<std::string, std::vector<LabeledBox>>> truths;
        for (const auto& t : truth) truths.emplace_back(fs::path(t.image).filename().string(), t.chars);
        report = evaluate_corpus(dets, truths);
        for (std::size_t i = 0; i < dets.size(); ++i) pages.push_back({dets[i].first, dets[i].second, {}});
    } else {
        const Detector detector = load_model(a.model);
        // Sweeps need every detection down to the lowest row's threshold.
        const double thr = a.sweep ? std::min(0.1, a.threshold.value_or(detector.config().score_threshold))
                                   : a.threshold.value_or(detector.config().score_threshold);
        pages.resize(truth.size());
        std::vector<double> seconds(truth.size());
        parallel_for(truth.size(), a.jobs, [&](std::size_t i) {
            const RasterImage image = read_png(annotation_paths[i].parent_path() / truth[i].image);
            const auto t0 = std::chrono::steady_clock::now();
            auto dets = detect_page(detector, image, a.width, thr);
            seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            pages[i] = {fs::path(truth[i].image).filename().string(), std::move(dets), truth[i].chars};
        });
        double total = 0;
        for (double s : seconds) total += s;
        const double per_image = truth.empty() ? 0.0 : total / static_cast<double>(truth.size());
        const double report_thr = a.threshold.value_or(detector.config().score_threshold);
        std::vector<PageEvaluation> at_threshold = pages;
        for (auto& p : at_threshold)
            std::erase_if(p.detections, [&](const Detection& d) { return d.score < report_thr; });
        report = evaluate_corpus(at_threshold, per_image);
        if (a.sweep) {
            const std::string table = sweep_table(pages, per_image);
            if (!a.out.empty()) write_file(fs::path(a.out) / "sweep.csv", table);
            std::cout << table;
        }
    }
    const std::string summary = report_summary(report);
    if (!a.out.empty()) {
        write_file(fs::path(a.out) / "report.csv", report_csv(report));
        write_file(fs::path(a.out) / "summary.txt", summary);
    }
    std::cout << summary;
    return 0;
}

// ---- dataset ----

struct SynthArgs {
    int pages = 10;
    int negatives = 0;
    std::uint64_t seed = 1;
    std::string out, text, alphabet;
    ConfigFlags config;
    int jobs = 1;
};

int cmd_synth(const SynthArgs& a)
{
    const Config config = a.config.load();
    const PageGeometry& g = config.geometry;
    std::vector<std::vector<BrailleRow>> texts;
    if (!a.text.empty()) {
        const auto rows = layout_text(read_file(a.text), load_alphabet(a.alphabet), g.columns());
        for (std::size_t r = 0; r < rows.size(); r += static_cast<std::size_t>(g.rows()))
            texts.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(r),
                               rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), r + g.rows())));
    } else {
        if (a.pages < 0) throw InputError("--pages must be nonnegative");
        for (int i = 0; i < a.pages; ++i)
            texts.push_back(random_braille_text(g.rows(), g.columns(), mix_seed(mix_seed(a.seed, i), 1)));
    }
    for (int i = 0; i < a.negatives; ++i) texts.emplace_back();

    const fs::path out = a.out;
    fs::create_directories(out);
    std::vector<fs::path> manifest(texts.size());
    parallel_for(texts.size(), a.jobs, [&](std::size_t i) {
        const std::uint64_t page_seed = mix_seed(a.seed, i);
        SyntheticPage page = render_synthetic_page(texts[i], g, draw_page_options(config.synth, page_seed),
                                                   mix_seed(page_seed, 2));
        std::ostringstream stem;
        stem << "page_" << std::setw(4) << std::setfill('0') << i;
        page.annotation.image = stem.str() + ".png";
        write_png(out / (stem.str() + ".png"), page.image);
        save_canonical(page.annotation, out / (stem.str() + ".json"));
        manifest[i] = stem.str() + ".json";
    });
    write_manifest(out / "manifest.txt", manifest);
    std::cout << "wrote " << texts.size() << " pages to " << out.string() << '\n';
    return 0;
}

struct ConvertArgs {
    std::vector<std::string> inputs;
    std::string out;
    double char_width = 20, char_height = 32;
};

int cmd_convert(const ConvertArgs& a)
{
    const fs::path out = a.out;
    fs::create_directories(out);
    for (const auto& input : a.inputs) {
        const fs::path path = input;
        PageAnnotation page = grid_to_boxes(load_grid(path), a.char_width, a.char_height);
        const fs::path image = fs::absolute(path.parent_path() / page.image);
        page.image = fs::relative(image, fs::absolute(out)).generic_string();
        const auto report = validate(page);
        if (!report.empty()) throw AnnotationError(report.front().kind, path.string() + ": " + report.front().message);
        save_canonical(page, out / (path.stem().string() + ".json"));
    }
    std::cout << "converted " << a.inputs.size() << " files\n";
    return 0;
}

int cmd_validate(const std::vector<std::string>& files)
{
    std::size_t bad = 0;
    for (const auto& f : files) {
        const auto report = check_canonical(f);
        if (report.empty()) {
            std::cout << f << ": ok\n";
            continue;
        }
        ++bad;
        for (const auto& v : report) std::cout << f << ": " << to_string(v.kind) << ": " << v.message << '\n';
    }
    if (bad) {
        std::cout << bad << " of " << files.size() << " files invalid\n";
        return 2;
    }
    return 0;
}

struct SplitArgs {
    std::string manifest, out;
    double fraction = 0.74;
};

int cmd_split(const SplitArgs& a)
{
    if (!(a.fraction >= 0 && a.fraction <= 1)) throw InputError("--fraction must be in [0, 1]");
    // Books are the parent directories, in order of first appearance.
    std::vector<Book> books;
    std::map<std::string, std::size_t> book_index;
    std::map<std::string, fs::path> path_of;
    for (const auto& p : read_manifest(a.manifest)) {
        PageAnnotation page = load_canonical(p);
        const std::string book = p.parent_path().string();
        auto [it, inserted] = book_index.try_emplace(book, books.size());
        if (inserted) books.push_back({book, {}});
        // Page identity for mapping back: the resolved image path.
        page.image = (p.parent_path() / page.image).lexically_normal().string();
        if (!path_of.emplace(page.image, p).second) throw InputError("image listed twice: " + page.image);
        books[it->second].pages.push_back(std::move(page));
    }
    const DatasetSplit split = split_by_fraction(books, a.fraction);
    for (const auto& w : split.warnings) std::cerr << "warning: " << w << '\n';
    const fs::path out = a.out;
    fs::create_directories(out);
    auto entries = [&](const std::vector<PageAnnotation>& pages) {
        std::vector<fs::path> e;
        for (const auto& p : pages) e.push_back(fs::absolute(path_of.at(p.image)));
        return e;
    };
    write_manifest(out / "train.txt", entries(split.train));
    write_manifest(out / "test.txt", entries(split.test));
    std::cout << split.train.size() << " train pages, " << split.test.size() << " test pages\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Optical Braille recognition"};
    app.require_subcommand(1);

    RecognizeArgs rec;
    auto* recognize_cmd = app.add_subcommand("recognize", "Transcribe a page image");
    recognize_cmd->add_option("image", rec.image, "PNG page image")->required();
    recognize_cmd->add_option("--model", rec.model, "Model checkpoint")->required();
    recognize_cmd->add_option("--overlay", rec.overlay, "Write a PNG with boxes and dot glyphs");
    recognize_cmd->add_option("--json", rec.json, "Write detections JSON ('-' for stdout)");
    recognize_cmd->add_option("--width", rec.width, "Resize to this width before detection (0 keeps the size)");
    recognize_cmd->add_option("--alphabet", rec.alphabet, "Alphabet table (default latin, 'unicode' for none)");
    recognize_cmd->add_option("--score-threshold", rec.threshold, "Override the model's score threshold");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a detector");
    train_cmd->add_option("--manifest", tr.manifest, "Training manifest")->required();
    train_cmd->add_option("--test-manifest", tr.test_manifest, "Held-out manifest for F1 monitoring");
    train_cmd->add_option("--out", tr.out, "Run directory")->required();
    train_cmd->add_option("--seed", tr.seed, "Seed for initialization, shuffling and augmentation");
    train_cmd->add_flag("--resume", tr.resume, "Continue from <out>/last.ckpt");
    train_cmd->add_option("--max-epochs", tr.max_epochs, "Stop after this many epochs in this invocation");
    tr.config.add(train_cmd);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score detections against annotations");
    eval_cmd->add_option("--manifest", ev.manifest, "Annotation manifest")->required();
    eval_cmd->add_option("--model", ev.model, "Model checkpoint");
    eval_cmd->add_option("--detections", ev.detections, "Manifest of detections JSON files instead of a model");
    eval_cmd->add_option("--out", ev.out, "Directory for report.csv, summary.txt and sweep.csv");
    eval_cmd->add_option("--width", ev.width, "Inference width (0 keeps the size)");
    eval_cmd->add_option("--score-threshold", ev.threshold, "Override the model's score threshold");
    eval_cmd->add_flag("--sweep", ev.sweep, "Also score thresholds 0.1 .. 0.9");
    eval_cmd->add_option("--jobs", ev.jobs, "Worker threads (1 = deterministic single-threaded)");

    auto* dataset_cmd = app.add_subcommand("dataset", "Dataset tools");
    dataset_cmd->require_subcommand(1);

    SynthArgs sy;
    auto* synth_cmd = dataset_cmd->add_subcommand("synth", "Render synthetic pages with annotations");
    synth_cmd->add_option("--pages", sy.pages, "Number of random-text pages");
    synth_cmd->add_option("--negatives", sy.negatives, "Extra blank pages");
    synth_cmd->add_option("--seed", sy.seed, "Seed");
    synth_cmd->add_option("--out", sy.out, "Output directory")->required();
    synth_cmd->add_option("--text", sy.text, "Render this text file instead of random classes");
    synth_cmd->add_option("--alphabet", sy.alphabet, "Alphabet table for --text");
    synth_cmd->add_option("--jobs", sy.jobs, "Worker threads");
    sy.config.add(synth_cmd);

    ConvertArgs cv;
    auto* convert_cmd = dataset_cmd->add_subcommand("convert", "Convert grid annotations to canonical boxes");
    convert_cmd->add_option("inputs", cv.inputs, "Grid annotation files")->required();
    convert_cmd->add_option("--out", cv.out, "Output directory")->required();
    convert_cmd->add_option("--char-width", cv.char_width, "Box width");
    convert_cmd->add_option("--char-height", cv.char_height, "Box height");

    std::vector<std::string> to_validate;
    auto* validate_cmd = dataset_cmd->add_subcommand("validate", "Check canonical annotation files");
    validate_cmd->add_option("files", to_validate, "Annotation files")->required();

    SplitArgs sp;
    auto* split_cmd = dataset_cmd->add_subcommand("split", "Split a manifest per book");
    split_cmd->add_option("--manifest", sp.manifest, "Manifest to split")->required();
    split_cmd->add_option("--fraction", sp.fraction, "Training fraction per book");
    split_cmd->add_option("--out", sp.out, "Directory for train.txt and test.txt")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*recognize_cmd) return cmd_recognize(rec);
        if (*train_cmd) return cmd_train(tr);
        if (*eval_cmd) return cmd_eval(ev);
        if (*synth_cmd) return cmd_synth(sy);
        if (*convert_cmd) return cmd_convert(cv);
        if (*validate_cmd) return cmd_validate(to_validate);
        if (*split_cmd) return cmd_split(sp);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
