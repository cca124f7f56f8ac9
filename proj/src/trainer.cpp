#include "obr/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "obr/evaluation.hpp"
#include "obr/pipeline.hpp"
#include "obr/png_io.hpp"
#include "obr/rng.hpp"

namespace obr {

void AugmentationPolicy::validate() const
{
    if (!(min_width > 0 && min_width <= max_width)) throw InputError("augment: need 0 < min_width <= max_width");
    if (!(vertical_stretch >= 0 && vertical_stretch < 1)) throw InputError("augment: vertical_stretch must be in [0, 1)");
    if (!(max_rotation_deg >= 0 && max_rotation_deg <= 45)) throw InputError("augment: max_rotation must be in [0, 45]");
    if (!(mirror_probability >= 0 && mirror_probability <= 1))
        throw InputError("augment: mirror_probability must be in [0, 1]");
    if (crop_width < 16 || crop_height < 16 || crop_width % 16 || crop_height % 16)
        throw InputError("augment: crop size must be a positive multiple of 16");
}

GeometricTransform AugmentationSample::transform(int src_width, int src_height, const AugmentationPolicy& policy) const
{
    GeometricTransform t;
    t.scale_x = target_width / src_width;
    t.scale_y = t.scale_x * (1.0 + stretch);
    t.rotation_deg = rotation_deg;
    t.mirror = mirror;
    const auto [fw, fh] = t.frame_size(src_width, src_height);
    auto origin = [](int frame, int window, double u) {
        const int lo = std::min(0, frame - window);
        const int hi = std::max(0, frame - window);
        return static_cast<double>(lo + static_cast<int>(std::floor(u * (hi - lo + 1))));
    };
    t.crop_x = origin(fw, policy.crop_width, crop_u);
    t.crop_y = origin(fh, policy.crop_height, crop_v);
    t.out_width = policy.crop_width;
    t.out_height = policy.crop_height;
    return t;
}

AugmentationSample sample_augmentation(const AugmentationPolicy& policy, std::uint64_t seed, std::uint64_t step)
{
    Rng rng(mix_seed(seed, step));
    AugmentationSample s;
    s.target_width = rng.uniform(policy.min_width, policy.max_width);
    s.stretch = rng.uniform(-policy.vertical_stretch, policy.vertical_stretch);
    s.rotation_deg = rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
    s.mirror = rng.bernoulli(policy.mirror_probability);
    s.crop_u = rng.uniform();
    s.crop_v = rng.uniform();
    return s;
}

std::vector<TrainingPage> load_training_pages(const std::filesystem::path& manifest)
{
    std::vector<TrainingPage> pages;
    for (const auto& path : read_manifest(manifest)) {
        TrainingPage page{{}, load_canonical(path)};
        page.image = read_png(path.parent_path() / page.annotation.image);
        if (page.image.width() != page.annotation.width || page.image.height() != page.annotation.height)
            throw InputError(path.string() + ": image is " + std::to_string(page.image.width()) + "x" +
                             std::to_string(page.image.height()) + ", annotation says " +
                             std::to_string(page.annotation.width) + "x" + std::to_string(page.annotation.height));
        pages.push_back(std::move(page));
    }
    return pages;
}

TrainingSample make_training_sample(const TrainingPage& page, const AugmentationSample& sample,
                                    const AugmentationPolicy& policy, int input_channels)
{
    const RasterImage& src = page.image;
    const GeometricTransform t = sample.transform(src.width(), src.height(), policy);
    const auto boxes = page.annotation.boxes();
    TransformedImage warped = apply_transform(src, t, boxes);

    TrainingSample out;
    for (const auto& kept : clip_boxes(warped.boxes, t.out_width, t.out_height)) {
        const ClassId cls = page.annotation.chars[kept.source_index].cls;
        out.truth.push_back({kept.box, sample.mirror ? mirror(cls) : cls});
    }
    out.input = normalize(input_channels == 1 ? to_grayscale(warped.image) : to_rgb(warped.image));
    return out;
}

void TrainSchedule::validate() const
{
    if (!(learning_rate >= 0)) throw InputError("train: learning_rate must be nonnegative");
    if (batch_size < 1) throw InputError("train: batch_size must be at least 1");
    if (stages.empty()) throw InputError("train: at least one stage is required");
    for (const auto& s : stages)
        if (!(s.lambda_cls > 0) || s.epochs < 0) throw InputError("train: stages need lambda > 0 and epochs >= 0");
    if (plateau_patience < 1) throw InputError("train: plateau_patience must be at least 1");
    if (!(plateau_factor > 1)) throw InputError("train: plateau_factor must exceed 1");
    if (!(min_improvement >= 0)) throw InputError("train: min_improvement must be nonnegative");
    if (crops_per_page < 1) throw InputError("train: crops_per_page must be at least 1");
    if (eval_interval < 1 || checkpoint_interval < 1) throw InputError("train: intervals must be at least 1");
}

int TrainSchedule::total_epochs() const
{
    int n = 0;
    for (const auto& s : stages) n += s.epochs;
    return n;
}

double TrainSchedule::lambda_for_epoch(int epoch) const
{
    int end = 0;
    for (const auto& s : stages) {
        end += s.epochs;
        if (epoch < end) return s.lambda_cls;
    }
    return stages.back().lambda_cls;
}

bool TrainSchedule::plateau_stage(int epoch) const { return epoch >= total_epochs() - stages.back().epochs; }

TrainState TrainState::initial(const TrainSchedule& schedule)
{
    TrainState s;
    s.learning_rate = schedule.learning_rate;
    s.lambda_cls = schedule.lambda_for_epoch(0);
    return s;
}

std::string TrainState::to_json() const
{
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["step"] = step;
    j["best_f1"] = best_f1;
    j["epochs_since_improvement"] = epochs_since_improvement;
    j["learning_rate"] = learning_rate;
    j["lambda_cls"] = lambda_cls;
    j["best_checkpoint_f1"] = best_checkpoint_f1;
    j["optimizer_steps"] = optimizer_steps;
    return j.dump();
}

TrainState TrainState::from_json(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        TrainState s;
        s.epoch = j.at("epoch").get<int>();
        s.step = j.at("step").get<std::uint64_t>();
        s.best_f1 = j.at("best_f1").get<double>();
        s.epochs_since_improvement = j.at("epochs_since_improvement").get<int>();
        s.learning_rate = j.at("learning_rate").get<double>();
        s.lambda_cls = j.at("lambda_cls").get<double>();
        s.best_checkpoint_f1 = j.at("best_checkpoint_f1").get<double>();
        s.optimizer_steps = j.at("optimizer_steps").get<long>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("invalid training state: ") + e.what());
    }
}

AdamOptimizer::AdamOptimizer(const Network& network, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon)
{
    for (const auto& p : network.parameters()) {
        m_.emplace_back(p.value.size(), 0.0f);
        v_.emplace_back(p.value.size(), 0.0f);
    }
}

void AdamOptimizer::step(Network& network, double learning_rate)
{
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float step = static_cast<float>(learning_rate / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(epsilon_);
    auto& params = network.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i].value;
        const auto& grad = params[i].grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < value.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * grad[k];
            v[k] = b2 * v[k] + (1.0f - b2) * grad[k] * grad[k];
            value[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
        }
    }
}

std::vector<NamedTensor> AdamOptimizer::export_moments(const Network& network) const
{
    std::vector<NamedTensor> out;
    const auto& params = network.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.push_back({"adam.m." + params[i].name, params[i].shape, m_[i]});
        out.push_back({"adam.v." + params[i].name, params[i].shape, v_[i]});
    }
    return out;
}

void AdamOptimizer::import_moments(const Network& network, const std::vector<NamedTensor>& tensors, long steps)
{
    const auto& params = network.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        bool found_m = false, found_v = false;
        for (const auto& t : tensors) {
            if (t.shape != params[i].shape) continue;
            if (t.name == "adam.m." + params[i].name) {
                m_[i] = t.values;
                found_m = true;
            } else if (t.name == "adam.v." + params[i].name) {
                v_[i] = t.values;
                found_v = true;
            }
        }
        if (!found_m || !found_v) throw ModelError("checkpoint lacks optimizer moments for " + params[i].name);
    }
    t_ = steps;
}

EpochStats train_epoch(Detector& detector, AdamOptimizer& optimizer, std::span<const TrainingPage> pages,
                       const AugmentationPolicy& policy, const TrainSchedule& schedule, TrainState& state)
{
    if (pages.empty()) throw InputError("training set is empty");
    Network& network = detector.network();
    const int channels = detector.config().backbone.input_channels;

    state.lambda_cls = schedule.lambda_for_epoch(state.epoch);
    EpochStats stats;
    stats.epoch = state.epoch;
    stats.lambda_cls = state.lambda_cls;
    stats.learning_rate = state.learning_rate;

    // Shuffling draws from its own stream so the augmentation seed does not reorder data.
    const std::size_t n = pages.size() * static_cast<std::size_t>(schedule.crops_per_page);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(mix_seed(schedule.shuffle_seed, static_cast<std::uint64_t>(state.epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    Network::Trace trace;
    long samples = 0;
    for (std::size_t start = 0; start < n; start += schedule.batch_size) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(schedule.batch_size));
        const double scale = 1.0 / static_cast<double>(end - start);
        network.zero_grad();
        for (std::size_t i = start; i < end; ++i) {
            const TrainingPage& page = pages[order[i] % pages.size()];
            const AugmentationSample aug = sample_augmentation(policy, policy.seed, state.step++);
            const TrainingSample sample = make_training_sample(page, aug, policy, channels);

            const Tensor<float> output = network.forward(sample.input, trace);
            const AnchorGrid anchors = detector.anchors_for(sample.input.width(), sample.input.height());
            const TargetAssignment targets = assign_targets(anchors, sample.truth, detector.config().assignment);
            Tensor<float> grad(output.channels(), output.height(), output.width());
            const LossValue loss =
                total_loss(output, targets, state.lambda_cls, detector.config().focal, &grad, scale);
            if (!std::isfinite(loss.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << state.epoch << ", batch " << start / schedule.batch_size
                    << ": loc=" << loss.loc << " cls=" << loss.cls << " lambda=" << loss.lambda_cls;
                throw TrainingError(msg.str());
            }
            network.backward(trace, grad);
            stats.loss += loss.total;
            stats.loc += loss.loc;
            stats.cls += loss.cls;
            ++samples;
        }
        optimizer.step(network, state.learning_rate);
        ++stats.batches;
    }
    stats.loss /= static_cast<double>(samples);
    stats.loc /= static_cast<double>(samples);
    stats.cls /= static_cast<double>(samples);
    state.optimizer_steps = optimizer.steps();
    ++state.epoch;
    return stats;
}

void plateau_step(TrainState& state, double f1, const TrainSchedule& schedule)
{
    if (f1 - state.best_f1 >= schedule.min_improvement) {
        state.best_f1 = f1;
        state.epochs_since_improvement = 0;
        return;
    }
    if (++state.epochs_since_improvement >= schedule.plateau_patience) {
        state.learning_rate /= schedule.plateau_factor;
        state.epochs_since_improvement = 0;
    }
}

double test_f1(const Detector& detector, std::span<const TrainingPage> pages)
{
    std::vector<PageEvaluation> evals;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        evals.push_back({std::to_string(i), detect_page(detector, pages[i].image, 0, detector.config().score_threshold),
                         pages[i].annotation.chars});
    }
    return evaluate_corpus(evals).char_scores.f1;
}

std::string describe_schedule(const TrainSchedule& schedule)
{
    std::ostringstream out;
    int start = 0;
    for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
        const auto& s = schedule.stages[i];
        out << "stage " << i + 1 << ": epochs " << start << "-" << start + s.epochs - 1 << ", lambda_cls = " << s.lambda_cls;
        if (i + 1 == schedule.stages.size())
            out << ", reduce-on-plateau (factor " << schedule.plateau_factor << ", patience " << schedule.plateau_patience
                << " epochs, monitor: test character F1)";
        out << '\n';
        start += s.epochs;
    }
    return out.str();
}

namespace {

std::string format_double(double v)
{
    std::ostringstream out;
    out << std::setprecision(9) << v;
    return out.str();
}

}  // namespace

RunResult run_training(Detector& detector, std::span<const TrainingPage> train, std::span<const TrainingPage> test,
                       const AugmentationPolicy& policy, const TrainSchedule& schedule, const RunOptions& options)
{
    policy.validate();
    schedule.validate();
    namespace fs = std::filesystem;
    auto log = [&](const std::string& line) {
        if (options.log) options.log(line);
    };

    fs::create_directories(options.out_dir / "checkpoints");
    const fs::path last = options.out_dir / "last.ckpt";
    const fs::path metrics = options.out_dir / "metrics.csv";

    RunResult result;
    TrainState& state = result.state;
    state = TrainState::initial(schedule);
    AdamOptimizer optimizer(detector.network(), schedule.adam_beta1, schedule.adam_beta2, schedule.adam_epsilon);

    if (options.resume) {
        Checkpoint ckpt = load_checkpoint(last);
        if (!(ckpt.detector.config().backbone == detector.config().backbone))
            throw ModelError("resume checkpoint has a different backbone");
        detector = std::move(ckpt.detector);
        state = TrainState::from_json(ckpt.state_json);
        optimizer.import_moments(detector.network(), ckpt.extra, state.optimizer_steps);
        log("resumed at epoch " + std::to_string(state.epoch));
    }

    std::ofstream csv(metrics, options.resume ? std::ios::app : std::ios::trunc);
    if (!csv) throw InputError("cannot write " + metrics.string());
    if (!options.resume) csv << "epoch,loss,loc,cls,lambda,lr,test_f1\n";

    auto save = [&](const fs::path& path) {
        save_checkpoint(path, detector, state.to_json(), optimizer.export_moments(detector.network()));
    };

    const int total = schedule.total_epochs();
    int run = 0;
    while (state.epoch < total && (options.max_epochs < 0 || run < options.max_epochs)) {
        const int epoch = state.epoch;
        EpochStats stats = train_epoch(detector, optimizer, train, policy, schedule, state);
        ++run;

        std::optional<double> f1;
        const bool plateau = schedule.plateau_stage(epoch);
        if (!test.empty() && (plateau || (epoch + 1) % schedule.eval_interval == 0 || state.epoch == total))
            f1 = test_f1(detector, test);
        if (plateau && f1) plateau_step(state, *f1, schedule);
        if (f1 && *f1 > state.best_checkpoint_f1) {
            state.best_checkpoint_f1 = *f1;
            save(options.out_dir / "best.ckpt");
        }
        if (state.epoch % schedule.checkpoint_interval == 0) {
            std::ostringstream name;
            name << "epoch_" << std::setw(4) << std::setfill('0') << state.epoch << ".ckpt";
            save(options.out_dir / "checkpoints" / name.str());
        }
        save(last);

        csv << epoch << ',' << format_double(stats.loss) << ',' << format_double(stats.loc) << ','
            << format_double(stats.cls) << ',' << stats.lambda_cls << ',' << format_double(stats.learning_rate) << ','
            << (f1 ? format_double(*f1) : std::string()) << '\n';
        csv.flush();

        std::ostringstream line;
        line << "epoch " << epoch << " loss " << format_double(stats.loss) << " (loc " << format_double(stats.loc)
             << ", cls " << format_double(stats.cls) << ") lambda " << stats.lambda_cls << " lr "
             << stats.learning_rate;
        if (f1) line << " test_f1 " << format_double(*f1);
        log(line.str());
        result.epochs.push_back(stats);
    }
    return result;
}

}  // namespace obr
