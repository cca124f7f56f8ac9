#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "obr/datasets.hpp"
#include "obr/detector.hpp"
#include "obr/imaging.hpp"

namespace obr {

/// Random page rescale to a width in [min_width, max_width], vertical
/// stretch, rotation, mirroring and a fixed-size crop.
struct AugmentationPolicy {
    double min_width = 550;
    double max_width = 1150;
    double vertical_stretch = 0.10;
    double max_rotation_deg = 5;
    double mirror_probability = 0.5;
    int crop_width = 416;
    int crop_height = 416;
    std::uint64_t seed = 1;

    void validate() const;
};

struct AugmentationSample {
    double target_width = 0;
    double stretch = 0;  // relative vertical change
    double rotation_deg = 0;
    bool mirror = false;
    double crop_u = 0;  // crop origin as a fraction of its admissible range
    double crop_v = 0;

    GeometricTransform transform(int src_width, int src_height, const AugmentationPolicy& policy) const;
};

// Deterministic in (policy, seed, step).
AugmentationSample sample_augmentation(const AugmentationPolicy& policy, std::uint64_t seed, std::uint64_t step);

struct TrainingPage {
    RasterImage image;
    PageAnnotation annotation;
};

struct TrainingSample {
    NormalizedImage input;
    std::vector<LabeledBox> truth;
};

/// Reads every annotation listed in a manifest plus its image (resolved
/// against the annotation's directory). Throws InputError when an image is
/// missing or its size disagrees with the annotation.
std::vector<TrainingPage> load_training_pages(const std::filesystem::path& manifest);

// Applies the sample to a page; mirrored crops carry mirrored classes.
TrainingSample make_training_sample(const TrainingPage& page, const AugmentationSample& sample,
                                    const AugmentationPolicy& policy, int input_channels);

struct StagePlan {
    double lambda_cls;
    int epochs;
};

struct TrainSchedule {
    double learning_rate = 1e-4;
    int batch_size = 24;
    // The last stage runs with reduce-on-plateau.
    std::vector<StagePlan> stages{{1, 500}, {100, 500}, {1000, 1500}};
    int plateau_patience = 500;
    double plateau_factor = 10;
    double min_improvement = 1e-5;
    int crops_per_page = 1;
    std::uint64_t shuffle_seed = 2;
    std::uint64_t init_seed = 3;
    int eval_interval = 10;
    int checkpoint_interval = 50;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
    int total_epochs() const;
    double lambda_for_epoch(int epoch) const;
    bool plateau_stage(int epoch) const;
};

struct TrainState {
    int epoch = 0;            // completed epochs
    std::uint64_t step = 0;   // augmentation samples drawn so far
    double best_f1 = -1;      // plateau monitor
    int epochs_since_improvement = 0;
    double learning_rate = 0;
    double lambda_cls = 1;
    double best_checkpoint_f1 = -1;
    long optimizer_steps = 0;

    static TrainState initial(const TrainSchedule& schedule);
    std::string to_json() const;
    static TrainState from_json(const std::string& text);
    friend bool operator==(const TrainState&, const TrainState&) = default;
};

class AdamOptimizer {
public:
    AdamOptimizer(const Network& network, double beta1, double beta2, double epsilon);

    void step(Network& network, double learning_rate);
    long steps() const { return t_; }

    std::vector<NamedTensor> export_moments(const Network& network) const;
    void import_moments(const Network& network, const std::vector<NamedTensor>& tensors, long steps);

private:
    double beta1_, beta2_, epsilon_;
    long t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

class TrainingError : public ModelError {
public:
    using ModelError::ModelError;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0;
    double loc = 0;
    double cls = 0;
    double lambda_cls = 0;
    double learning_rate = 0;
    int batches = 0;
};

/// One pass over shuffled (page, crop) pairs with one optimizer step per
/// batch. Throws TrainingError on a non-finite loss.
EpochStats train_epoch(Detector& detector, AdamOptimizer& optimizer, std::span<const TrainingPage> pages,
                       const AugmentationPolicy& policy, const TrainSchedule& schedule, TrainState& state);

// Reduce-on-plateau bookkeeping for one F1 observation.
void plateau_step(TrainState& state, double f1, const TrainSchedule& schedule);

// Character-level F1 of the detector on full pages.
double test_f1(const Detector& detector, std::span<const TrainingPage> pages);

struct RunOptions {
    std::filesystem::path out_dir;
    bool resume = false;
    std::function<void(const std::string&)> log;
    int max_epochs = -1;  // stop early (for tests); -1 runs the full schedule
};

struct RunResult {
    TrainState state;
    std::vector<EpochStats> epochs;
};

/// Full schedule with run directory output:
///   metrics.csv (epoch,loss,loc,cls,lambda,lr,test_f1),
///   checkpoints/epoch_NNNN.ckpt every checkpoint_interval epochs,
///   best.ckpt on each new best test F1, last.ckpt after every epoch.
RunResult run_training(Detector& detector, std::span<const TrainingPage> train, std::span<const TrainingPage> test,
                       const AugmentationPolicy& policy, const TrainSchedule& schedule, const RunOptions& options);

// Stage plan as text, one line per stage.
std::string describe_schedule(const TrainSchedule& schedule);

}  // namespace obr
