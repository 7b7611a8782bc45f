#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mirrorfill/checkpoint.hpp"
#include "mirrorfill/losses.hpp"
#include "mirrorfill/pipeline.hpp"

namespace mirrorfill {

inline constexpr std::array<double, 3> kLearningRates = {2e-4, 2e-5, 2e-6};

struct TrainConfig {
    double scale = 0.125;
    int input_size = 64;
    std::array<int, 3> epochs = {3, 5, 10};
    int samples_per_epoch = 2000;
    std::uint64_t seed = 0;
    int tap_level = 1;
    bool plain_recnet = false;
    /// Detach the flow inside the illumination consistency loss.
    bool illum_stop_gradient = false;
    /// Fraction of stage-3 steps over which the adversarial weights ramp up.
    double adv_ramp_fraction = 0.25;
    int val_samples = 16;
    int val_interval = 500;
    /// Validation rounds without improvement before the learning rate drops.
    int lr_window = 4;
    int checkpoint_interval = 0;  // 0: stage ends only
    LossWeights weights;

    void validate() const;
    long stage_steps(int stage) const;
    std::string to_text() const;
};

/// Flat "key = value" text, '#' comments. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct AdamConfig {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor<float>> m;
    std::vector<Tensor<float>> v;
    std::uint64_t t = 0;

    void reset(const std::vector<Var<float>>& params);
};

/// One Adam update over `params` using their accumulated gradients (missing
/// gradients count as zero). Returns false and leaves everything untouched
/// if any gradient is non-finite.
bool adam_step(std::vector<Var<float>>& params, AdamState& state, double lr, const AdamConfig& config = {});

struct Discriminators {
    Network<float> global;
    std::array<Network<float>, 4> parts;

    std::vector<Var<float>> params();
};

Discriminators build_discriminators(NetScale scale, int input_size, std::uint64_t seed);

struct TrainingState {
    Model<float> model;
    Discriminators disc;
    AdamState adam_g;
    AdamState adam_d;
    int stage = 1;
    long step = 0;  // within the stage
    int lr_index = 0;
    double val_best = 0.0;
    std::uint64_t val_stale = 0;
    std::uint64_t val_rounds = 0;
    double ref_loss = 0.0;
    std::uint64_t above_count = 0;
    std::uint64_t collapse_count = 0;
    std::uint64_t rejected_steps = 0;
    bool finished = false;
};

class Trainer {
public:
    explicit Trainer(TrainConfig config);

    static Trainer resume(const std::filesystem::path& checkpoint);
    static Trainer resume(const std::vector<NamedArray>& arrays);

    /// Runs one step of the current stage, advancing the stage at its end.
    /// Returns the step's report; throws NumericError from the guards.
    LossReport step();

    /// Steps until training finishes or `max_steps` more steps have run.
    void run(std::optional<long> max_steps = std::nullopt,
             const std::function<void(const LossReport&)>& on_step = {});

    std::vector<NamedArray> checkpoint_arrays() const;
    void save(const std::filesystem::path& path) const;

    const TrainConfig& config() const { return config_; }
    const TrainingState& state() const { return state_; }
    TrainingState& mutable_state() { return state_; }
    double learning_rate() const { return kLearningRates[state_.lr_index]; }

    /// Validation objective of the current stage (stage-1 terms in stage 1,
    /// the reconstruction loss afterwards), eval mode.
    double validation_loss() const;

private:
    LossReport step_warping(const HeldOutSample& s, std::uint64_t step_seed);
    LossReport step_reconstruction(const HeldOutSample& s, std::uint64_t step_seed, bool adversarial);
    HeldOutSample training_sample(long step) const;
    void after_step(LossReport& report);
    void begin_stage(int stage);

    TrainConfig config_;
    TrainingState state_;
    Network<float> extractor_;
    PartLayout layout_;
};

/// Loads just the generator model from a trainer checkpoint.
Model<float> load_model(const std::filesystem::path& checkpoint, TrainConfig* config_out = nullptr);

}  // namespace mirrorfill
