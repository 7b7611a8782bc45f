#include "mirrorfill/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mirrorfill/geometry.hpp"
#include "mirrorfill/illumination.hpp"
#include "mirrorfill/masking.hpp"

namespace mirrorfill {
namespace {

constexpr double kDivergenceFactor = 10.0;
constexpr std::uint64_t kDivergenceSteps = 100;
constexpr double kCollapseLevel = 1e-4;
constexpr std::uint64_t kCollapseSteps = 500;
constexpr std::uint64_t kExtractorSeed = 1234;

std::uint64_t mix(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x2545F4914F6CDD1DULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || !std::isfinite(d)) {
        throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
    }
    return d;
}

int to_int(const std::string& key, const std::string& v)
{
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 2e9) {
        throw ValidationError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ValidationError("config: '" + key + "' expects true/false, got '" + v + "'");
}

Tensor<float> pack_text(const std::string& s)
{
    Tensor<float> t(Shape{static_cast<int>(std::max<std::size_t>(s.size(), 1))}, 0.0f);
    for (std::size_t i = 0; i < s.size(); ++i) {
        t[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
    }
    return t;
}

std::string unpack_text(const Tensor<float>& t)
{
    std::string s;
    for (float v : t.vec()) {
        if (v != 0.0f) {
            s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
        }
    }
    return s;
}

struct Named {
    std::string name;
    Var<float> var;
};

std::vector<Named> named_params(const Network<float>& net)
{
    std::vector<Named> out;
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        out.push_back({net.names[i], net.params[i]});
    }
    return out;
}

std::vector<Named> named_params(const Model<float>& model)
{
    std::vector<Named> out;
    for (const Network<float>* n : model.nets()) {
        const auto p = named_params(*n);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<Named> named_params(const Discriminators& d)
{
    std::vector<Named> out = named_params(d.global);
    for (const auto& p : d.parts) {
        const auto q = named_params(p);
        out.insert(out.end(), q.begin(), q.end());
    }
    return out;
}

// Generator parameters updated in `stage`.
std::vector<Named> trainable_generator(const Model<float>& model, int stage)
{
    if (stage == 1) {
        std::vector<Named> out = named_params(model.flow);
        const auto l = named_params(model.light);
        out.insert(out.end(), l.begin(), l.end());
        return out;
    }
    if (stage == 2) {
        return named_params(model.rec);
    }
    return named_params(model);
}

std::vector<Var<float>> vars(const std::vector<Named>& named)
{
    std::vector<Var<float>> out;
    for (const auto& n : named) {
        out.push_back(n.var);
    }
    return out;
}

void copy_into(const std::vector<Named>& dst, const std::vector<NamedArray>& arrays)
{
    for (const auto& n : dst) {
        const NamedArray& a = find_array(arrays, n.name);
        if (a.data.shape() != n.var.shape()) {
            throw FormatError("checkpoint array '" + n.name + "' has shape " + shape_str(a.data.shape()) +
                              ", expected " + shape_str(n.var.shape()));
        }
        Var<float> v = n.var;
        v.mutable_value() = a.data;
    }
}

void set_trainable(Model<float>& model, int stage)
{
    for (Network<float>* n : model.nets()) {
        n->set_trainable(false);
    }
    for (auto& n : trainable_generator(model, stage)) {
        n.var.set_requires_grad(true);
    }
}

}  // namespace

void TrainConfig::validate() const
{
    NetScale::from_fraction(scale);
    validate_input_size(input_size);
    for (int e : epochs) {
        if (e < 1) {
            throw ValidationError("config: epochs must be >= 1");
        }
    }
    if (samples_per_epoch < 1 || samples_per_epoch > 100000) {
        throw ValidationError("config: samples_per_epoch must lie in [1, 100000]");
    }
    if (val_samples < 1 || val_interval < 1 || lr_window < 1) {
        throw ValidationError("config: val_samples, val_interval and lr_window must be >= 1");
    }
    if (!(adv_ramp_fraction >= 0.0 && adv_ramp_fraction <= 1.0)) {
        throw ValidationError("config: adv_ramp_fraction must lie in [0, 1]");
    }
    if (checkpoint_interval < 0) {
        throw ValidationError("config: checkpoint_interval must be >= 0");
    }
    weights.validate();
    describe_recnet(8, input_size, tap_level);
}

long TrainConfig::stage_steps(int stage) const
{
    if (stage == 1 && plain_recnet) {
        return 0;
    }
    return static_cast<long>(epochs.at(stage - 1)) * samples_per_epoch;
}

std::string TrainConfig::to_text() const
{
    std::ostringstream os;
    os.precision(17);
    os << "scale = " << scale << "\ninput_size = " << input_size << "\nepochs_stage1 = " << epochs[0]
       << "\nepochs_stage2 = " << epochs[1] << "\nepochs_stage3 = " << epochs[2]
       << "\nsamples_per_epoch = " << samples_per_epoch << "\nseed = " << seed << "\ntap_level = " << tap_level
       << "\nplain_recnet = " << (plain_recnet ? "true" : "false")
       << "\nillum_stop_gradient = " << (illum_stop_gradient ? "true" : "false")
       << "\nadv_ramp_fraction = " << adv_ramp_fraction << "\nval_samples = " << val_samples
       << "\nval_interval = " << val_interval << "\nlr_window = " << lr_window
       << "\ncheckpoint_interval = " << checkpoint_interval << "\nlambda_r2 = " << weights.lambda_r2
       << "\nlambda_rp = " << weights.lambda_rp << "\nlambda_ag = " << weights.lambda_ag;
    for (int i = 0; i < 4; ++i) {
        os << "\nlambda_ap" << i + 1 << " = " << weights.lambda_ap[i];
    }
    os << "\nlambda_s = " << weights.lambda_s << "\nlambda_l = " << weights.lambda_l
       << "\nlambda_lm = " << weights.lambda_lm << "\nlambda_tv = " << weights.lambda_tv << "\n";
    return os.str();
}

TrainConfig parse_train_config(const std::string& text)
{
    TrainConfig c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string k = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        LossWeights& w = c.weights;
        if (k == "scale") {
            c.scale = to_double(k, v);
        } else if (k == "input_size") {
            c.input_size = to_int(k, v);
        } else if (k == "epochs_stage1") {
            c.epochs[0] = to_int(k, v);
        } else if (k == "epochs_stage2") {
            c.epochs[1] = to_int(k, v);
        } else if (k == "epochs_stage3") {
            c.epochs[2] = to_int(k, v);
        } else if (k == "samples_per_epoch") {
            c.samples_per_epoch = to_int(k, v);
        } else if (k == "seed") {
            const double d = to_double(k, v);
            if (d < 0 || d != std::floor(d)) {
                throw ValidationError("config: seed must be a non-negative integer");
            }
            c.seed = static_cast<std::uint64_t>(d);
        } else if (k == "tap_level") {
            c.tap_level = to_int(k, v);
        } else if (k == "plain_recnet") {
            c.plain_recnet = to_bool(k, v);
        } else if (k == "illum_stop_gradient") {
            c.illum_stop_gradient = to_bool(k, v);
        } else if (k == "adv_ramp_fraction") {
            c.adv_ramp_fraction = to_double(k, v);
        } else if (k == "val_samples") {
            c.val_samples = to_int(k, v);
        } else if (k == "val_interval") {
            c.val_interval = to_int(k, v);
        } else if (k == "lr_window") {
            c.lr_window = to_int(k, v);
        } else if (k == "checkpoint_interval") {
            c.checkpoint_interval = to_int(k, v);
        } else if (k == "lambda_r2") {
            w.lambda_r2 = to_double(k, v);
        } else if (k == "lambda_rp") {
            w.lambda_rp = to_double(k, v);
        } else if (k == "lambda_ag") {
            w.lambda_ag = to_double(k, v);
        } else if (k.size() == 10 && k.rfind("lambda_ap", 0) == 0 && k[9] >= '1' && k[9] <= '4') {
            w.lambda_ap[k[9] - '1'] = to_double(k, v);
        } else if (k == "lambda_s") {
            w.lambda_s = to_double(k, v);
        } else if (k == "lambda_l") {
            w.lambda_l = to_double(k, v);
        } else if (k == "lambda_lm") {
            w.lambda_lm = to_double(k, v);
        } else if (k == "lambda_tv") {
            w.lambda_tv = to_double(k, v);
        } else {
            throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + k + "'");
        }
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) {
        throw ValidationError("cannot open config " + path.string());
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_train_config(buf.str());
}

void AdamState::reset(const std::vector<Var<float>>& params)
{
    m.clear();
    v.clear();
    for (const auto& p : params) {
        m.emplace_back(p.shape());
        v.emplace_back(p.shape());
    }
    t = 0;
}

bool adam_step(std::vector<Var<float>>& params, AdamState& state, double lr, const AdamConfig& config)
{
    if (state.m.size() != params.size()) {
        throw ValidationError("adam_step: optimizer state does not match the parameter list");
    }
    for (const auto& p : params) {
        if (p.has_grad() && !p.grad().all_finite()) {
            return false;
        }
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    const float b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
    const float step = static_cast<float>(lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    const float eps = static_cast<float>(config.eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<float>& w = params[k].mutable_value();
        Tensor<float>& m = state.m[k];
        Tensor<float>& v = state.v[k];
        const bool has = params[k].has_grad();
        const float* g = has ? params[k].grad().data() : nullptr;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const float gi = has ? g[i] : 0.0f;
            m[i] = b1 * m[i] + (1.0f - b1) * gi;
            v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
            w[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
        }
    }
    return true;
}

std::vector<Var<float>> Discriminators::params()
{
    return vars(named_params(*this));
}

Discriminators build_discriminators(NetScale scale, int input_size, std::uint64_t seed)
{
    Discriminators d;
    d.global = build_global_discriminator<float>(scale, input_size, mix(seed, 100));
    for (int i = 0; i < 4; ++i) {
        Architecture a = describe_part_discriminator(scale.base_width(), input_size / 2);
        a.name += std::to_string(i);
        d.parts[i] = make_network<float>(a, mix(seed, 101 + i));
    }
    return d;
}

Trainer::Trainer(TrainConfig config) : config_(std::move(config)), layout_(face_part_layout())
{
    config_.validate();
    const NetScale scale = NetScale::from_fraction(config_.scale);
    state_.model = build_model<float>(scale, config_.input_size, config_.tap_level, config_.plain_recnet,
                                      mix(config_.seed, 1));
    state_.disc = build_discriminators(scale, config_.input_size, mix(config_.seed, 2));
    state_.adam_d.reset(state_.disc.params());
    extractor_ = build_feature_extractor<float>(scale, config_.input_size, kExtractorSeed);
    begin_stage(config_.stage_steps(1) > 0 ? 1 : 2);
}

void Trainer::begin_stage(int stage)
{
    state_.stage = stage;
    state_.step = 0;
    state_.lr_index = 0;
    state_.val_best = 0.0;
    state_.val_stale = 0;
    state_.val_rounds = 0;
    state_.ref_loss = 0.0;
    state_.above_count = 0;
    state_.collapse_count = 0;
    set_trainable(state_.model, stage);
    state_.adam_g.reset(vars(trainable_generator(state_.model, stage)));
    state_.adam_d.reset(state_.disc.params());
}

HeldOutSample Trainer::training_sample(long step) const
{
    const long n = config_.samples_per_epoch;
    const long epoch = step / n;
    std::vector<std::uint64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(mix(config_.seed, static_cast<std::uint64_t>(state_.stage)), epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const std::uint64_t seed = split_seed(Split::Train, order[static_cast<std::size_t>(step % n)]);
    HeldOutSample s;
    s.face = generate_face(seed, config_.input_size, random_asymmetry(seed));
    const std::uint64_t mask_seed = mix(mix(config_.seed, 0xA5A5), mix(static_cast<std::uint64_t>(state_.stage), step));
    s.mask = random_training_mask(mask_seed, s.face);
    s.occluded = apply_occlusion(s.face.image, s.mask);
    return s;
}

LossReport Trainer::step_warping(const HeldOutSample& s, std::uint64_t step_seed)
{
    PipelineOptions opts;
    opts.train = true;
    opts.dropout_seed = step_seed;
    opts.warp_only = true;
    const PipelineOutput<float> out = run_pipeline(state_.model, s.occluded, s.mask, opts);
    const Var<float> truth = Var<float>::constant(s.face.image);
    const Var<float> flow_for_illum = config_.illum_stop_gradient ? ag::detach(out.flow) : out.flow;

    LossTerms<float> terms;
    terms.landmark = landmark_loss(out.flow, s.face.landmarks, flip_landmarks(s.face.landmarks, config_.input_size));
    terms.tv = tv_loss(out.flow);
    terms.illum =
        illumination_consistency_loss(bilinear_warp(flip_horizontal(truth), flow_for_illum), out.ratio, truth);
    Objective<float> obj = total_loss(terms, config_.weights);
    obj.total.backward();
    std::vector<Var<float>> params = vars(trainable_generator(state_.model, 1));
    if (!adam_step(params, state_.adam_g, learning_rate())) {
        ++state_.rejected_steps;
    }
    return obj.report;
}

LossReport Trainer::step_reconstruction(const HeldOutSample& s, std::uint64_t step_seed, bool adversarial)
{
    const LossWeights& w = config_.weights;
    const bool plain = state_.model.plain;
    PipelineOptions opts;
    opts.train = true;
    opts.dropout_seed = step_seed;
    opts.flipped_pass = !plain && w.lambda_s > 0.0;
    const PipelineOutput<float> out = run_pipeline(state_.model, s.occluded, s.mask, opts);
    const Var<float> truth = Var<float>::constant(s.face.image);

    LossTerms<float> terms;
    terms.rec = reconstruction_loss(out.completed, truth, extractor_, w);
    if (opts.flipped_pass) {
        const Shape& fs = out.feat.shape();
        terms.sym = perceptual_symmetry_loss(out.feat, out.feat_flip, downsample_flow(out.flow, fs[1], fs[2]),
                                             resize_bilinear(out.s2, fs[1], fs[2]));
    }
    double d_total = 0.0;
    if (adversarial) {
        const Var<float> fake = ag::detach(out.completed);
        const auto real_parts = crop_parts(truth, s.face.landmarks, layout_, config_.input_size / 2);
        const auto fake_parts = crop_parts(fake, s.face.landmarks, layout_, config_.input_size / 2);
        std::vector<Var<float>> d_terms{
            discriminator_loss(forward(state_.disc.global, truth).output, forward(state_.disc.global, fake).output)};
        for (int i = 0; i < 4; ++i) {
            d_terms.push_back(discriminator_loss(forward(state_.disc.parts[i], real_parts[i]).output,
                                                 forward(state_.disc.parts[i], fake_parts[i]).output));
        }
        const Var<float> d_loss = ag::weighted_sum(d_terms, std::vector<float>(d_terms.size(), 0.2f));
        d_total = d_loss.item();
        d_loss.backward();
        std::vector<Var<float>> d_params = state_.disc.params();
        if (!adam_step(d_params, state_.adam_d, learning_rate())) {
            ++state_.rejected_steps;
        }
        for (auto& p : d_params) {
            p.zero_grad();
            p.set_requires_grad(false);
        }

        const double span = config_.adv_ramp_fraction * static_cast<double>(config_.stage_steps(3));
        const double ramp = span > 0.0 ? std::min(1.0, static_cast<double>(state_.step + 1) / span) : 1.0;
        LossWeights ramped = w;
        ramped.lambda_ag *= ramp;
        for (double& l : ramped.lambda_ap) {
            l *= ramp;
        }
        const auto gen_parts = crop_parts(out.completed, s.face.landmarks, layout_, config_.input_size / 2);
        std::array<Var<float>, 4> g_parts;
        for (int i = 0; i < 4; ++i) {
            g_parts[i] = generator_adversarial_loss(forward(state_.disc.parts[i], gen_parts[i]).output);
        }
        terms.adv = combine_adversarial(
            generator_adversarial_loss(forward(state_.disc.global, out.completed).output), g_parts, ramped);
        for (auto& p : d_params) {
            p.set_requires_grad(true);
        }
        if (!plain) {
            terms.landmark =
                landmark_loss(out.flow, s.face.landmarks, flip_landmarks(s.face.landmarks, config_.input_size));
            terms.tv = tv_loss(out.flow);
            const Var<float> flow_for_illum = config_.illum_stop_gradient ? ag::detach(out.flow) : out.flow;
            terms.illum =
                illumination_consistency_loss(bilinear_warp(flip_horizontal(truth), flow_for_illum), out.ratio, truth);
        }
    }
    Objective<float> obj = total_loss(terms, w);
    obj.report.disc = d_total;
    obj.total.backward();
    std::vector<Var<float>> params = vars(trainable_generator(state_.model, state_.stage));
    if (!adam_step(params, state_.adam_g, learning_rate())) {
        ++state_.rejected_steps;
    }
    return obj.report;
}

LossReport Trainer::step()
{
    if (state_.finished) {
        throw ValidationError("training already finished");
    }
    const std::uint64_t step_seed =
        mix(mix(config_.seed, static_cast<std::uint64_t>(state_.stage)), static_cast<std::uint64_t>(state_.step));
    const HeldOutSample s = training_sample(state_.step);
    LossReport report = state_.stage == 1 ? step_warping(s, step_seed)
                                          : step_reconstruction(s, step_seed, state_.stage == 3);
    for (Network<float>* n : state_.model.nets()) {
        n->zero_grad();
    }
    for (auto& p : state_.disc.params()) {
        p.zero_grad();
    }
    report.step = state_.step;
    report.stage = state_.stage;
    after_step(report);
    return report;
}

void Trainer::after_step(LossReport& report)
{
    if (!std::isfinite(report.total)) {
        throw NumericError("non-finite loss at stage " + std::to_string(state_.stage) + " step " +
                           std::to_string(state_.step));
    }
    // The ramped adversarial term grows by design, so the guard watches the rest.
    const double watched = report.total - report.adv;
    if (state_.step == 0) {
        state_.ref_loss = watched;
    }
    state_.above_count = watched > kDivergenceFactor * state_.ref_loss ? state_.above_count + 1 : 0;
    if (state_.above_count >= kDivergenceSteps) {
        throw NumericError("training diverged: loss above 10x its initial value for 100 steps (stage " +
                           std::to_string(state_.stage) + ")");
    }
    if (state_.stage == 3) {
        state_.collapse_count = report.disc < kCollapseLevel ? state_.collapse_count + 1 : 0;
        if (state_.collapse_count >= kCollapseSteps) {
            throw NumericError("discriminator loss collapsed below 1e-4 for 500 steps");
        }
    }
    ++state_.step;
    if (state_.step % config_.val_interval == 0) {
        const double v = validation_loss();
        if (state_.val_rounds == 0 || v < state_.val_best) {
            state_.val_best = v;
            state_.val_stale = 0;
        } else if (++state_.val_stale >= static_cast<std::uint64_t>(config_.lr_window)) {
            state_.lr_index = std::min<int>(state_.lr_index + 1, static_cast<int>(kLearningRates.size()) - 1);
            state_.val_stale = 0;
        }
        ++state_.val_rounds;
    }
    if (state_.step >= config_.stage_steps(state_.stage)) {
        if (state_.stage == 3) {
            state_.finished = true;
        } else {
            begin_stage(state_.stage + 1);
        }
    }
}

void Trainer::run(std::optional<long> max_steps, const std::function<void(const LossReport&)>& on_step)
{
    long done = 0;
    while (!state_.finished && (!max_steps || done < *max_steps)) {
        const LossReport r = step();
        ++done;
        if (on_step) {
            on_step(r);
        }
    }
}

double Trainer::validation_loss() const
{
    double acc = 0.0;
    for (int k = 0; k < config_.val_samples; ++k) {
        const HeldOutSample s =
            make_sample(Split::Validation, static_cast<std::uint64_t>(k), config_.input_size, MaskKind::Random);
        const Var<float> truth = Var<float>::constant(s.face.image);
        if (state_.stage == 1) {
            PipelineOptions opts;
            opts.warp_only = true;
            const PipelineOutput<float> out = run_pipeline(state_.model, s.occluded, s.mask, opts);
            const LossWeights& w = config_.weights;
            acc += w.lambda_lm * landmark_loss(out.flow, s.face.landmarks,
                                               flip_landmarks(s.face.landmarks, config_.input_size))
                                     .item() +
                   w.lambda_tv * tv_loss(out.flow).item() +
                   w.lambda_l * illumination_consistency_loss(bilinear_warp(flip_horizontal(truth), out.flow),
                                                              out.ratio, truth)
                                    .item();
        } else {
            const PipelineOutput<float> out = run_pipeline(state_.model, s.occluded, s.mask);
            acc += reconstruction_loss(out.completed, truth, extractor_, config_.weights).item();
        }
    }
    return acc / config_.val_samples;
}

std::vector<NamedArray> Trainer::checkpoint_arrays() const
{
    std::vector<NamedArray> out;
    out.push_back({"meta.config", pack_text(config_.to_text())});
    out.push_back({"state.stage", pack_u64(static_cast<std::uint64_t>(state_.stage))});
    out.push_back({"state.step", pack_u64(static_cast<std::uint64_t>(state_.step))});
    out.push_back({"state.lr_index", pack_u64(static_cast<std::uint64_t>(state_.lr_index))});
    out.push_back({"state.val_best", pack_double(state_.val_best)});
    out.push_back({"state.val_stale", pack_u64(state_.val_stale)});
    out.push_back({"state.val_rounds", pack_u64(state_.val_rounds)});
    out.push_back({"state.ref_loss", pack_double(state_.ref_loss)});
    out.push_back({"state.above_count", pack_u64(state_.above_count)});
    out.push_back({"state.collapse_count", pack_u64(state_.collapse_count)});
    out.push_back({"state.rejected_steps", pack_u64(state_.rejected_steps)});
    out.push_back({"state.finished", pack_u64(state_.finished ? 1 : 0)});
    out.push_back({"adam_g.t", pack_u64(state_.adam_g.t)});
    out.push_back({"adam_d.t", pack_u64(state_.adam_d.t)});
    for (const auto& n : named_params(state_.model)) {
        out.push_back({n.name, n.var.value()});
    }
    for (const auto& n : named_params(state_.disc)) {
        out.push_back({n.name, n.var.value()});
    }
    const auto g = trainable_generator(state_.model, state_.stage);
    for (std::size_t k = 0; k < g.size(); ++k) {
        out.push_back({"adam_g.m." + g[k].name, state_.adam_g.m[k]});
        out.push_back({"adam_g.v." + g[k].name, state_.adam_g.v[k]});
    }
    const auto d = named_params(state_.disc);
    for (std::size_t k = 0; k < d.size(); ++k) {
        out.push_back({"adam_d.m." + d[k].name, state_.adam_d.m[k]});
        out.push_back({"adam_d.v." + d[k].name, state_.adam_d.v[k]});
    }
    return out;
}

void Trainer::save(const std::filesystem::path& path) const
{
    save_checkpoint(path, checkpoint_arrays());
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint)
{
    return resume(load_checkpoint(checkpoint));
}

Trainer Trainer::resume(const std::vector<NamedArray>& arrays)
{
    Trainer t(parse_train_config(unpack_text(find_array(arrays, "meta.config").data)));
    auto u64 = [&](const char* name) { return unpack_u64(find_array(arrays, name).data); };
    const std::uint64_t stage = u64("state.stage");
    if (stage < 1 || stage > 3) {
        throw FormatError("checkpoint stage out of range");
    }
    t.begin_stage(static_cast<int>(stage));
    TrainingState& s = t.state_;
    s.step = static_cast<long>(u64("state.step"));
    s.lr_index = static_cast<int>(std::min<std::uint64_t>(u64("state.lr_index"), kLearningRates.size() - 1));
    s.val_best = unpack_double(find_array(arrays, "state.val_best").data);
    s.val_stale = u64("state.val_stale");
    s.val_rounds = u64("state.val_rounds");
    s.ref_loss = unpack_double(find_array(arrays, "state.ref_loss").data);
    s.above_count = u64("state.above_count");
    s.collapse_count = u64("state.collapse_count");
    s.rejected_steps = u64("state.rejected_steps");
    s.finished = u64("state.finished") != 0;
    s.adam_g.t = u64("adam_g.t");
    s.adam_d.t = u64("adam_d.t");
    copy_into(named_params(s.model), arrays);
    copy_into(named_params(s.disc), arrays);
    const auto g = trainable_generator(s.model, s.stage);
    for (std::size_t k = 0; k < g.size(); ++k) {
        s.adam_g.m[k] = find_array(arrays, "adam_g.m." + g[k].name).data;
        s.adam_g.v[k] = find_array(arrays, "adam_g.v." + g[k].name).data;
    }
    const auto d = named_params(s.disc);
    for (std::size_t k = 0; k < d.size(); ++k) {
        s.adam_d.m[k] = find_array(arrays, "adam_d.m." + d[k].name).data;
        s.adam_d.v[k] = find_array(arrays, "adam_d.v." + d[k].name).data;
    }
    return t;
}

Model<float> load_model(const std::filesystem::path& checkpoint, TrainConfig* config_out)
{
    const std::vector<NamedArray> arrays = load_checkpoint(checkpoint);
    const TrainConfig config = parse_train_config(unpack_text(find_array(arrays, "meta.config").data));
    Model<float> model = build_model<float>(NetScale::from_fraction(config.scale), config.input_size,
                                            config.tap_level, config.plain_recnet, 0);
    copy_into(named_params(model), arrays);
    for (Network<float>* n : model.nets()) {
        n->set_trainable(false);
    }
    if (config_out) {
        *config_out = config;
    }
    return model;
}

}  // namespace mirrorfill
