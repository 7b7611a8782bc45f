#include "doctest.h"

#include <cmath>
#include <limits>

#include "mirrorfill/trainer.hpp"

using namespace mirrorfill;

namespace {

TrainConfig tiny_config()
{
    TrainConfig c;
    c.input_size = 32;
    c.epochs = {1, 1, 1};
    c.samples_per_epoch = 4;
    c.val_samples = 2;
    c.val_interval = 2;
    c.seed = 11;
    return c;
}

std::string bytes_of(const Trainer& t)
{
    return serialize_checkpoint(t.checkpoint_arrays());
}

std::vector<Tensor<float>> values(const Network<float>& net)
{
    std::vector<Tensor<float>> out;
    for (const auto& p : net.params) {
        out.push_back(p.value());
    }
    return out;
}

}  // namespace

TEST_CASE("adam update")
{
    Var<float> p = Var<float>::leaf(Tensor<float>(Shape{3}, 1.0f));
    std::vector<Var<float>> params{p};
    AdamState st;
    st.reset(params);
    ag::sum(ag::scale(p, 3.0f)).backward();
    CHECK(adam_step(params, st, 2e-4));
    for (float v : p.value().vec()) {
        CHECK(v == doctest::Approx(1.0 - 2e-4).epsilon(1e-6));
    }
    CHECK(st.t == 1);

    // No gradient: moments decay but nothing moves from zero state.
    Var<float> q = Var<float>::leaf(Tensor<float>(Shape{2}, 0.5f));
    std::vector<Var<float>> qs{q};
    AdamState sq;
    sq.reset(qs);
    CHECK(adam_step(qs, sq, 2e-4));
    CHECK(q.value().vec() == std::vector<float>{0.5f, 0.5f});

    Var<float> r = Var<float>::leaf(Tensor<float>(Shape{1}, 2.0f));
    std::vector<Var<float>> rs{r};
    AdamState sr;
    sr.reset(rs);
    ag::sum(ag::scale(r, std::numeric_limits<float>::infinity())).backward();
    CHECK_FALSE(adam_step(rs, sr, 2e-4));
    CHECK(r.value().item() == 2.0f);
    CHECK(sr.t == 0);
}

TEST_CASE("config text")
{
    TrainConfig c = tiny_config();
    c.weights.lambda_ap[2] = 7.5;
    c.plain_recnet = true;
    const TrainConfig back = parse_train_config(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.weights.lambda_ap[2] == 7.5);

    const TrainConfig d = parse_train_config("# desk\nscale = 0.25\n\nepochs_stage2 = 2  # short\nlambda_s=0\n");
    CHECK(d.scale == 0.25);
    CHECK(d.epochs[1] == 2);
    CHECK(d.weights.lambda_s == 0.0);
    CHECK(d.weights.lambda_r2 == 300.0);

    CHECK_THROWS_AS(parse_train_config("colour = red\n"), ValidationError);
    CHECK_THROWS_AS(parse_train_config("scale = 0.3\n"), ValidationError);
    CHECK_THROWS_AS(parse_train_config("input_size = 48\n"), ValidationError);
    CHECK_THROWS_AS(parse_train_config("epochs_stage1 = 1.5\n"), ValidationError);
    CHECK_THROWS_AS(parse_train_config("lambda_l = -1\n"), ValidationError);
    CHECK_THROWS_AS(parse_train_config("lambda_ap5 = 1\n"), ValidationError);
    CHECK_THROWS_AS(parse_train_config("seed\n"), ValidationError);
    CHECK_THROWS_AS(load_train_config("/nonexistent/train.cfg"), ValidationError);
}

TEST_CASE("stage schedule")
{
    TrainConfig c = tiny_config();
    CHECK(c.stage_steps(1) == 4);
    Trainer t(c);
    std::vector<int> stages;
    t.run(std::nullopt, [&](const LossReport& r) { stages.push_back(r.stage); });
    CHECK(stages == std::vector<int>{1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3});
    CHECK(t.state().finished);
    CHECK_THROWS_AS(t.step(), ValidationError);

    c.plain_recnet = true;
    Trainer p(c);
    CHECK(p.state().stage == 2);
    CHECK(p.state().model.plain);
}

TEST_CASE("equal seeds give identical checkpoints")
{
    Trainer a(tiny_config()), b(tiny_config());
    a.run(10);
    b.run(10);
    CHECK(bytes_of(a) == bytes_of(b));

    TrainConfig other = tiny_config();
    other.seed = 12;
    Trainer c(other);
    c.run(10);
    CHECK(bytes_of(c) != bytes_of(a));
}

TEST_CASE("resume matches an uninterrupted run")
{
    for (long cut : {2L, 5L, 9L}) {
        Trainer full(tiny_config());
        std::vector<double> totals_full;
        full.run(12, [&](const LossReport& r) { totals_full.push_back(r.total); });

        Trainer first(tiny_config());
        std::vector<double> totals;
        first.run(cut, [&](const LossReport& r) { totals.push_back(r.total); });
        const std::string saved = bytes_of(first);
        Trainer resumed = Trainer::resume(deserialize_checkpoint(saved));
        CHECK(bytes_of(resumed) == saved);
        resumed.run(12 - cut, [&](const LossReport& r) { totals.push_back(r.total); });
        CHECK(totals == totals_full);
        CHECK(bytes_of(resumed) == bytes_of(full));
    }
}

TEST_CASE("stage 2 leaves the warping subnet untouched")
{
    Trainer t(tiny_config());
    t.run(4);
    REQUIRE(t.state().stage == 2);
    const auto flow = values(t.state().model.flow);
    const auto light = values(t.state().model.light);
    const auto rec = values(t.state().model.rec);
    t.run(4);
    CHECK(values(t.state().model.flow) == flow);
    CHECK(values(t.state().model.light) == light);
    CHECK(values(t.state().model.rec) != rec);
}

TEST_CASE("stage 1 leaves RecNet untouched and reports a weighted sum")
{
    Trainer t(tiny_config());
    const auto rec = values(t.state().model.rec);
    const auto flow = values(t.state().model.flow);
    const LossWeights& w = t.config().weights;
    for (int k = 0; k < 3; ++k) {
        const LossReport r = t.step();
        const double sum = w.lambda_lm * r.landmark + w.lambda_tv * r.tv + w.lambda_l * r.illum;
        CHECK(r.total == doctest::Approx(sum).epsilon(1e-9));
        CHECK(r.rec == 0.0);
        CHECK(r.adv == 0.0);
    }
    CHECK(values(t.state().model.rec) == rec);
    CHECK(values(t.state().model.flow) != flow);
}

TEST_CASE("stage 3 reports the discriminator and the ramped adversarial term")
{
    TrainConfig c = tiny_config();
    Trainer t(c);
    t.run(8);
    REQUIRE(t.state().stage == 3);
    const LossReport first = t.step();
    CHECK(first.disc > 0.0);
    CHECK(first.adv > 0.0);
    CHECK(first.landmark > 0.0);
    // ramp = 1 / (0.25 * 4) reaches full weight on the first step
    const LossWeights& w = c.weights;
    const double rest = first.rec + w.lambda_s * first.sym + w.lambda_l * first.illum + w.lambda_lm * first.landmark +
                        w.lambda_tv * first.tv;
    CHECK(first.total == doctest::Approx(rest + first.adv).epsilon(1e-9));
}

TEST_CASE("learning rate drops after a stale window")
{
    TrainConfig c = tiny_config();
    c.val_interval = 1;
    c.lr_window = 2;
    Trainer t(c);
    t.step();
    CHECK(t.state().val_rounds == 1);
    t.mutable_state().val_best = -1.0;
    t.step();
    CHECK(t.learning_rate() == kLearningRates[0]);
    t.step();
    CHECK(t.learning_rate() == kLearningRates[1]);
    CHECK(t.state().val_stale == 0);
}

TEST_CASE("guards")
{
    SUBCASE("divergence")
    {
        Trainer t(tiny_config());
        t.step();
        t.mutable_state().ref_loss = 1e-30;
        t.mutable_state().above_count = 99;
        CHECK_THROWS_AS(t.step(), NumericError);
    }
    SUBCASE("non-finite weights")
    {
        Trainer t(tiny_config());
        t.mutable_state().model.flow.params[0].mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_AS(t.step(), NumericError);
    }
}

TEST_CASE("load_model restores the generator")
{
    Trainer t(tiny_config());
    t.run(3);
    const auto path = std::filesystem::temp_directory_path() / "mirrorfill_trainer_test.symc";
    t.save(path);
    TrainConfig cfg;
    const Model<float> m = load_model(path, &cfg);
    CHECK(cfg.to_text() == t.config().to_text());
    CHECK(values(m.flow) == values(t.state().model.flow));
    CHECK(values(m.rec) == values(t.state().model.rec));
    std::filesystem::remove(path);

    auto arrays = t.checkpoint_arrays();
    arrays.erase(arrays.begin() + 20);
    CHECK_THROWS_AS(Trainer::resume(arrays), FormatError);
}
