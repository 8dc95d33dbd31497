#include <doctest.h>

#include <cmath>
#include <limits>

#include "bimpm/trainer.hpp"
#include "synthetic.hpp"

using namespace bimpm;

namespace
{

ModelConfig small_config()
{
    ModelConfig c;
    c.embed = EmbedDims{6, 4, 5};
    c.hidden = 5;
    c.perspectives = 3;
    c.ff_hidden = 7;
    return c;
}

TrainConfig quick_train(int epochs = 2)
{
    TrainConfig t;
    t.epochs = epochs;
    t.learning_rate = 0.01;
    return t;
}

struct Fixture
{
    std::vector<SentencePair> train = synth::containment_task(24, 5);
    std::vector<SentencePair> dev = synth::containment_task(12, 6);
    EmbeddingTable table = synth::random_embeddings(synth::word_list(40), 6, 5);
    TaskSchema schema = TaskSchema::for_task(TaskKind::Paraphrase);

    std::unique_ptr<Model<double>> model(ModelConfig c = small_config())
    {
        return build_model<double>(c, train, {&dev}, &table);
    }
};

} // namespace

TEST_CASE("cross entropy of one-hot and uniform distributions")
{
    Graph<double> g;
    Matrix<double> onehot(1, 3);
    onehot << 0, 1, 0;
    CHECK(cross_entropy(g.constant(onehot), 1).scalar() == doctest::Approx(0.0));
    const auto uniform = g.constant(Matrix<double>::Constant(1, 3, 1.0 / 3.0));
    CHECK(cross_entropy(uniform, 2).scalar() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(cross_entropy(uniform, 3), DataError);
    CHECK_THROWS_AS(cross_entropy(uniform, -1), DataError);
}

TEST_CASE("cross entropy through softmax has gradient p - onehot")
{
    ParamStore<double> store;
    auto& z = store.add("z", 1, 3);
    z.value << 0.2, -1.0, 0.7;
    store.zero_grad();
    Graph<double> g;
    auto p = softmax(g.param(z));
    g.backward(cross_entropy(p, 0));
    Matrix<double> expected = p.value();
    expected(0, 0) -= 1.0;
    CHECK((z.grad - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("ADAM: zero gradient is a no-op and the first step moves by the learning rate")
{
    ParamStore<double> store;
    auto& a = store.add("a", 1, 2);
    a.value << 1.0, -2.0;
    store.zero_grad();
    AdamState<double> state;
    adam_step(store, state, AdamConfig{});
    CHECK(a.value(0, 0) == 1.0);
    CHECK(a.value(0, 1) == -2.0);

    // Bias correction makes the first update lr * g / (|g| + eps') regardless of scale.
    AdamState<double> fresh;
    a.grad << 4.0, -0.5;
    adam_step(store, fresh, AdamConfig{0.1});
    CHECK(a.value(0, 0) == doctest::Approx(1.0 - 0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("ADAM matches a scalar reference over many steps")
{
    ParamStore<double> store;
    auto& a = store.add("a", 1, 1);
    a.value(0, 0) = 0.5;
    AdamState<double> state;
    const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
    double x = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 50; ++t) {
        const double grad = 2.0 * (x - 3.0) + std::sin(t);
        a.grad(0, 0) = 2.0 * (a.value(0, 0) - 3.0) + std::sin(t);
        adam_step(store, state, cfg);
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(a.value(0, 0) == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("ADAM leaves frozen parameters alone and names non-finite gradients")
{
    ParamStore<double> store;
    auto& frozen = store.add("frozen", 2, 2, false);
    auto& live = store.add("live", 1, 1);
    frozen.value.setConstant(0.25);
    AdamState<double> state;
    for (int i = 0; i < 100; ++i) {
        frozen.grad.setConstant(1.0);
        live.grad.setConstant(1.0);
        adam_step(store, state, AdamConfig{});
    }
    CHECK(frozen.value == Matrix<double>::Constant(2, 2, 0.25));
    CHECK(live.value(0, 0) < 0.0);

    live.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    const double before = live.value(0, 0);
    try {
        adam_step(store, state, AdamConfig{});
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("live") != std::string::npos);
    }
    CHECK(live.value(0, 0) == before);
}

TEST_CASE("global norm clipping")
{
    ParamStore<double> store;
    auto& a = store.add("a", 1, 2);
    auto& b = store.add("b", 1, 1);
    a.grad << 3.0, 0.0;
    b.grad << 4.0;
    CHECK(clip_global_norm(store, 10.0) == doctest::Approx(5.0));
    CHECK(a.grad(0, 0) == 3.0);
    CHECK(clip_global_norm(store, 1.0) == doctest::Approx(5.0));
    CHECK(a.grad(0, 0) == doctest::Approx(0.6));
    CHECK(b.grad(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("TrainConfig validation")
{
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.learning_rate = 0.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.dropout = 1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.epochs = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("training lowers the loss and is reproducible")
{
    Fixture f;
    auto m1 = f.model();
    TrainConfig cfg = quick_train(3);
    cfg.dropout = 0.0;
    const auto r1 = train(*m1, cfg, f.train, f.dev, f.schema);
    REQUIRE(r1.epochs.size() == 3);
    CHECK(r1.epochs.back().mean_loss < r1.epochs.front().mean_loss);
    CHECK(r1.best_epoch >= 1);
    CHECK(r1.best.metric() == r1.best_metric);
    CHECK_FALSE(r1.diverged);

    auto m2 = f.model();
    const auto r2 = train(*m2, cfg, f.train, f.dev, f.schema);
    CHECK(r1.step_losses == r2.step_losses);
}

TEST_CASE("a single step on one example lowers that example's loss")
{
    Fixture f;
    auto m = f.model();
    const auto& pair = f.train[0];
    auto loss_of = [&] {
        Graph<double> g;
        return cross_entropy(m->forward(g, pair), pair.label).scalar();
    };
    const double before = loss_of();
    m->params().zero_grad();
    {
        Graph<double> g;
        g.backward(cross_entropy(m->forward(g, pair), pair.label));
    }
    AdamState<double> state;
    adam_step(m->params(), state, AdamConfig{0.001});
    CHECK(loss_of() < before);
}

TEST_CASE("the best checkpoint reproduces the dev metric")
{
    Fixture f;
    auto m = f.model();
    const auto r = train(*m, quick_train(2), f.train, f.dev, f.schema);
    auto reloaded = model_from_checkpoint<double>(r.best);
    CHECK(evaluate(*reloaded, f.dev, f.schema).metric == r.best_metric);
}

TEST_CASE("training rejects empty data and mismatched label sets")
{
    Fixture f;
    auto m = f.model();
    const std::vector<SentencePair> empty;
    CHECK_THROWS_AS(train(*m, quick_train(), empty, f.dev, f.schema), DataError);
    CHECK_THROWS_AS(train(*m, quick_train(), f.train, empty, f.schema), DataError);
    CHECK_THROWS_AS(train(*m, quick_train(), f.train, f.dev, TaskSchema::for_task(TaskKind::Nli)), ConfigError);
    CHECK_THROWS_AS(evaluate(*m, empty, f.schema), DataError);
}

TEST_CASE("ranking evaluation groups candidates by question")
{
    const auto schema = TaskSchema::for_task(TaskKind::Ranking);
    std::vector<SentencePair> data(4);
    data[0].group_id = "a";
    data[0].label = 0;
    data[1].group_id = "a";
    data[1].label = 1;
    data[2].group_id = "b";
    data[2].label = 1;
    data[3].group_id = "b";
    data[3].label = 0;
    // Group a ranks its relevant candidate second, group b first.
    const auto r = score_distributions({{0.2, 0.8}, {0.4, 0.6}, {0.1, 0.9}, {0.7, 0.3}}, data, schema);
    CHECK(r.metric_name == "map");
    REQUIRE(r.ranking);
    CHECK(r.metric == doctest::Approx(0.75));
    CHECK(r.ranking->mrr == doctest::Approx(0.75));
    CHECK(r.accuracy == doctest::Approx(0.75));
}

TEST_CASE("ensemble averaging")
{
    Fixture f;
    auto a = f.model();
    ModelConfig other = small_config();
    other.seed = 9;
    auto b = f.model(other);
    const Model<double>* one[] = {a.get()};
    CHECK(ensemble_predict<double>(one, f.dev[0]) == a->predict(f.dev[0]));
    const Model<double>* two[] = {a.get(), b.get()};
    const auto mean = ensemble_predict<double>(two, f.dev[0]);
    CHECK((mean - (a->predict(f.dev[0]) + b->predict(f.dev[0])) / 2.0).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(ensemble_predict<double>(std::span<const Model<double>* const>{}, f.dev[0]), ConfigError);

    std::vector<SentencePair> data(1);
    data[0].label = 0;
    const auto r = score_distributions({{0.5, 0.5}}, data, f.schema);
    CHECK(r.predictions[0] == 0);
}
