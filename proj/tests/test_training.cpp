#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "zoomiq/checkpoint.hpp"
#include "zoomiq/dataset.hpp"
#include "zoomiq/loss.hpp"
#include "zoomiq/metrics.hpp"
#include "zoomiq/train.hpp"

#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace zoomiq;
using nd::Tape;
using nd::TensorT;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("zoomiq_train_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double metrics_srcc_or_zero(const std::vector<double>& a, const std::vector<double>& b) {
    try {
        return zoomiq::metrics::srcc(a, b);
    } catch (const zoomiq::DataError&) {
        return 0.0;
    }
}

template <typename T>
nd::TensorPtr<T> vec(std::vector<T> v, bool rg = false) {
    const int n = int(v.size());
    return TensorT<T>::from({n}, std::move(v), rg);
}

// small setup shared by the training smoke tests
struct TinyRun {
    aug::ZoomRegistry registry =
        aug::make_registry("tiny", {{"c32", std::nullopt, 32, 0}, {"r48c48", 48, 48, 0}});
    net::BackboneConfig backbone{4, 2, 8};
    training::LossConfig loss;
    training::TrainConfig cfg;

    TinyRun() {
        cfg.epochs = 2;
        cfg.batch_size = 8;
    }
};

} // namespace

TEST_CASE("plcc loss endpoints and fallback") {
    auto perfect = training::plcc_loss<double>(nullptr, vec<double>({1, 2, 3}), vec<double>({2, 4, 6}));
    CHECK(perfect->item() == doctest::Approx(0.0).epsilon(1e-12));

    auto inverted = training::plcc_loss<double>(nullptr, vec<double>({1, 2, 3}), vec<double>({3, 2, 1}));
    CHECK(inverted->item() == doctest::Approx(1.0).epsilon(1e-12));

    auto flat = training::plcc_loss<double>(nullptr, vec<double>({2, 2, 2}), vec<double>({1, 2, 3}));
    CHECK(flat->item() == 0.5);
    CHECK(!flat->requires_grad); // fallback carries no gradient

    CHECK_THROWS_AS(training::plcc_loss<double>(nullptr, vec<double>({1}), vec<double>({1})),
                    ContractViolation);
}

TEST_CASE("plcc loss matches the direct Pearson formula") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> p, t;
        const int n = 4 + int(rng.next_u64() % 40);
        for (int i = 0; i < n; ++i) {
            p.push_back(rng.normal());
            t.push_back(rng.normal());
        }
        auto loss = training::plcc_loss<double>(nullptr, vec(p), vec(t));
        const double expected = (1.0 - oracle::pearson_direct(p, t)) / 2.0;
        CHECK(loss->item() == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("plcc loss is invariant under positive affine maps of pred") {
    Rng rng(5);
    std::vector<double> p, t;
    for (int i = 0; i < 24; ++i) {
        p.push_back(rng.normal());
        t.push_back(rng.normal());
    }
    const double base = training::plcc_loss<double>(nullptr, vec(p), vec(t))->item();
    for (auto [a, b] : std::vector<std::pair<double, double>>{{2.0, 0.0}, {0.3, -4.0}, {17.5, 2.25}}) {
        std::vector<double> scaled;
        for (double v : p) scaled.push_back(a * v + b);
        const double moved = training::plcc_loss<double>(nullptr, vec(scaled), vec(t))->item();
        CHECK(moved == doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("plcc loss gradient matches finite differences") {
    Rng rng(7);
    std::vector<double> p, t;
    for (int i = 0; i < 12; ++i) {
        p.push_back(rng.normal());
        t.push_back(rng.normal());
    }
    auto pred = vec(p, true);
    auto target = vec(t);
    auto res = gradcheck::check(
        [&](Tape<double>* tape) { return training::plcc_loss<double>(tape, pred, target); }, {pred});
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("total loss degeneracies") {
    Rng rng(9);
    std::vector<float> pf, tf;
    for (int i = 0; i < 16; ++i) {
        pf.push_back(float(rng.normal()));
        tf.push_back(float(rng.normal()));
    }
    auto pred = vec(pf);
    auto target = vec(tf);

    // lambda = 1 follows the exact MSE computation path
    auto mse = training::mse_loss<float>(nullptr, pred, target);
    auto l1 = training::total_loss<float>(nullptr, pred, target, {1.0, 1e-8});
    CHECK(l1->values[0] == mse->values[0]);

    // lambda = 0 on perfectly correlated values: chosen so the chain is exact
    auto l0 = training::total_loss<float>(nullptr, vec<float>({1, 2, 3, 4}), vec<float>({2, 4, 6, 8}),
                                          {0.0, 1e-8});
    CHECK(l0->values[0] == 0.0f);

    // lambda = 0.5 with pred == target: both terms vanish
    auto lhalf = training::total_loss<double>(nullptr, vec<double>({1, 2, 3}), vec<double>({1, 2, 3}),
                                              {0.5, 1e-8});
    CHECK(lhalf->item() == doctest::Approx(0.0).epsilon(1e-12));

    // constant predictions hit the fallback, no NaN anywhere
    auto lconst = training::total_loss<double>(nullptr, vec<double>({1, 1, 1}), vec<double>({1, 2, 3}),
                                               {0.5, 1e-8});
    CHECK(std::isfinite(lconst->item()));
}

TEST_CASE("total loss constant-pred value is lambda*mse + (1-lambda)*0.5") {
    auto l = training::total_loss<double>(nullptr, vec<double>({1, 1, 1}), vec<double>({1, 2, 3}),
                                          {0.5, 1e-8});
    CHECK(l->item() == doctest::Approx(0.5 * (5.0 / 3.0) + 0.25).epsilon(1e-12));
}

TEST_CASE("full 2-head step loss gradient matches finite differences") {
    auto registry =
        aug::make_registry("check", {{"c32", std::nullopt, 32, 0}, {"r48c48", 48, 48, 0}});
    auto model = net::init_model<double>(net::BackboneConfig{4, 2, 8}, 2, 125);

    Rng rng(11);
    std::vector<img::ImageF32> images;
    for (int i = 0; i < 4; ++i) {
        img::ImageF32 im(40, 56);
        for (auto& v : im.data) v = float(rng.uniform());
        images.push_back(std::move(im));
    }
    auto targets = vec<double>({-1.0, -0.25, 0.5, 1.25});
    training::LossConfig loss_cfg;

    auto forward = [&](Tape<double>* tape) {
        return training::multi_head_step_loss<double>(model, tape, registry, images, targets, loss_cfg,
                                                      aug::ZoomMode::Eval, nullptr);
    };

    // subsample the parameter set: heads dominate the count and repeat structure
    auto res = gradcheck::check(forward,
                                {model.stem_weight, model.blocks[0].dw_weight, model.blocks[0].pw_weight,
                                 model.blocks[1].pw_bias, model.heads[0].fc2_weight,
                                 model.heads[1].fc2_weight, model.heads[0].fc1_bias},
                                1e-4, /*detect_kinks=*/true);
    CHECK(res.checked > 100);
    CHECK(res.max_rel_err <= 1e-4);
    CHECK(res.excluded <= res.checked / 20); // kink-straddling windows stay rare
}

TEST_CASE("mixed-size step loss gradient matches finite differences") {
    // a resize-only zoom on mixed-aspect images forces the per-size-group
    // forward plus concat/gather stitching; the gradient must flow through it
    auto registry = aug::make_registry("mix", {{"r40", 40, std::nullopt, 0}});
    auto model = net::init_model<double>(net::BackboneConfig{4, 2, 8}, 1, 77);

    Rng rng(17);
    std::vector<img::ImageF32> images;
    for (int i = 0; i < 4; ++i) {
        img::ImageF32 im(i % 2 ? 40 : 50, i % 2 ? 52 : 40); // two landscape, two portrait
        for (auto& v : im.data) v = float(rng.uniform());
        images.push_back(std::move(im));
    }
    auto targets = nd::TensorT<double>::from({4}, {0.5, -0.5, 1.0, -1.0});
    training::LossConfig loss_cfg;

    auto forward = [&](Tape<double>* tape) {
        return training::multi_head_step_loss<double>(model, tape, registry, images, targets, loss_cfg,
                                                      aug::ZoomMode::Eval, nullptr);
    };
    auto res = gradcheck::check(forward,
                                {model.stem_weight, model.blocks[1].pw_weight, model.heads[0].fc2_weight},
                                1e-4, /*detect_kinks=*/true);
    CHECK(res.checked > 50);
    CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("grouped mixed-size forward equals per-sample forward") {
    auto model = net::init_model<float>(net::BackboneConfig{4, 2, 8}, 1, 5);
    Rng rng(13);
    std::vector<img::ImageF32> zoomed;
    for (int i = 0; i < 5; ++i) {
        img::ImageF32 im(i % 2 ? 40 : 48, i % 2 ? 40 : 48);
        for (auto& v : im.data) v = float(rng.uniform());
        zoomed.push_back(std::move(im));
    }
    auto batched = training::predict_scores<float>(model, nullptr, zoomed, 0);
    REQUIRE(batched->shape == std::vector<int>({5}));
    for (int i = 0; i < 5; ++i) {
        auto single = training::predict_scores<float>(model, nullptr, {zoomed[std::size_t(i)]}, 0);
        CHECK(batched->values[std::size_t(i)] == single->values[0]);
    }
}

TEST_CASE("checkpoint round trip is byte-identical") {
    auto dir = temp_dir("ckpt");
    TinyRun tiny;
    auto model = net::init_model<float>(tiny.backbone, 2, 3);

    training::Checkpoint ckpt;
    ckpt.meta["backbone"] = training::backbone_to_json(tiny.backbone);
    ckpt.meta["registry"] = training::registry_to_json(tiny.registry);
    ckpt.meta["best_head"] = 1;
    ckpt.meta["epoch"] = 2;
    ckpt.meta["seed"] = 3;
    ckpt.meta["mos_mean"] = 3.0;
    ckpt.meta["mos_std"] = 1.4142135623730951;
    for (auto& [name, p] : model.named_parameters())
        ckpt.tensors.emplace_back(name, nd::Tensor::from(p->shape, p->values));

    const auto p1 = dir / "a.ckpt";
    const auto p2 = dir / "b.ckpt";
    training::save_checkpoint(ckpt, p1);
    auto loaded = training::load_checkpoint(p1);
    training::save_checkpoint(loaded, p2);
    CHECK(read_file(p1) == read_file(p2));

    // structural equality
    CHECK(loaded.best_head() == 1);
    CHECK(loaded.mos_std() == 1.4142135623730951);
    REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
    for (std::size_t i = 0; i < loaded.tensors.size(); ++i) {
        CHECK(loaded.tensors[i].first == ckpt.tensors[i].first);
        CHECK(loaded.tensors[i].second->shape == ckpt.tensors[i].second->shape);
        CHECK(loaded.tensors[i].second->values == ckpt.tensors[i].second->values);
    }

    // the registry and model rebuild from metadata
    auto reg = training::registry_from_checkpoint(loaded);
    CHECK(reg.specs.size() == 2);
    auto rebuilt = training::model_from_checkpoint(loaded);
    CHECK(rebuilt.parameter_count() == model.parameter_count());
    CHECK(rebuilt.heads[1].fc1_weight->values == model.heads[1].fc1_weight->values);
    fs::remove_all(dir);
}

TEST_CASE("corrupted checkpoints fail with data errors") {
    auto dir = temp_dir("ckptbad");
    TinyRun tiny;
    auto model = net::init_model<float>(tiny.backbone, 1, 3);
    training::Checkpoint ckpt;
    ckpt.meta["backbone"] = training::backbone_to_json(tiny.backbone);
    ckpt.meta["registry"] = training::registry_to_json(aug::builtin_registry("baseline"));
    ckpt.meta["best_head"] = 0;
    ckpt.meta["epoch"] = 1;
    ckpt.meta["seed"] = 0;
    ckpt.meta["mos_mean"] = 0.0;
    ckpt.meta["mos_std"] = 1.0;
    for (auto& [name, p] : model.named_parameters()) ckpt.tensors.emplace_back(name, p);
    const auto path = dir / "m.ckpt";
    training::save_checkpoint(ckpt, path);

    auto bytes = read_file(path);
    {
        auto bad = bytes;
        bad[0] = 'X';
        std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(training::load_checkpoint(dir / "magic.ckpt"),
                             doctest::Contains("bad magic"), DataError);
    }
    {
        auto bad = bytes.substr(0, bytes.size() / 2);
        std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(training::load_checkpoint(dir / "trunc.ckpt"),
                             doctest::Contains("offset"), DataError);
    }
    {
        auto bad = bytes;
        bad[5] = 9; // version
        std::ofstream(dir / "ver.ckpt", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(training::load_checkpoint(dir / "ver.ckpt"),
                             doctest::Contains("version"), DataError);
    }
    CHECK_THROWS_AS(training::load_checkpoint(dir / "absent.ckpt"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("training runs deterministically and the loss falls") {
    auto dir = temp_dir("run");
    data::SyntheticSpec spec;
    spec.num_refs = 4;
    spec.image_size = 48;
    spec.seed = 21;
    auto manifest = data::generate_synthetic(spec, dir);
    auto [train_m, val_m] = data::split(manifest, 0.75, 0);

    TinyRun tiny;
    tiny.cfg.epochs = 5;

    // median-of-3-seeds decrease of the epoch-mean loss
    int decreases = 0;
    for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
        auto cfg = tiny.cfg;
        cfg.seed = seed;
        auto result = training::train(tiny.registry, tiny.backbone, tiny.loss, cfg, train_m, val_m);
        REQUIRE(result.history.size() == 5);
        if (result.history.back().mean_loss < result.history.front().mean_loss) ++decreases;
        CHECK(result.checkpoint.best_head() >= 0);
        CHECK(result.checkpoint.best_head() < 2);
    }
    CHECK(decreases >= 2);

    // byte-identical checkpoints for one seed
    auto cfg = tiny.cfg;
    cfg.seed = 7;
    auto r1 = training::train(tiny.registry, tiny.backbone, tiny.loss, cfg, train_m, val_m);
    auto r2 = training::train(tiny.registry, tiny.backbone, tiny.loss, cfg, train_m, val_m);
    training::save_checkpoint(r1.checkpoint, dir / "r1.ckpt");
    training::save_checkpoint(r2.checkpoint, dir / "r2.ckpt");
    CHECK(read_file(dir / "r1.ckpt") == read_file(dir / "r2.ckpt"));

    // best_head selection is argmax-stable under re-evaluation of the
    // deployment-condition validation
    auto model = training::model_from_checkpoint(r1.checkpoint);
    auto val = training::predict_manifest_all_heads(model, val_m);
    std::vector<double> usable_mos;
    for (std::size_t i : val.sample_indices) usable_mos.push_back(val_m.records[i].mos);
    int best = 0;
    double best_srcc = -2;
    for (int h = 0; h < 2; ++h) {
        const double v = metrics_srcc_or_zero(val.per_head[std::size_t(h)], usable_mos);
        if (v > best_srcc) {
            best_srcc = v;
            best = h;
        }
    }
    CHECK(best == r1.checkpoint.best_head());

    // history CSV structure
    training::write_history_csv(r1.history, dir / "hist.csv");
    auto hist = read_file(dir / "hist.csv");
    CHECK(hist.rfind("epoch,step_loss,val_srcc_head0,val_srcc_head1\n", 0) == 0);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 6); // header + 5 epochs
    fs::remove_all(dir);
}

TEST_CASE("single-head training reduces to one loss term") {
    auto dir = temp_dir("single");
    data::SyntheticSpec spec;
    spec.num_refs = 3;
    spec.image_size = 48;
    spec.seed = 31;
    auto manifest = data::generate_synthetic(spec, dir);
    auto [train_m, val_m] = data::split(manifest, 0.7, 0);

    auto registry = aug::make_registry("one", {{"c32", std::nullopt, 32, 0}});
    training::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    auto result = training::train(registry, net::BackboneConfig{4, 2, 8}, {}, cfg, train_m, val_m);
    CHECK(result.checkpoint.best_head() == 0);
    CHECK(result.history[0].val_srcc.size() == 1);
    fs::remove_all(dir);
}

TEST_CASE("diverging training aborts with a numeric failure") {
    auto dir = temp_dir("diverge");
    data::SyntheticSpec spec;
    spec.num_refs = 3;
    spec.image_size = 48;
    spec.seed = 41;
    auto manifest = data::generate_synthetic(spec, dir);
    auto [train_m, val_m] = data::split(manifest, 0.7, 0);

    auto registry = aug::make_registry("one", {{"c32", std::nullopt, 32, 0}});
    training::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.lr = 1e22; // drives the parameters out of float range
    CHECK_THROWS_AS(training::train(registry, net::BackboneConfig{4, 2, 8}, {}, cfg, train_m, val_m),
                    NumericFailure);
    fs::remove_all(dir);
}

TEST_CASE("train validates its configuration") {
    data::Manifest empty;
    training::TrainConfig bad;
    bad.batch_size = 1;
    CHECK_THROWS_AS(
        training::train(aug::builtin_registry("baseline"), {}, {}, bad, empty, empty),
        ContractViolation);
}
