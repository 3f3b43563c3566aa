#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "zoomiq/model.hpp"
#include "zoomiq/rng.hpp"

using namespace zoomiq;
using net::BackboneConfig;
using net::Model;

namespace {

nd::TensorF random_input(int b, int side, Rng& rng) {
    std::vector<float> v(std::size_t(b) * 3 * side * side);
    for (auto& x : v) x = float(rng.uniform() * 2 - 1);
    return nd::Tensor::from({b, 3, side, side}, std::move(v));
}

BackboneConfig tiny_cfg() { return BackboneConfig{4, 2, 8}; }

} // namespace

TEST_CASE("init is deterministic per seed") {
    auto a = net::init_model<float>(tiny_cfg(), 2, 7);
    auto b = net::init_model<float>(tiny_cfg(), 2, 7);
    auto c = net::init_model<float>(tiny_cfg(), 2, 8);
    auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff_seed = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second->values == pb[i].second->values);
        if (pa[i].second->values != pc[i].second->values) any_diff_seed = true;
    }
    CHECK(any_diff_seed);
}

TEST_CASE("heads hold disjoint parameter groups") {
    auto m = net::init_model<float>(tiny_cfg(), 3, 1);
    REQUIRE(m.num_heads() == 3);
    CHECK(m.heads[0].fc1_weight->values != m.heads[1].fc1_weight->values);
    CHECK(m.heads[1].fc1_weight->values != m.heads[2].fc1_weight->values);
    CHECK(m.heads[0].fc1_weight.get() != m.heads[1].fc1_weight.get());
}

TEST_CASE("parameter count matches the closed-form formula") {
    auto count_for = [](const BackboneConfig& cfg, int heads) {
        std::int64_t n = std::int64_t(cfg.stem_channels) * 3 * 9 + cfg.stem_channels; // stem
        int ch = cfg.stem_channels;
        for (int b = 0; b < cfg.num_blocks; ++b) {
            const int out = (b == cfg.num_blocks - 1) ? cfg.embed_dim : ch * 2;
            n += std::int64_t(ch) * 9 + ch;            // depthwise
            n += std::int64_t(out) * ch + out;         // pointwise
            ch = out;
        }
        n += std::int64_t(heads) *
             (std::int64_t(net::kHeadHiddenWidth) * cfg.embed_dim + net::kHeadHiddenWidth +
              net::kHeadHiddenWidth + 1);
        return n;
    };

    BackboneConfig def; // stem 16, blocks 4, embed 128
    auto m = net::init_model<float>(def, 4, 0);
    CHECK(m.parameter_count() == count_for(def, 4));

    auto t = net::init_model<float>(tiny_cfg(), 2, 0);
    CHECK(t.parameter_count() == count_for(tiny_cfg(), 2));
}

TEST_CASE("embedding width is embed_dim for any input size") {
    BackboneConfig def;
    auto m = net::init_model<float>(def, 1, 3);
    Rng rng(5);
    for (int side : {224, 384}) {
        auto x = random_input(1, side, rng);
        auto f = m.forward_features(nullptr, x);
        CHECK(f->shape == std::vector<int>({1, def.embed_dim}));
    }
}

TEST_CASE("zero input with zero biases gives a zero embedding and score") {
    auto m = net::init_model<float>(tiny_cfg(), 1, 9); // biases start at zero
    auto x = nd::Tensor::zeros({1, 3, 64, 64});
    auto f = m.forward_features(nullptr, x);
    for (float v : f->values) CHECK(v == 0.f);
    auto score = m.forward_head(nullptr, f, 0);
    CHECK(score->values[0] == 0.f);
}

TEST_CASE("batch rows are independent") {
    auto m = net::init_model<float>(tiny_cfg(), 1, 11);
    Rng rng(6);
    auto x = random_input(1, 48, rng);
    std::vector<float> doubled = x->values;
    doubled.insert(doubled.end(), x->values.begin(), x->values.end());
    auto xx = nd::Tensor::from({2, 3, 48, 48}, std::move(doubled));

    auto f1 = m.forward_features(nullptr, x);
    auto f2 = m.forward_features(nullptr, xx);
    const std::size_t e = f1->values.size();
    for (std::size_t i = 0; i < e; ++i) {
        CHECK(f2->values[i] == f1->values[i]);
        CHECK(f2->values[e + i] == f1->values[i]);
    }
}

TEST_CASE("permuting the batch permutes the outputs identically") {
    auto m = net::init_model<float>(tiny_cfg(), 1, 13);
    Rng rng(7);
    const int B = 4, side = 40;
    auto x = random_input(B, side, rng);
    const std::size_t stride = std::size_t(3) * side * side;

    std::vector<int> perm{2, 0, 3, 1};
    std::vector<float> pv(x->values.size());
    for (int b = 0; b < B; ++b)
        std::copy_n(x->values.begin() + std::ptrdiff_t(std::size_t(perm[std::size_t(b)]) * stride),
                    stride, pv.begin() + std::ptrdiff_t(std::size_t(b) * stride));
    auto xp = nd::Tensor::from({B, 3, side, side}, std::move(pv));

    auto f = m.forward_features(nullptr, x);
    auto fp = m.forward_features(nullptr, xp);
    const int E = f->dim(1);
    for (int b = 0; b < B; ++b)
        for (int e = 0; e < E; ++e)
            CHECK(fp->values[std::size_t(b) * E + e] ==
                  f->values[std::size_t(perm[std::size_t(b)]) * E + e]);
}

TEST_CASE("each head depends only on its own parameters") {
    auto m = net::init_model<float>(tiny_cfg(), 2, 17);
    Rng rng(8);
    auto x = random_input(2, 48, rng);
    auto emb = m.forward_features(nullptr, x);
    auto head0_before = m.forward_head(nullptr, emb, 0);

    for (auto& v : m.heads[1].fc1_weight->values) v += 0.25f;
    m.heads[1].fc2_bias->values[0] = 3.f;
    auto head0_after = m.forward_head(nullptr, emb, 0);
    CHECK(head0_before->values == head0_after->values);

    auto h0 = m.forward_head(nullptr, emb, 0);
    auto h1 = m.forward_head(nullptr, emb, 1);
    CHECK(h0->values != h1->values);
}

TEST_CASE("head scores are deterministic") {
    auto m = net::init_model<float>(tiny_cfg(), 2, 19);
    Rng rng(9);
    auto x = random_input(3, 56, rng);
    auto a = m.forward(nullptr, x, 1);
    auto b = m.forward(nullptr, x, 1);
    CHECK(a->values == b->values);
    REQUIRE(a->shape == std::vector<int>({3}));
}

TEST_CASE("contract violations") {
    auto m = net::init_model<float>(tiny_cfg(), 1, 21);
    Rng rng(10);
    CHECK_THROWS_AS(m.forward_features(nullptr, random_input(1, 16, rng)), ContractViolation);
    auto emb = m.forward_features(nullptr, random_input(1, 48, rng));
    CHECK_THROWS_AS(m.forward_head(nullptr, emb, 1), ContractViolation);
    CHECK_THROWS_AS(m.forward_head(nullptr, emb, -1), ContractViolation);
    CHECK_THROWS_AS(net::init_model<float>(tiny_cfg(), 0, 1), ContractViolation);
}
