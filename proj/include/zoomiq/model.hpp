#pragma once

#include <string>
#include <utility>
#include <vector>

#include "zoomiq/adam.hpp"
#include "zoomiq/ops.hpp"
#include "zoomiq/rng.hpp"
#include "zoomiq/tensor.hpp"

namespace zoomiq::net {

// Backbone layout: stem 3x3 stride-2 conv, then num_blocks of
// depthwise 3x3 stride-2 + pointwise 1x1 + relu. Channels double per block;
// the final pointwise width is embed_dim, which fixes the embedding size.
struct BackboneConfig {
    int stem_channels = 16;
    int num_blocks = 4;
    int embed_dim = 128;
};

inline constexpr int kHeadHiddenWidth = 512; // fixed, not configurable
inline constexpr int kMinInputSide = 32;

// Shared convolutional backbone plus one two-layer regression head per zoom
// level. Template parameter selects float (training) or double (gradient
// checks); both share this code path.
template <typename T>
struct ModelT {
    struct Block {
        nd::TensorPtr<T> dw_weight, dw_bias, pw_weight, pw_bias;
    };
    struct Head {
        nd::TensorPtr<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;
    };

    BackboneConfig cfg;
    nd::TensorPtr<T> stem_weight, stem_bias;
    std::vector<Block> blocks;
    std::vector<Head> heads;

    int num_heads() const { return int(heads.size()); }

    int block_out_channels(int k) const {
        int ch = cfg.stem_channels;
        for (int i = 0; i <= k; ++i) ch = (i == cfg.num_blocks - 1) ? cfg.embed_dim : ch * 2;
        return ch;
    }

    // Stable enumeration order; checkpoint layout follows it.
    std::vector<std::pair<std::string, nd::TensorPtr<T>>> named_parameters() const {
        std::vector<std::pair<std::string, nd::TensorPtr<T>>> out;
        out.emplace_back("stem.weight", stem_weight);
        out.emplace_back("stem.bias", stem_bias);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string p = "block" + std::to_string(b) + ".";
            out.emplace_back(p + "dw.weight", blocks[b].dw_weight);
            out.emplace_back(p + "dw.bias", blocks[b].dw_bias);
            out.emplace_back(p + "pw.weight", blocks[b].pw_weight);
            out.emplace_back(p + "pw.bias", blocks[b].pw_bias);
        }
        for (std::size_t h = 0; h < heads.size(); ++h) {
            const std::string p = "head" + std::to_string(h) + ".";
            out.emplace_back(p + "fc1.weight", heads[h].fc1_weight);
            out.emplace_back(p + "fc1.bias", heads[h].fc1_bias);
            out.emplace_back(p + "fc2.weight", heads[h].fc2_weight);
            out.emplace_back(p + "fc2.bias", heads[h].fc2_bias);
        }
        return out;
    }

    std::vector<nd::TensorPtr<T>> parameters() const {
        std::vector<nd::TensorPtr<T>> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& p : parameters()) n += p->numel();
        return n;
    }

    void zero_grad() const {
        for (const auto& p : parameters()) p->zero_grad();
    }

    // x: [B,3,H,W] with H,W >= 32 -> [B,E]
    nd::TensorPtr<T> forward_features(nd::Tape<T>* tape, const nd::TensorPtr<T>& x) const {
        if (x->rank() != 4 || x->dim(1) != 3)
            throw ContractViolation("forward_features: expected [B,3,H,W] input");
        if (x->dim(2) < kMinInputSide || x->dim(3) < kMinInputSide)
            throw ContractViolation("forward_features: input sides must be >= " +
                                    std::to_string(kMinInputSide));
        auto h = nd::relu(tape, nd::conv2d(tape, x, stem_weight, stem_bias, 2, 1, 1));
        for (const auto& blk : blocks) {
            const int ch = h->dim(1);
            h = nd::conv2d(tape, h, blk.dw_weight, blk.dw_bias, 2, 1, ch);
            h = nd::relu(tape, nd::conv2d(tape, h, blk.pw_weight, blk.pw_bias, 1, 0, 1));
        }
        return nd::global_avg_pool(tape, h);
    }

    // embedding: [B,E] -> [B] quality scores in normalized-MOS units
    nd::TensorPtr<T> forward_head(nd::Tape<T>* tape, const nd::TensorPtr<T>& embedding,
                                  int head_index) const {
        if (head_index < 0 || head_index >= num_heads())
            throw ContractViolation("forward_head: head index " + std::to_string(head_index) +
                                    " out of range (heads: " + std::to_string(num_heads()) + ")");
        const auto& head = heads[std::size_t(head_index)];
        auto h = nd::relu(tape, nd::linear(tape, embedding, head.fc1_weight, head.fc1_bias));
        auto out = nd::linear(tape, h, head.fc2_weight, head.fc2_bias); // [B,1]
        return nd::reshape(tape, out, {out->dim(0)});
    }

    nd::TensorPtr<T> forward(nd::Tape<T>* tape, const nd::TensorPtr<T>& x, int head_index) const {
        return forward_head(tape, forward_features(tape, x), head_index);
    }

    template <typename U>
    ModelT<U> cast() const {
        ModelT<U> out;
        out.cfg = cfg;
        auto conv = [](const nd::TensorPtr<T>& t) {
            std::vector<U> v(t->values.begin(), t->values.end());
            return nd::TensorT<U>::from(t->shape, std::move(v), t->requires_grad);
        };
        out.stem_weight = conv(stem_weight);
        out.stem_bias = conv(stem_bias);
        for (const auto& b : blocks)
            out.blocks.push_back({conv(b.dw_weight), conv(b.dw_bias), conv(b.pw_weight), conv(b.pw_bias)});
        for (const auto& h : heads)
            out.heads.push_back({conv(h.fc1_weight), conv(h.fc1_bias), conv(h.fc2_weight), conv(h.fc2_bias)});
        return out;
    }
};

using Model = ModelT<float>;

// He fan-in normal init, zero biases. Draws happen in double in a fixed
// order, so the float and double instantiations of one seed agree up to
// rounding.
template <typename T>
ModelT<T> init_model(const BackboneConfig& cfg, int num_heads, std::uint64_t seed) {
    if (num_heads < 1) throw ContractViolation("init_model: need at least one head");
    if (cfg.stem_channels < 1 || cfg.num_blocks < 1 || cfg.embed_dim < 1)
        throw ContractViolation("init_model: invalid backbone configuration");

    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    auto he = [&rng](std::vector<int> shape, int fan_in) {
        std::size_t n = 1;
        for (int d : shape) n *= std::size_t(d);
        const double stdev = std::sqrt(2.0 / double(fan_in));
        std::vector<T> v(n);
        for (auto& x : v) x = T(rng.normal() * stdev);
        return nd::TensorT<T>::from(std::move(shape), std::move(v), true);
    };
    auto zeros = [](int n) { return nd::TensorT<T>::zeros({n}, true); };

    ModelT<T> m;
    m.cfg = cfg;
    m.stem_weight = he({cfg.stem_channels, 3, 3, 3}, 3 * 9);
    m.stem_bias = zeros(cfg.stem_channels);
    int ch = cfg.stem_channels;
    for (int b = 0; b < cfg.num_blocks; ++b) {
        const int out_ch = (b == cfg.num_blocks - 1) ? cfg.embed_dim : ch * 2;
        typename ModelT<T>::Block blk;
        blk.dw_weight = he({ch, 1, 3, 3}, 9);
        blk.dw_bias = zeros(ch);
        blk.pw_weight = he({out_ch, ch, 1, 1}, ch);
        blk.pw_bias = zeros(out_ch);
        m.blocks.push_back(std::move(blk));
        ch = out_ch;
    }
    for (int h = 0; h < num_heads; ++h) {
        typename ModelT<T>::Head head;
        head.fc1_weight = he({kHeadHiddenWidth, cfg.embed_dim}, cfg.embed_dim);
        head.fc1_bias = zeros(kHeadHiddenWidth);
        head.fc2_weight = he({1, kHeadHiddenWidth}, kHeadHiddenWidth);
        head.fc2_bias = zeros(1);
        m.heads.push_back(std::move(head));
    }
    return m;
}

} // namespace zoomiq::net
