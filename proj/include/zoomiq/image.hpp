#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "zoomiq/tensor.hpp"

namespace zoomiq::img {

// Interleaved 8-bit sRGB, row-major.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels; // height * width * 3

    std::uint8_t& at(int y, int x, int c) { return pixels[(std::size_t(y) * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return pixels[(std::size_t(y) * width + x) * 3 + c]; }
};

// Planar 3xHxW float image, values nominally in [0,1].
struct ImageF32 {
    int height = 0;
    int width = 0;
    std::vector<float> data; // 3 * height * width, channel-major

    ImageF32() = default;
    ImageF32(int h, int w) : height(h), width(w), data(std::size_t(3) * h * w, 0.f) {}

    float& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
    const float* plane(int c) const { return data.data() + std::size_t(c) * height * width; }
    float* plane(int c) { return data.data() + std::size_t(c) * height * width; }
    bool empty() const { return data.empty(); }
};

ImageF32 to_f32(const ImageU8& u8);          // v / 255
ImageU8 to_u8(const ImageF32& f);            // round(clamp(v, 0, 1) * 255)

// Bilinear resample to an explicit size. Source coordinates use half-pixel
// centers, (dest + 0.5) * scale - 0.5, clamped to the edge. Same-size output
// is bit-identical to the input.
ImageF32 resize_to(const ImageF32& src, int out_h, int out_w);

// Shorter side becomes target; the longer side scales by round(long * target / short).
ImageF32 resize_short_side(const ImageF32& src, int target);

// Both dimensions scale by round(dim * s); a resulting dimension < 1 is a
// contract violation. s = 1 is the identity.
ImageF32 scale_by_factor(const ImageF32& src, double s);

ImageF32 crop(const ImageF32& src, int x, int y, int w, int h);

ImageF32 transpose_image(const ImageF32& src); // out[x, y] = in[y, x]
ImageF32 hflip(const ImageF32& src);           // reverse each row

// (v - mean[c]) / std[c] into a [3,H,W] tensor.
template <typename T>
nd::TensorPtr<T> normalize(const ImageF32& src, const std::array<double, 3>& mean = {0.5, 0.5, 0.5},
                           const std::array<double, 3>& stdev = {0.5, 0.5, 0.5}) {
    for (double s : stdev)
        if (!(s > 0)) throw ContractViolation("normalize: std must be positive");
    std::vector<T> out(src.data.size());
    const std::size_t hw = std::size_t(src.height) * src.width;
    for (int c = 0; c < 3; ++c) {
        const float* p = src.plane(c);
        const T m = T(mean[std::size_t(c)]);
        const T inv = T(1.0 / stdev[std::size_t(c)]);
        for (std::size_t i = 0; i < hw; ++i) out[std::size_t(c) * hw + i] = (T(p[i]) - m) * inv;
    }
    return nd::TensorT<T>::from({3, src.height, src.width}, std::move(out));
}

template <typename T>
ImageF32 denormalize(const nd::TensorPtr<T>& t, const std::array<double, 3>& mean = {0.5, 0.5, 0.5},
                     const std::array<double, 3>& stdev = {0.5, 0.5, 0.5}) {
    if (t->rank() != 3 || t->dim(0) != 3) throw ContractViolation("denormalize: expected [3,H,W] tensor");
    ImageF32 out(t->dim(1), t->dim(2));
    const std::size_t hw = std::size_t(out.height) * out.width;
    for (int c = 0; c < 3; ++c) {
        float* p = out.plane(c);
        for (std::size_t i = 0; i < hw; ++i)
            p[i] = float(double(t->values[std::size_t(c) * hw + i]) * stdev[std::size_t(c)] +
                         mean[std::size_t(c)]);
    }
    return out;
}

} // namespace zoomiq::img
