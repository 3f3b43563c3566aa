#include "zoomiq/image.hpp"

#include <algorithm>
#include <cmath>

namespace zoomiq::img {

ImageF32 to_f32(const ImageU8& u8) {
    ImageF32 out(u8.height, u8.width);
    const float inv = 1.0f / 255.0f;
    for (int c = 0; c < 3; ++c) {
        float* p = out.plane(c);
        for (int y = 0; y < u8.height; ++y)
            for (int x = 0; x < u8.width; ++x)
                p[std::size_t(y) * u8.width + x] = float(u8.at(y, x, c)) * inv;
    }
    return out;
}

ImageU8 to_u8(const ImageF32& f) {
    ImageU8 out;
    out.height = f.height;
    out.width = f.width;
    out.pixels.resize(std::size_t(3) * f.height * f.width);
    for (int c = 0; c < 3; ++c) {
        const float* p = f.plane(c);
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x) {
                const float v = std::clamp(p[std::size_t(y) * f.width + x], 0.0f, 1.0f);
                out.at(y, x, c) = std::uint8_t(std::lround(double(v) * 255.0));
            }
    }
    return out;
}

ImageF32 resize_to(const ImageF32& src, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ContractViolation("resize_to: output dimension < 1");
    if (src.empty()) throw ContractViolation("resize_to: empty image");
    if (out_h == src.height && out_w == src.width) return src;

    ImageF32 out(out_h, out_w);
    const double sy_scale = double(src.height) / double(out_h);
    const double sx_scale = double(src.width) / double(out_w);

    const std::size_t nw = std::size_t(out_w);
    std::vector<int> x0(nw), x1(nw);
    std::vector<double> fx(nw);
    for (int x = 0; x < out_w; ++x) {
        double sx = (double(x) + 0.5) * sx_scale - 0.5;
        sx = std::clamp(sx, 0.0, double(src.width - 1));
        x0[std::size_t(x)] = int(sx);
        x1[std::size_t(x)] = std::min(x0[std::size_t(x)] + 1, src.width - 1);
        fx[std::size_t(x)] = sx - double(x0[std::size_t(x)]);
    }

    for (int c = 0; c < 3; ++c) {
        const float* sp = src.plane(c);
        float* dp = out.plane(c);
        for (int y = 0; y < out_h; ++y) {
            double sy = (double(y) + 0.5) * sy_scale - 0.5;
            sy = std::clamp(sy, 0.0, double(src.height - 1));
            const int y0 = int(sy);
            const int y1 = std::min(y0 + 1, src.height - 1);
            const double fy = sy - double(y0);
            const float* r0 = sp + std::size_t(y0) * src.width;
            const float* r1 = sp + std::size_t(y1) * src.width;
            float* drow = dp + std::size_t(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const double a = double(r0[x0[std::size_t(x)]]);
                const double b = double(r0[x1[std::size_t(x)]]);
                const double cc = double(r1[x0[std::size_t(x)]]);
                const double d = double(r1[x1[std::size_t(x)]]);
                const double top = a + fx[std::size_t(x)] * (b - a);
                const double bot = cc + fx[std::size_t(x)] * (d - cc);
                drow[x] = float(top + fy * (bot - top));
            }
        }
    }
    return out;
}

ImageF32 resize_short_side(const ImageF32& src, int target) {
    if (target < 1) throw ContractViolation("resize_short_side: target < 1");
    int out_h, out_w;
    if (src.height <= src.width) {
        out_h = target;
        out_w = int(std::lround(double(src.width) * double(target) / double(src.height)));
    } else {
        out_w = target;
        out_h = int(std::lround(double(src.height) * double(target) / double(src.width)));
    }
    return resize_to(src, out_h, out_w);
}

ImageF32 scale_by_factor(const ImageF32& src, double s) {
    if (!(s > 0)) throw ContractViolation("scale_by_factor: scale must be positive");
    const int out_h = int(std::lround(double(src.height) * s));
    const int out_w = int(std::lround(double(src.width) * s));
    if (out_h < 1 || out_w < 1) throw ContractViolation("scale_by_factor: resulting dimension < 1");
    return resize_to(src, out_h, out_w);
}

ImageF32 crop(const ImageF32& src, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > src.width || y + h > src.height)
        throw ContractViolation("crop: rectangle out of bounds");
    ImageF32 out(h, w);
    for (int c = 0; c < 3; ++c) {
        const float* sp = src.plane(c);
        float* dp = out.plane(c);
        for (int r = 0; r < h; ++r)
            std::copy_n(sp + std::size_t(y + r) * src.width + x, w, dp + std::size_t(r) * w);
    }
    return out;
}

ImageF32 transpose_image(const ImageF32& src) {
    ImageF32 out(src.width, src.height);
    for (int c = 0; c < 3; ++c) {
        const float* sp = src.plane(c);
        float* dp = out.plane(c);
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x)
                dp[std::size_t(x) * src.height + y] = sp[std::size_t(y) * src.width + x];
    }
    return out;
}

ImageF32 hflip(const ImageF32& src) {
    ImageF32 out(src.height, src.width);
    for (int c = 0; c < 3; ++c) {
        const float* sp = src.plane(c);
        float* dp = out.plane(c);
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x)
                dp[std::size_t(y) * src.width + x] = sp[std::size_t(y) * src.width + (src.width - 1 - x)];
    }
    return out;
}

} // namespace zoomiq::img
