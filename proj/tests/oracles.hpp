#pragma once

// Test-side reference implementations, kept deliberately independent of the
// library's compute paths: straightforward loops, no packing, no fusion.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "xlsr/rng.hpp"
#include "xlsr/tensor.hpp"

namespace oracle {

// Direct dense 2-D convolution, stride 1, zero "same" padding, no groups.
// Weights in the library layout (oc, ky, kx, ic).
template <typename T>
xlsr::TensorT<T> dense_conv2d(const xlsr::TensorT<T>& in, int kh, int kw,
                              std::span<const T> w, std::span<const T> b) {
    const int N = in.n(), H = in.h(), W = in.w(), C = in.c();
    const int OC = static_cast<int>(b.size());
    const int pad_t = (kh - 1) / 2, pad_l = (kw - 1) / 2;
    xlsr::TensorT<T> out(N, H, W, OC);
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < H; ++oy)
            for (int ox = 0; ox < W; ++ox)
                for (int oc = 0; oc < OC; ++oc) {
                    T acc = b[oc];
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy + ky - pad_t;
                            const int ix = ox + kx - pad_l;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            for (int ic = 0; ic < C; ++ic)
                                acc += in.at(n, iy, ix, ic) *
                                       w[((static_cast<size_t>(oc) * kh + ky) * kw + kx) * C + ic];
                        }
                    out.at(n, oy, ox, oc) = acc;
                }
    return out;
}

// Grouped convolution expressed as g independent dense convolutions on
// channel blocks, concatenated. This is the block-diagonal definition.
template <typename T>
xlsr::TensorT<T> grouped_conv_via_split(const xlsr::TensorT<T>& in, const xlsr::ConvSpec& spec,
                                        std::span<const T> w, std::span<const T> b) {
    const int G = spec.groups, ICg = spec.group_in(), OCg = spec.group_out();
    xlsr::TensorT<T> out(in.n(), in.h(), in.w(), spec.out_channels);
    for (int g = 0; g < G; ++g) {
        xlsr::TensorT<T> slice(in.n(), in.h(), in.w(), ICg);
        for (int n = 0; n < in.n(); ++n)
            for (int y = 0; y < in.h(); ++y)
                for (int x = 0; x < in.w(); ++x)
                    for (int c = 0; c < ICg; ++c)
                        slice.at(n, y, x, c) = in.at(n, y, x, g * ICg + c);
        const size_t wg = static_cast<size_t>(OCg) * spec.kernel_h * spec.kernel_w * ICg;
        std::vector<T> ws(w.begin() + g * wg, w.begin() + (g + 1) * wg);
        std::vector<T> bs(b.begin() + g * OCg, b.begin() + (g + 1) * OCg);
        auto part = dense_conv2d<T>(slice, spec.kernel_h, spec.kernel_w, ws, bs);
        for (int n = 0; n < in.n(); ++n)
            for (int y = 0; y < in.h(); ++y)
                for (int x = 0; x < in.w(); ++x)
                    for (int c = 0; c < OCg; ++c)
                        out.at(n, y, x, g * OCg + c) = part.at(n, y, x, c);
    }
    return out;
}

inline std::vector<double> random_vec(xlsr::Rng& rng, size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

inline xlsr::Tensor64 random_tensor(xlsr::Rng& rng, int n, int h, int w, int c,
                                    double scale = 1.0) {
    return xlsr::Tensor64(n, h, w, c, random_vec(rng, static_cast<size_t>(n) * h * w * c, scale));
}

// Central finite difference of a scalar function along direction v,
// compared against the analytic directional derivative dot(grad, v).
struct DirectionalCheck {
    double fd = 0.0;
    double analytic = 0.0;
    double rel_error() const {
        const double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic)});
        return std::fabs(fd - analytic) / denom;
    }
};

inline DirectionalCheck directional_check(const std::function<double(std::span<const double>)>& f,
                                          std::span<const double> x,
                                          std::span<const double> grad,
                                          std::span<const double> v, double h = 1e-6) {
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    for (size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * v[i];
        xm[i] -= h * v[i];
    }
    DirectionalCheck r;
    r.fd = (f(xp) - f(xm)) / (2.0 * h);
    for (size_t i = 0; i < x.size(); ++i) r.analytic += grad[i] * v[i];
    return r;
}

// Mean squared error summed one pixel at a time; used to cross-check PSNR.
inline double mse_reference(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return sum / static_cast<double>(a.size());
}

}  // namespace oracle
