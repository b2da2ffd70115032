#include "xlsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace xlsr {

void ConvSpec::validate() const {
    if (kernel_h <= 0 || kernel_w <= 0)
        throw std::invalid_argument("conv: kernel dims must be positive");
    if (in_channels <= 0 || out_channels <= 0)
        throw std::invalid_argument("conv: channel counts must be positive");
    if (groups <= 0)
        throw std::invalid_argument("conv: groups must be positive");
    if (in_channels % groups != 0 || out_channels % groups != 0)
        throw std::invalid_argument("conv: groups must divide in_channels and out_channels");
}

template <typename T>
bool TensorT<T>::all_finite() const {
    for (const T& v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

void check_conv_args(const ConvSpec& spec, int input_c, size_t w_len, size_t b_len) {
    spec.validate();
    if (input_c != spec.in_channels)
        throw std::invalid_argument("conv: input has " + std::to_string(input_c) +
                                    " channels, spec expects " + std::to_string(spec.in_channels));
    if (w_len != spec.weight_count())
        throw std::invalid_argument("conv: weight length " + std::to_string(w_len) +
                                    " does not match spec (" + std::to_string(spec.weight_count()) + ")");
    if (b_len != SIZE_MAX && b_len != spec.bias_count())
        throw std::invalid_argument("conv: bias length mismatch");
}

// All convolution work runs on a channel-planar copy of the sample: one
// zero-padded plane per channel. Output positions use the padded row pitch,
// so a tap (ky, kx) is a constant offset and the inner loops are contiguous
// row arithmetic regardless of how narrow the channel groups are.
template <typename T>
struct Planes {
    std::vector<T> data;
    int hp = 0, wp = 0;          // plane dims including padding
    int pad_t = 0, pad_l = 0;
    size_t pitch() const { return static_cast<size_t>(hp) * wp; }
    const T* plane(int c) const { return data.data() + static_cast<size_t>(c) * pitch(); }
    // first valid interior position in flat padded coordinates
    size_t origin() const { return static_cast<size_t>(pad_t) * wp + pad_l; }
};

template <typename T>
Planes<T> make_planes(const T* in, int H, int W, int C, int pad_t, int pad_b, int pad_l,
                      int pad_r) {
    Planes<T> p;
    p.hp = H + pad_t + pad_b;
    p.wp = W + pad_l + pad_r;
    p.pad_t = pad_t;
    p.pad_l = pad_l;
    // trailing slack lets the segment loop run full vector strides past the
    // last valid position; those outputs are computed and discarded
    p.data.assign(static_cast<size_t>(C) * p.hp * p.wp + 128, T(0));
    for (int c = 0; c < C; ++c) {
        T* plane = p.data.data() + static_cast<size_t>(c) * p.pitch();
        for (int y = 0; y < H; ++y) {
            const T* src = in + static_cast<size_t>(y) * W * C + c;
            T* dst = plane + (static_cast<size_t>(y) + pad_t) * p.wp + pad_l;
            for (int x = 0; x < W; ++x) dst[x] = src[static_cast<size_t>(x) * C];
        }
    }
    return p;
}

// One output plane: acc registers persist across the whole (ky, kx, ic) tap
// loop while the weight is a scalar broadcast. Positions run over the padded
// pitch, so a few between-row values are computed and thrown away.
template <typename T, int S>
void conv_plane_segments(const T* planes, size_t pitch, int wp, int icbase, int ICg, int KH,
                         int KW, const T* w, T bias, T* oplane, size_t from, size_t to) {
    for (size_t i = from; i + S <= to; i += S) {
        T acc[S];
        for (int j = 0; j < S; ++j) acc[j] = bias;
        const T* wk = w;
        for (int ky = 0; ky < KH; ++ky)
            for (int kx = 0; kx < KW; ++kx) {
                const size_t off = static_cast<size_t>(ky) * wp + kx + i;
                for (int ic = 0; ic < ICg; ++ic) {
                    const T wv = *wk++;
                    const T* ip = planes + static_cast<size_t>(icbase + ic) * pitch + off;
                    for (int j = 0; j < S; ++j) acc[j] += wv * ip[j];
                }
            }
        for (int j = 0; j < S; ++j) oplane[i + j] = acc[j];
    }
}

inline size_t round_up64(size_t n) { return (n + 15) & ~size_t(15); }

template <typename T>
void conv_plane_flat(const T* planes, size_t pitch, int wp, int icbase, int ICg, int KH, int KW,
                     const T* w, T bias, T* oplane, size_t flat_len) {
    conv_plane_segments<T, 16>(planes, pitch, wp, icbase, ICg, KH, KW, w, bias, oplane, 0,
                               round_up64(flat_len));
}

// Full conv of one sample from channel planes into an NHWC destination.
// Weights in the natural (oc, ky, kx, ic/g) layout.
template <typename T>
void conv_sample(const Planes<T>& in, const T* weights, const T* bias, T* out, int H, int W,
                 int Cout, int OCg, int ICg, int KH, int KW, std::vector<T>& oplane) {
    const size_t flat_len = static_cast<size_t>(H - 1) * in.wp + W;
    oplane.resize(round_up64(flat_len));
    for (int oc = 0; oc < Cout; ++oc) {
        const int g = oc / OCg;
        conv_plane_flat<T>(in.data.data(), in.pitch(), in.wp, g * ICg, ICg, KH, KW,
                           weights + static_cast<size_t>(oc) * KH * KW * ICg, bias[oc],
                           oplane.data(), flat_len);
        T* dst = out + oc;
        for (int y = 0; y < H; ++y) {
            const T* src = oplane.data() + static_cast<size_t>(y) * in.wp;
            for (int x = 0; x < W; ++x) dst[static_cast<size_t>(y * W + x) * Cout] = src[x];
        }
    }
}

// One (oc, ky, kx) tap row for a compile-time chunk of input channels:
// lane-wise dot products between the upstream plane and shifted input
// planes, reduced in a fixed order at the end.
template <typename T, int ICC>
void wgrad_chunk(const T* uplane, int up_wp, const T* const* iplanes, int in_wp, int H, int W,
                 T* dst) {
    constexpr int S = 16;
    T lanes[ICC][S] = {};
    T tails[ICC] = {};
    const int Wfull = W - W % S;
    for (int y = 0; y < H; ++y) {
        const T* u = uplane + static_cast<size_t>(y) * up_wp;
        int x = 0;
        for (; x < Wfull; x += S)
            for (int c = 0; c < ICC; ++c) {
                const T* ip = iplanes[c] + static_cast<size_t>(y) * in_wp + x;
                for (int j = 0; j < S; ++j) lanes[c][j] += u[x + j] * ip[j];
            }
        for (; x < W; ++x)
            for (int c = 0; c < ICC; ++c)
                tails[c] += u[x] * iplanes[c][static_cast<size_t>(y) * in_wp + x];
    }
    for (int c = 0; c < ICC; ++c) {
        T s = tails[c];
        for (int j = 0; j < S; ++j) s += lanes[c][j];
        dst[c] += s;
    }
}

template <typename T>
void wgrad_chunk_dispatch(int icc, const T* uplane, int up_wp, const T* const* iplanes,
                          int in_wp, int H, int W, T* dst) {
    switch (icc) {
        case 1: wgrad_chunk<T, 1>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        case 2: wgrad_chunk<T, 2>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        case 3: wgrad_chunk<T, 3>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        case 4: wgrad_chunk<T, 4>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        case 5: wgrad_chunk<T, 5>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        case 6: wgrad_chunk<T, 6>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        case 7: wgrad_chunk<T, 7>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
        default: wgrad_chunk<T, 8>(uplane, up_wp, iplanes, in_wp, H, W, dst); break;
    }
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const ConvSpec& spec,
                  std::span<const T> weights, std::span<const T> bias) {
    check_conv_args(spec, input.c(), weights.size(), bias.size());

    const int N = input.n(), H = input.h(), W = input.w();
    const int ICg = spec.group_in(), OCg = spec.group_out();
    const int KH = spec.kernel_h, KW = spec.kernel_w;
    const int Cin = spec.in_channels, Cout = spec.out_channels;
    const int pad_t = (KH - 1) / 2, pad_l = (KW - 1) / 2;

    TensorT<T> out(N, H, W, Cout);
    std::vector<T> oplane;
    for (int n = 0; n < N; ++n) {
        const T* in = input.data() + static_cast<size_t>(n) * H * W * Cin;
        T* o = out.data() + static_cast<size_t>(n) * H * W * Cout;
        auto planes =
            make_planes(in, H, W, Cin, pad_t, KH - 1 - pad_t, pad_l, KW - 1 - pad_l);
        conv_sample<T>(planes, weights.data(), bias.data(), o, H, W, Cout, OCg, ICg, KH, KW,
                       oplane);
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_grad(const TensorT<T>& input, const ConvSpec& spec,
                         std::span<const T> weights, const TensorT<T>& upstream) {
    check_conv_args(spec, input.c(), weights.size(), SIZE_MAX);
    if (upstream.n() != input.n() || upstream.h() != input.h() ||
        upstream.w() != input.w() || upstream.c() != spec.out_channels)
        throw std::invalid_argument("conv_grad: upstream shape does not match forward output");

    const int N = input.n(), H = input.h(), W = input.w();
    const int G = spec.groups, ICg = spec.group_in(), OCg = spec.group_out();
    const int KH = spec.kernel_h, KW = spec.kernel_w;
    const int Cin = spec.in_channels, Cout = spec.out_channels;
    const int pad_t = (KH - 1) / 2, pad_l = (KW - 1) / 2;

    ConvGrads<T> g;
    g.input = TensorT<T>(N, H, W, Cin);
    g.weights.assign(weights.size(), T(0));
    g.bias.assign(spec.bias_count(), T(0));

    // grad wrt input is a convolution of the upstream gradient with
    // kernel-flipped, channel-transposed weights
    std::vector<T> wt(weights.size());
    for (int grp = 0; grp < G; ++grp)
        for (int oc = 0; oc < OCg; ++oc)
            for (int ky = 0; ky < KH; ++ky)
                for (int kx = 0; kx < KW; ++kx)
                    for (int ic = 0; ic < ICg; ++ic)
                        wt[((static_cast<size_t>(grp * ICg + ic) * KH + (KH - 1 - ky)) * KW +
                            (KW - 1 - kx)) *
                               OCg +
                           oc] =
                            weights[((static_cast<size_t>(grp * OCg + oc) * KH + ky) * KW + kx) *
                                        ICg +
                                    ic];
    const std::vector<T> zero_bias(Cin, T(0));

    std::vector<T> oplane;
    for (int n = 0; n < N; ++n) {
        const T* in = input.data() + static_cast<size_t>(n) * H * W * Cin;
        const T* up = upstream.data() + static_cast<size_t>(n) * H * W * Cout;
        T* gi = g.input.data() + static_cast<size_t>(n) * H * W * Cin;

        // transposed-conv padding mirrors the forward padding
        auto up_planes =
            make_planes(up, H, W, Cout, KH - 1 - pad_t, pad_t, KW - 1 - pad_l, pad_l);
        conv_sample<T>(up_planes, wt.data(), zero_bias.data(), gi, H, W, Cin, ICg, OCg, KH, KW,
                       oplane);

        auto in_planes =
            make_planes(in, H, W, Cin, pad_t, KH - 1 - pad_t, pad_l, KW - 1 - pad_l);

        // bias gradient: lane-wise sums of each upstream plane, fixed order
        for (int oc = 0; oc < Cout; ++oc) {
            const T* uplane = up_planes.plane(oc) + up_planes.origin();
            constexpr int S = 16;
            T lanes[S] = {};
            T tail_sum = T(0);
            for (int y = 0; y < H; ++y) {
                const T* u = uplane + static_cast<size_t>(y) * up_planes.wp;
                int x = 0;
                for (; x + S <= W; x += S)
                    for (int j = 0; j < S; ++j) lanes[j] += u[x + j];
                for (; x < W; ++x) tail_sum += u[x];
            }
            T s = T(0);
            for (int j = 0; j < S; ++j) s += lanes[j];
            g.bias[oc] += s + tail_sum;
        }

        // weight gradient: dot(upstream plane, shifted input plane) per tap
        for (int grp = 0; grp < G; ++grp)
            for (int oc = 0; oc < OCg; ++oc) {
                const int oc_g = grp * OCg + oc;
                const T* uplane = up_planes.plane(oc_g) + up_planes.origin();
                for (int ky = 0; ky < KH; ++ky)
                    for (int kx = 0; kx < KW; ++kx)
                        for (int ic0 = 0; ic0 < ICg; ic0 += 8) {
                            const int icc = std::min(8, ICg - ic0);
                            const T* iplanes[8];
                            for (int c = 0; c < icc; ++c)
                                iplanes[c] = in_planes.plane(grp * ICg + ic0 + c) +
                                             static_cast<size_t>(ky) * in_planes.wp + kx;
                            wgrad_chunk_dispatch<T>(
                                icc, uplane, up_planes.wp, iplanes, in_planes.wp, H, W,
                                g.weights.data() +
                                    ((static_cast<size_t>(oc_g) * KH + ky) * KW + kx) * ICg +
                                    ic0);
                        }
            }
    }
    return g;
}

template <typename T>
TensorT<T> depth_to_space(const TensorT<T>& input, int block) {
    if (block <= 0) throw std::invalid_argument("depth_to_space: block must be positive");
    const int b2 = block * block;
    if (input.c() % b2 != 0)
        throw std::invalid_argument("depth_to_space: channels not divisible by block^2");
    const int N = input.n(), H = input.h(), W = input.w(), Cout = input.c() / b2;

    TensorT<T> out(N, H * block, W * block, Cout);
    for (int n = 0; n < N; ++n)
        for (int iy = 0; iy < H; ++iy)
            for (int ix = 0; ix < W; ++ix)
                for (int dy = 0; dy < block; ++dy)
                    for (int dx = 0; dx < block; ++dx) {
                        const T* src = &input.at(n, iy, ix, 0);
                        T* dst = &out.at(n, iy * block + dy, ix * block + dx, 0);
                        const int coff = dy * block + dx;
                        for (int c = 0; c < Cout; ++c) dst[c] = src[c * b2 + coff];
                    }
    return out;
}

template <typename T>
TensorT<T> space_to_depth(const TensorT<T>& input, int block) {
    if (block <= 0) throw std::invalid_argument("space_to_depth: block must be positive");
    if (input.h() % block != 0 || input.w() % block != 0)
        throw std::invalid_argument("space_to_depth: spatial dims not divisible by block");
    const int N = input.n(), H = input.h() / block, W = input.w() / block;
    const int Cin = input.c(), b2 = block * block;

    TensorT<T> out(N, H, W, Cin * b2);
    for (int n = 0; n < N; ++n)
        for (int oy = 0; oy < H; ++oy)
            for (int ox = 0; ox < W; ++ox)
                for (int dy = 0; dy < block; ++dy)
                    for (int dx = 0; dx < block; ++dx) {
                        const T* src = &input.at(n, oy * block + dy, ox * block + dx, 0);
                        T* dst = &out.at(n, oy, ox, 0);
                        const int coff = dy * block + dx;
                        for (int c = 0; c < Cin; ++c) dst[c * b2 + coff] = src[c];
                    }
    return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw std::invalid_argument("concat_channels: batch/spatial shapes differ");
    const int N = a.n(), H = a.h(), W = a.w(), Ca = a.c(), Cb = b.c();
    TensorT<T> out(N, H, W, Ca + Cb);
    const size_t pixels = static_cast<size_t>(N) * H * W;
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (size_t p = 0; p < pixels; ++p) {
        std::copy(pa + p * Ca, pa + (p + 1) * Ca, po + p * (Ca + Cb));
        std::copy(pb + p * Cb, pb + (p + 1) * Cb, po + p * (Ca + Cb) + Ca);
    }
    return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& x, int c_first) {
    if (c_first < 0 || c_first > x.c())
        throw std::invalid_argument("split_channels: split point out of range");
    const int N = x.n(), H = x.h(), W = x.w(), C = x.c(), Cb = C - c_first;
    TensorT<T> a(N, H, W, c_first), b(N, H, W, Cb);
    const size_t pixels = static_cast<size_t>(N) * H * W;
    const T* px = x.data();
    for (size_t p = 0; p < pixels; ++p) {
        std::copy(px + p * C, px + p * C + c_first, a.data() + p * c_first);
        std::copy(px + p * C + c_first, px + (p + 1) * C, b.data() + p * Cb);
    }
    return {std::move(a), std::move(b)};
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> out(x.n(), x.h(), x.w(), x.c());
    const T* p = x.data();
    T* o = out.data();
    for (size_t i = 0; i < x.size(); ++i) o[i] = p[i] > T(0) ? p[i] : T(0);
    return out;
}

template <typename T>
TensorT<T> clipped_relu(const TensorT<T>& x) {
    TensorT<T> out(x.n(), x.h(), x.w(), x.c());
    const T* p = x.data();
    T* o = out.data();
    for (size_t i = 0; i < x.size(); ++i) o[i] = std::min(std::max(p[i], T(0)), T(1));
    return out;
}

template <typename T>
TensorT<T> relu_grad(const TensorT<T>& x, const TensorT<T>& upstream) {
    if (!x.same_shape(upstream)) throw std::invalid_argument("relu_grad: shape mismatch");
    TensorT<T> out(x.n(), x.h(), x.w(), x.c());
    const T* p = x.data();
    const T* u = upstream.data();
    T* o = out.data();
    for (size_t i = 0; i < x.size(); ++i) o[i] = p[i] > T(0) ? u[i] : T(0);
    return out;
}

template <typename T>
TensorT<T> clipped_relu_grad(const TensorT<T>& x, const TensorT<T>& upstream) {
    if (!x.same_shape(upstream)) throw std::invalid_argument("clipped_relu_grad: shape mismatch");
    TensorT<T> out(x.n(), x.h(), x.w(), x.c());
    const T* p = x.data();
    const T* u = upstream.data();
    T* o = out.data();
    for (size_t i = 0; i < x.size(); ++i) o[i] = (p[i] > T(0) && p[i] < T(1)) ? u[i] : T(0);
    return out;
}

template <typename T>
T charbonnier_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps) {
    if (!pred.same_shape(target)) throw std::invalid_argument("charbonnier: shape mismatch");
    if (pred.size() == 0) throw std::invalid_argument("charbonnier: empty tensors");
    const T* p = pred.data();
    const T* t = target.data();
    T sum = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const T d = p[i] - t[i];
        sum += std::sqrt(d * d + eps * eps);
    }
    return sum / static_cast<T>(pred.size());
}

template <typename T>
TensorT<T> charbonnier_loss_grad(const TensorT<T>& pred, const TensorT<T>& target, T eps) {
    if (!pred.same_shape(target)) throw std::invalid_argument("charbonnier: shape mismatch");
    TensorT<T> out(pred.n(), pred.h(), pred.w(), pred.c());
    const T* p = pred.data();
    const T* t = target.data();
    T* o = out.data();
    const T inv_count = T(1) / static_cast<T>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        const T d = p[i] - t[i];
        o[i] = inv_count * d / std::sqrt(d * d + eps * eps);
    }
    return out;
}

#define XLSR_INSTANTIATE(T)                                                                   \
    template class TensorT<T>;                                                                \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const ConvSpec&, std::span<const T>,     \
                                  std::span<const T>);                                        \
    template ConvGrads<T> conv2d_grad<T>(const TensorT<T>&, const ConvSpec&,                  \
                                         std::span<const T>, const TensorT<T>&);              \
    template TensorT<T> depth_to_space<T>(const TensorT<T>&, int);                            \
    template TensorT<T> space_to_depth<T>(const TensorT<T>&, int);                            \
    template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);             \
    template std::pair<TensorT<T>, TensorT<T>> split_channels<T>(const TensorT<T>&, int);     \
    template TensorT<T> relu<T>(const TensorT<T>&);                                           \
    template TensorT<T> clipped_relu<T>(const TensorT<T>&);                                   \
    template TensorT<T> relu_grad<T>(const TensorT<T>&, const TensorT<T>&);                   \
    template TensorT<T> clipped_relu_grad<T>(const TensorT<T>&, const TensorT<T>&);           \
    template T charbonnier_loss<T>(const TensorT<T>&, const TensorT<T>&, T);                  \
    template TensorT<T> charbonnier_loss_grad<T>(const TensorT<T>&, const TensorT<T>&, T);

XLSR_INSTANTIATE(float)
XLSR_INSTANTIATE(double)

#undef XLSR_INSTANTIATE

}  // namespace xlsr
