#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace xlsr {

// Rank-4 NHWC tensor. float is the training/inference type, double exists
// for gradient checking where finite differences need the extra precision.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    TensorT(int n, int h, int w, int c)
        : n_(n), h_(h), w_(w), c_(c),
          data_(static_cast<size_t>(n) * h * w * c, T(0)) {
        if (n < 0 || h < 0 || w < 0 || c < 0)
            throw std::invalid_argument("tensor: negative dimension");
    }

    TensorT(int n, int h, int w, int c, std::vector<T> data)
        : n_(n), h_(h), w_(w), c_(c), data_(std::move(data)) {
        if (data_.size() != static_cast<size_t>(n) * h * w * c)
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    int n() const { return n_; }
    int h() const { return h_; }
    int w() const { return w_; }
    int c() const { return c_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    size_t index(int n, int y, int x, int c) const {
        return ((static_cast<size_t>(n) * h_ + y) * w_ + x) * c_ + c;
    }
    T& at(int n, int y, int x, int c) { return data_[index(n, y, x, c)]; }
    const T& at(int n, int y, int x, int c) const { return data_[index(n, y, x, c)]; }

    bool same_shape(const TensorT& o) const {
        return n_ == o.n_ && h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }

    bool all_finite() const;

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(n_, h_, w_, c_, std::move(out));
    }

private:
    int n_ = 0, h_ = 0, w_ = 0, c_ = 0;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// 2-D convolution geometry. Stride is fixed to 1 and padding is zero "same";
// the network keeps LR spatial size until the single depth_to_space.
struct ConvSpec {
    int kernel_h = 3;
    int kernel_w = 3;
    int in_channels = 0;
    int out_channels = 0;
    int groups = 1;

    int group_in() const { return in_channels / groups; }
    int group_out() const { return out_channels / groups; }
    // weights are (out_channels, kernel_h, kernel_w, in_channels/groups)
    size_t weight_count() const {
        return static_cast<size_t>(out_channels) * kernel_h * kernel_w * group_in();
    }
    size_t bias_count() const { return static_cast<size_t>(out_channels); }

    void validate() const;
};

template <typename T>
struct ConvGrads {
    TensorT<T> input;
    std::vector<T> weights;
    std::vector<T> bias;
};

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const ConvSpec& spec,
                  std::span<const T> weights, std::span<const T> bias);

template <typename T>
ConvGrads<T> conv2d_grad(const TensorT<T>& input, const ConvSpec& spec,
                         std::span<const T> weights, const TensorT<T>& upstream);

// Output pixel (y, x, c) reads input channel c*block^2 + (y%block)*block + (x%block)
// at (y/block, x/block); space_to_depth is the exact inverse.
template <typename T>
TensorT<T> depth_to_space(const TensorT<T>& input, int block);

template <typename T>
TensorT<T> space_to_depth(const TensorT<T>& input, int block);

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

// inverse of concat_channels for the backward pass: splits after channel c_first
template <typename T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& x, int c_first);

template <typename T>
TensorT<T> relu(const TensorT<T>& x);

// max(0, min(x, 1))
template <typename T>
TensorT<T> clipped_relu(const TensorT<T>& x);

// Kink convention: derivative is 0 at x <= 0 (and x >= 1 for the clipped
// variant), 1 on the open interior.
template <typename T>
TensorT<T> relu_grad(const TensorT<T>& x, const TensorT<T>& upstream);

template <typename T>
TensorT<T> clipped_relu_grad(const TensorT<T>& x, const TensorT<T>& upstream);

// mean over all elements of sqrt((pred-target)^2 + eps^2)
template <typename T>
T charbonnier_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps);

template <typename T>
TensorT<T> charbonnier_loss_grad(const TensorT<T>& pred, const TensorT<T>& target, T eps);

}  // namespace xlsr
