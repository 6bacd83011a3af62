#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "multisol/net.hpp"

namespace multisol {

/// Network value with exact input derivatives at a point, u(x).
struct Jet1 {
    double u = 0.0, ux = 0.0, uxx = 0.0;
};

/// Same for u(x, y); the mixed partial is not carried.
struct Jet2 {
    double u = 0.0, ux = 0.0, uy = 0.0, uxx = 0.0, uyy = 0.0;
};

/// 2D jet carrying the Laplacian as one channel. The tanh jet rule closes
/// on (u, ux, uy, uxx+uyy), so 2D residuals that only need the Laplacian
/// can drop one of five propagation channels.
struct JetLap {
    double u = 0.0, ux = 0.0, uy = 0.0, lap = 0.0;
};

namespace detail {

using Mat = Eigen::MatrixXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// tanh via exp so Eigen vectorizes it for double (std::tanh is scalar).
/// Saturates correctly at +-1 and propagates NaN.
template <typename Derived>
inline auto tanh_arr(const Eigen::ArrayBase<Derived>& z) {
    return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

/// Affine layer on stacked channel blocks: every channel is multiplied by
/// W; the bias enters the value block only.
inline void affine_forward(const double* w, const double* b, int in, int out,
                           int n_points, const Mat& a_prev, Mat& z) {
    RowMajorMap W(w, out, in);
    z.noalias() = a_prev * W.transpose();
    z.topRows(n_points).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b, out);
}

/// Jet rule for tanh: sigma' = s, sigma'' = -2 t s with t = tanh, s = 1 - t^2.
/// First-derivative channels map to s*z_c; second-derivative channels to
/// s*(z_cc - 2 t z_c^2). Runs column-by-column so one unit's data stays
/// cache-resident across the channel updates.
inline void tanh_forward(int n_points, int channels, const Mat& z, Mat& t, Mat& s, Mat& a) {
    const int n = n_points;
    t.resize(n, z.cols());
    s.resize(n, z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        auto zc = z.col(j);
        auto ac = a.col(j);
        t.col(j) = tanh_arr(zc.segment(0, n).array());
        s.col(j) = 1.0 - t.col(j).array().square();
        auto T = t.col(j).array();
        auto S = s.col(j).array();
        ac.segment(0, n) = T;
        if (channels == 3) { // (u, dx, dxx)
            ac.segment(n, n) = S * zc.segment(n, n).array();
            ac.segment(2 * n, n) =
                S * (zc.segment(2 * n, n).array() - 2.0 * T * zc.segment(n, n).array().square());
        } else if (channels == 4) { // (u, dx, dy, lap)
            ac.segment(n, n) = S * zc.segment(n, n).array();
            ac.segment(2 * n, n) = S * zc.segment(2 * n, n).array();
            ac.segment(3 * n, n) =
                S * (zc.segment(3 * n, n).array() -
                     2.0 * T * (zc.segment(n, n).array().square() + zc.segment(2 * n, n).array().square()));
        } else { // (u, dx, dy, dxx, dyy)
            ac.segment(n, n) = S * zc.segment(n, n).array();
            ac.segment(2 * n, n) = S * zc.segment(2 * n, n).array();
            ac.segment(3 * n, n) =
                S * (zc.segment(3 * n, n).array() - 2.0 * T * zc.segment(n, n).array().square());
            ac.segment(4 * n, n) =
                S * (zc.segment(4 * n, n).array() - 2.0 * T * zc.segment(2 * n, n).array().square());
        }
    }
}

/// Adjoint of tanh_forward: maps adjoints of the activation output blocks
/// to adjoints of the pre-activation blocks, in place. `scratch` holds the
/// value-channel adjoint while the derivative channels still read it.
inline void tanh_reverse(int n_points, int channels, const Mat& z, const Mat& t, const Mat& s,
                         Mat& bar, Mat& scratch) {
    const int n = n_points;
    scratch.resize(n, 1);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        auto zc = z.col(j);
        auto bc = bar.col(j);
        auto T = t.col(j).array();
        auto S = s.col(j).array();
        if (channels == 3) {
            auto zx = zc.segment(n, n).array();
            auto zxx = zc.segment(2 * n, n).array();
            auto bu = bc.segment(0, n).array();
            auto bx = bc.segment(n, n).array();
            auto bxx = bc.segment(2 * n, n).array();
            scratch.col(0) = (S * (bu - 2.0 * T * (bx * zx + bxx * zxx) -
                                   2.0 * (S - 2.0 * T.square()) * bxx * zx.square())).matrix();
            bc.segment(n, n) = (S * (bx - 4.0 * T * bxx * zx)).matrix();
            bc.segment(2 * n, n) = (S * bxx).matrix();
            bc.segment(0, n) = scratch.col(0);
        } else if (channels == 4) {
            auto zx = zc.segment(n, n).array();
            auto zy = zc.segment(2 * n, n).array();
            auto zl = zc.segment(3 * n, n).array();
            auto bu = bc.segment(0, n).array();
            auto bx = bc.segment(n, n).array();
            auto by = bc.segment(2 * n, n).array();
            auto bl = bc.segment(3 * n, n).array();
            scratch.col(0) = (S * (bu - 2.0 * T * (bx * zx + by * zy + bl * zl) -
                                   2.0 * (S - 2.0 * T.square()) * bl * (zx.square() + zy.square()))).matrix();
            bc.segment(n, n) = (S * (bx - 4.0 * T * bl * zx)).matrix();
            bc.segment(2 * n, n) = (S * (by - 4.0 * T * bl * zy)).matrix();
            bc.segment(3 * n, n) = (S * bl).matrix();
            bc.segment(0, n) = scratch.col(0);
        } else {
            auto zx = zc.segment(n, n).array();
            auto zy = zc.segment(2 * n, n).array();
            auto zxx = zc.segment(3 * n, n).array();
            auto zyy = zc.segment(4 * n, n).array();
            auto bu = bc.segment(0, n).array();
            auto bx = bc.segment(n, n).array();
            auto by = bc.segment(2 * n, n).array();
            auto bxx = bc.segment(3 * n, n).array();
            auto byy = bc.segment(4 * n, n).array();
            scratch.col(0) = (S * (bu - 2.0 * T * (bx * zx + by * zy + bxx * zxx + byy * zyy) -
                                   2.0 * (S - 2.0 * T.square()) * (bxx * zx.square() + byy * zy.square()))).matrix();
            bc.segment(n, n) = (S * (bx - 4.0 * T * bxx * zx)).matrix();
            bc.segment(2 * n, n) = (S * (by - 4.0 * T * byy * zy)).matrix();
            bc.segment(3 * n, n) = (S * bxx).matrix();
            bc.segment(4 * n, n) = (S * byy).matrix();
            bc.segment(0, n) = scratch.col(0);
        }
    }
}

/// Accumulate weight/bias gradients for one affine layer and propagate the
/// adjoint to the layer input.
inline void affine_reverse(const double* w, int in, int out, int n_points,
                           const Mat& a_prev, const Mat& z_bar,
                           double* w_grad, double* b_grad, Mat* a_prev_bar) {
    RowMajorMap W(w, out, in);
    Mat wg = z_bar.transpose() * a_prev; // out x in, column-major temp
    RowMajorMapMut(w_grad, out, in) += wg;
    Eigen::Map<Eigen::RowVectorXd>(b_grad, out) += z_bar.topRows(n_points).colwise().sum();
    if (a_prev_bar) a_prev_bar->noalias() = z_bar * W;
}

/// One contiguous stack of affine+tanh layers (tanh on all but the last
/// affine when `output_identity`). Shared by the standalone evaluator and
/// the multi-head body/head passes.
struct LayerStack {
    std::vector<int> widths;
    bool output_identity = true; // last affine has no activation
    int n = 0;                   // batch points
    int channels = 3;

    std::vector<Mat> pre;  // pre-activation blocks per affine layer
    std::vector<Mat> act;  // act[0] = input block, act[l+1] = output of layer l
    std::vector<Mat> tanh_t, tanh_s;
    Mat bar_cur, bar_prev, scratch; // reverse-pass work buffers

    /// Workspace storage persists across iterations; only a shape change
    /// reallocates.
    void resize(int n_points, int c) {
        const std::size_t L = widths.size() - 1;
        if (n == n_points && channels == c && pre.size() == L) return;
        n = n_points;
        channels = c;
        pre.assign(L, Mat());
        act.assign(L + 1, Mat());
        tanh_t.assign(L, Mat());
        tanh_s.assign(L, Mat());
    }

    std::size_t n_layers() const { return widths.size() - 1; }

    /// act[0] must be filled by the caller before this.
    void forward(const double* params, const NetworkSpec* offsets_spec = nullptr) {
        // parameter blocks are consumed in canonical order from `params`
        const std::size_t L = n_layers();
        const double* p = params;
        (void)offsets_spec;
        for (std::size_t l = 0; l < L; ++l) {
            const int in = widths[l], out = widths[l + 1];
            affine_forward(p, p + static_cast<std::size_t>(in) * out, in, out, n, act[l], pre[l]);
            const bool last = (l + 1 == L);
            if (last && output_identity) {
                act[l + 1] = pre[l];
            } else {
                act[l + 1].resizeLike(pre[l]);
                tanh_forward(n, channels, pre[l], tanh_t[l], tanh_s[l], act[l + 1]);
            }
            p += static_cast<std::size_t>(in) * out + out;
        }
    }

    /// `out_bar` is the adjoint of act[L] and is consumed; gradients are
    /// accumulated into `grad` (same canonical layout as params). If
    /// `input_bar` is non-null the adjoint of act[0] is written there.
    void reverse(const double* params, Mat& out_bar, double* grad, Mat* input_bar) {
        const std::size_t L = n_layers();
        std::size_t w_off_end = 0;
        for (std::size_t l = 0; l < L; ++l)
            w_off_end += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
        Mat* bar = &out_bar;
        std::size_t off = w_off_end;
        for (std::size_t l = L; l-- > 0;) {
            const int in = widths[l], out = widths[l + 1];
            off -= static_cast<std::size_t>(in) * out + out;
            const bool last = (l + 1 == L);
            if (!(last && output_identity))
                tanh_reverse(n, channels, pre[l], tanh_t[l], tanh_s[l], *bar, scratch);
            const bool need_prev = (l > 0) || (input_bar != nullptr);
            affine_reverse(params + off, in, out, n, act[l], *bar,
                           grad + off,
                           grad + off + static_cast<std::size_t>(in) * out,
                           need_prev ? &bar_prev : nullptr);
            if (l > 0) {
                std::swap(bar_prev, bar_cur);
                bar = &bar_cur;
            } else if (input_bar) {
                *input_bar = bar_prev;
            }
        }
    }
};

inline void fill_input_block(Mat& a0, int channels, std::span<const double> xs, std::span<const double> ys) {
    const int n = static_cast<int>(xs.size());
    const int dim = channels == 3 ? 1 : 2;
    a0.setZero(static_cast<Eigen::Index>(channels) * n, dim);
    for (int i = 0; i < n; ++i) a0(i, 0) = xs[i];
    if (dim == 1) {
        a0.block(n, 0, n, 1).setOnes(); // d x / d x
    } else {
        for (int i = 0; i < n; ++i) a0(i, 1) = ys[i];
        a0.block(n, 0, n, 1).setOnes();     // d x / d x
        a0.block(2 * n, 1, n, 1).setOnes(); // d y / d y
        // second-derivative (or Laplacian) blocks start at zero
    }
}

} // namespace detail

/// Batched jet evaluation of a tanh MLP with reverse-mode parameter
/// gradients. Forward stores per-layer intermediates; reverse consumes
/// seeds (adjoints of the output jets) written via add_seed*.
///
/// All operations are pure functions of their inputs; one evaluator
/// instance is a reusable workspace, not shared state.
class JetEvaluator {
public:
    /// Laplacian mode propagates (u, ux, uy, uxx+uyy) instead of the five
    /// full-jet channels; 2D residuals needing only the Laplacian train
    /// ~20% cheaper.
    enum class Mode { FullJets, Laplacian };

    explicit JetEvaluator(NetworkSpec spec, Mode mode = Mode::FullJets)
        : spec_(std::move(spec)), mode_(mode) {
        stack_.widths = spec_.layer_widths;
        channels_ = spec_.input_dim() == 1 ? 3 : (mode_ == Mode::Laplacian ? 4 : 5);
    }

    const NetworkSpec& spec() const { return spec_; }
    int n_points() const { return n_; }

    void forward(const ParamVector& params, std::span<const double> xs) {
        if (spec_.input_dim() != 1)
            throw std::invalid_argument("JetEvaluator: 1D forward on a 2D network");
        run_forward(params, xs, {});
    }

    void forward(const ParamVector& params, std::span<const double> xs, std::span<const double> ys) {
        if (spec_.input_dim() != 2)
            throw std::invalid_argument("JetEvaluator: 2D forward on a 1D network");
        if (xs.size() != ys.size())
            throw std::invalid_argument("JetEvaluator: xs/ys size mismatch");
        run_forward(params, xs, ys);
    }

    Jet1 jet1(int i, int o = 0) const {
        assert(i >= 0 && i < n_);
        const auto& out = stack_.act.back();
        return {out(i, o), out(n_ + i, o), out(2 * n_ + i, o)};
    }

    Jet2 jet2(int i, int o = 0) const {
        assert(i >= 0 && i < n_ && channels_ == 5);
        const auto& out = stack_.act.back();
        return {out(i, o), out(n_ + i, o), out(2 * n_ + i, o), out(3 * n_ + i, o), out(4 * n_ + i, o)};
    }

    JetLap jet_lap(int i, int o = 0) const {
        assert(i >= 0 && i < n_ && channels_ == 4);
        const auto& out = stack_.act.back();
        return {out(i, o), out(n_ + i, o), out(2 * n_ + i, o), out(3 * n_ + i, o)};
    }

    void clear_seeds() { seeds_.setZero(stack_.act.back().rows(), stack_.act.back().cols()); }

    void add_seed1(int i, const Jet1& s, int o = 0) {
        seeds_(i, o) += s.u;
        seeds_(n_ + i, o) += s.ux;
        seeds_(2 * n_ + i, o) += s.uxx;
    }

    void add_seed2(int i, const Jet2& s, int o = 0) {
        seeds_(i, o) += s.u;
        seeds_(n_ + i, o) += s.ux;
        seeds_(2 * n_ + i, o) += s.uy;
        seeds_(3 * n_ + i, o) += s.uxx;
        seeds_(4 * n_ + i, o) += s.uyy;
    }

    void add_seed_lap(int i, const JetLap& s, int o = 0) {
        seeds_(i, o) += s.u;
        seeds_(n_ + i, o) += s.ux;
        seeds_(2 * n_ + i, o) += s.uy;
        seeds_(3 * n_ + i, o) += s.lap;
    }

    /// Parameter gradient of the scalar whose jet adjoints were seeded.
    /// Consumes the seeds.
    void reverse(const ParamVector& params, ParamVector& grad) {
        grad.assign(spec_.param_count(), 0.0);
        if (n_ == 0) return;
        stack_.reverse(params.data(), seeds_, grad.data(), nullptr);
    }

private:
    void run_forward(const ParamVector& params, std::span<const double> xs, std::span<const double> ys) {
        if (params.size() != spec_.param_count())
            throw std::invalid_argument("JetEvaluator: parameter count mismatch");
        n_ = static_cast<int>(xs.size());
        stack_.resize(n_, channels_);
        if (n_ == 0) return;
        detail::fill_input_block(stack_.act[0], channels_, xs, ys);
        stack_.forward(params.data());
        clear_seeds();
    }

    NetworkSpec spec_;
    Mode mode_;
    int channels_ = 3;
    detail::LayerStack stack_;
    Eigen::MatrixXd seeds_;
    int n_ = 0;
};

/// Exact jets of the network function at a single point. Scalar-output
/// convenience over the batched evaluator.
inline Jet1 forward_jet1(const ParamVector& params, const NetworkSpec& spec, double x) {
    JetEvaluator ev(spec);
    ev.forward(params, std::span<const double>(&x, 1));
    return ev.jet1(0);
}

inline Jet2 forward_jet2(const ParamVector& params, const NetworkSpec& spec, double x, double y) {
    JetEvaluator ev(spec);
    ev.forward(params, std::span<const double>(&x, 1), std::span<const double>(&y, 1));
    return ev.jet2(0);
}

/// Generic reverse-mode driver: `batch_loss(ev)` reads jets, writes seeds,
/// and returns the loss value. Returns the loss and its exact parameter
/// gradient. An empty batch yields (0, zero vector).
template <typename BatchLoss>
std::pair<double, ParamVector> loss_gradient(const ParamVector& params, const NetworkSpec& spec,
                                             std::span<const double> xs, BatchLoss&& batch_loss) {
    JetEvaluator ev(spec);
    if (xs.empty()) return {0.0, ParamVector(spec.param_count(), 0.0)};
    ev.forward(params, xs);
    double loss = batch_loss(ev);
    ParamVector grad;
    ev.reverse(params, grad);
    return {loss, std::move(grad)};
}

template <typename BatchLoss>
std::pair<double, ParamVector> loss_gradient(const ParamVector& params, const NetworkSpec& spec,
                                             std::span<const double> xs, std::span<const double> ys,
                                             BatchLoss&& batch_loss) {
    JetEvaluator ev(spec);
    if (xs.empty()) return {0.0, ParamVector(spec.param_count(), 0.0)};
    ev.forward(params, xs, ys);
    double loss = batch_loss(ev);
    ParamVector grad;
    ev.reverse(params, grad);
    return {loss, std::move(grad)};
}

/// Multi-head evaluation: the body runs once over the batch, heads run
/// per-head on the body output. Head h's jets equal forward_jet1 of the
/// standalone body+head network.
class MultiHeadEvaluator {
public:
    explicit MultiHeadEvaluator(MultiHeadSpec spec) : spec_(std::move(spec)) {
        body_.widths = spec_.body_widths;
        body_.output_identity = false; // body layers all carry tanh
        head_.widths = spec_.head_widths;
        head_.output_identity = true;
    }

    const MultiHeadSpec& spec() const { return spec_; }
    int n_points() const { return n_; }

    void forward_body(const ParamVector& mh_params, std::span<const double> xs) {
        if (mh_params.size() != spec_.param_count())
            throw std::invalid_argument("MultiHeadEvaluator: parameter count mismatch");
        n_ = static_cast<int>(xs.size());
        const int channels = spec_.body_widths.front() == 1 ? 3 : 5;
        body_.resize(n_, channels);
        detail::fill_input_block(body_.act[0], channels, xs, {});
        body_.forward(mh_params.data());
        body_bar_.setZero(body_.act.back().rows(), body_.act.back().cols());
        params_ = &mh_params;
    }

    /// Head forward over the batch; jets readable via jet1 afterwards.
    void forward_head(int head) {
        check_head(head);
        head_.resize(n_, body_.channels);
        head_.act[0] = body_.act.back();
        head_.forward(head_params(head));
        head_seeds_.setZero(head_.act.back().rows(), head_.act.back().cols());
        current_head_ = head;
    }

    Jet1 jet1(int i, int o = 0) const {
        const auto& out = head_.act.back();
        return {out(i, o), out(n_ + i, o), out(2 * n_ + i, o)};
    }

    void add_seed1(int i, const Jet1& s, int o = 0) {
        head_seeds_(i, o) += s.u;
        head_seeds_(n_ + i, o) += s.ux;
        head_seeds_(2 * n_ + i, o) += s.uxx;
    }

    /// Reverse the current head into grad (head block) and accumulate the
    /// body-output adjoint for the final body reverse.
    void reverse_head(ParamVector& grad) {
        Eigen::MatrixXd in_bar;
        head_.reverse(head_params(current_head_), head_seeds_, head_grad_ptr(grad, current_head_), &in_bar);
        body_bar_ += in_bar;
    }

    /// Reverse the shared body with all accumulated head adjoints.
    void reverse_body(ParamVector& grad) {
        body_.reverse(params_->data(), body_bar_, grad.data(), nullptr);
    }

private:
    void check_head(int head) const {
        if (head < 0 || head >= spec_.n_heads)
            throw std::out_of_range("MultiHeadEvaluator: head index out of range");
    }
    const double* head_params(int head) const {
        return params_->data() + spec_.body_param_count() +
               static_cast<std::size_t>(head) * spec_.head_param_count();
    }
    double* head_grad_ptr(ParamVector& grad, int head) const {
        return grad.data() + spec_.body_param_count() +
               static_cast<std::size_t>(head) * spec_.head_param_count();
    }

    MultiHeadSpec spec_;
    detail::LayerStack body_, head_;
    Eigen::MatrixXd body_bar_, head_seeds_;
    const ParamVector* params_ = nullptr;
    int current_head_ = -1;
    int n_ = 0;
};

/// Jets of head `head` at a single point; equals forward_jet1 of the
/// assembled standalone network.
inline Jet1 forward_jet_head(const ParamVector& mh_params, const MultiHeadSpec& mh_spec,
                             int head, double x) {
    MultiHeadEvaluator ev(mh_spec);
    ev.forward_body(mh_params, std::span<const double>(&x, 1));
    ev.forward_head(head);
    return ev.jet1(0);
}

} // namespace multisol
