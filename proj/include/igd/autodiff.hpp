#pragma once

#include <functional>
#include <vector>

#include "igd/tensor.hpp"

namespace igd {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid until Tape::reset().
struct Ref {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

// Dynamic reverse-mode tape. Nodes are created in topological order by the
// op functions below; backward() walks them in reverse. Gradients are
// allocated lazily, so subgraphs that do not reach the loss cost nothing
// on the backward pass.
class Tape {
public:
    // Leaf whose gradient is discarded (inputs, frozen parameters).
    Ref constant(Tensor v);
    // Leaf that accumulates its gradient into *sink on backward().
    Ref leaf(Tensor v, Tensor* sink);

    // loss must be a single-element tensor.
    void backward(Ref loss);

    void reset();
    std::size_t num_nodes() const { return nodes_.size(); }

    // --- internals used by op implementations ---
    struct Node {
        Tensor value;
        Tensor grad;  // empty until first accumulation
        std::function<void(Tape&, int)> back;
        Tensor* sink = nullptr;
    };

    int emit(Tensor value, std::function<void(Tape&, int)> back);
    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }
    // Gradient buffer of a node, allocated zeroed on first use.
    Tensor& grad_buffer(int id);

private:
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise ops (same-shape unless stated otherwise)
// ---------------------------------------------------------------------------
Ref add(Ref a, Ref b);
Ref sub(Ref a, Ref b);
Ref mul(Ref a, Ref b);
Ref div(Ref a, Ref b);
Ref neg(Ref a);
Ref scale(Ref a, double s);
Ref add_scalar(Ref a, double s);
Ref rsub_scalar(double s, Ref a);  // s - a
Ref abs_val(Ref a);
Ref square(Ref a);
Ref exp_val(Ref a);
// sqrt(x + eps); eps keeps the gradient finite at x == 0.
Ref sqrt_eps(Ref a, double eps);
// pow(max(x, floor), e); zero gradient where the floor is active.
Ref pow_floored(Ref a, double e, double floor_val);
Ref relu(Ref a);
Ref leaky_relu(Ref a, double slope);
Ref sigmoid(Ref a);
Ref clamp01(Ref a);
// max(x, 0) clamp used for variances; gradient passes where x > 0.
Ref clamp_min0(Ref a);

// a + c and a - c for a constant tensor (no node for c).
Ref add_const(Ref a, const Tensor& c);
Ref sub_const(Ref a, const Tensor& c);
// x[B,Z] - v[Z], v broadcast across rows.
Ref sub_rowvec_const(Ref x, const Tensor& v);

// ---------------------------------------------------------------------------
// Batch ops (leading dim = sample index)
// ---------------------------------------------------------------------------
// out[n,...] = s[n] * x[n,...]
Ref scale_per_image(Ref x, const std::vector<double>& s);
// out[n] = x[idx[n]] (sample reordering; adjoint scatters)
Ref permute_batch(Ref x, const std::vector<int>& idx);
// [N, ...] -> [N], mean over all trailing dims
Ref mean_per_image(Ref x);
// [B, Z] -> [B], sum over columns
Ref sum_rows(Ref x);
// any shape -> [1]
Ref mean_all(Ref x);
Ref sum_all(Ref x);

Ref reshape(Ref x, std::vector<int> shape);

// ---------------------------------------------------------------------------
// Neural network ops (NCHW)
// ---------------------------------------------------------------------------
// x[B,I] * w[I,O] + b[O]; pass b.valid()==false for no bias.
Ref linear(Ref x, Ref w, Ref b);
// w[OC,IC,KH,KW], b[OC] optional
Ref conv2d(Ref x, Ref w, Ref b, int stride, int pad);
// w[IC,OC,KH,KW]; H_out = (H-1)*stride - 2*pad + KH + out_pad
Ref conv2d_transpose(Ref x, Ref w, Ref b, int stride, int pad, int out_pad);
// 2x2 stride-2 average pooling, floor sizes (odd trailing row/col dropped)
Ref avg_pool2(Ref x);
Ref max_pool(Ref x, int k, int stride, int pad);
// [N,C,H,W] -> [N,C]
Ref global_avg_pool(Ref x);
// [N,C,H,W] -> [N,1,H,W]
Ref mean_channels(Ref x);
// Same-size box mean with windows clipped at borders (each output is the
// mean over the window's intersection with the image). k <= min(H,W).
Ref box_mean(Ref x, int k);
// Nearest upsampling by 2^shift: out[p,q] = x[min(p>>shift,H-1), min(q>>shift,W-1)]
Ref upsample_shift(Ref x, int out_h, int out_w, int shift);

}  // namespace igd
