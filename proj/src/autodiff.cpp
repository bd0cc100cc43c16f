#include "igd/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace igd {

const Tensor& Ref::value() const { return tape->val(id); }

int Tape::emit(Tensor value, std::function<void(Tape&, int)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Ref Tape::constant(Tensor v) {
    int id = emit(std::move(v), nullptr);
    return Ref{this, id};
}

Ref Tape::leaf(Tensor v, Tensor* sink) {
    Node n;
    n.value = std::move(v);
    n.sink = sink;
    nodes_.push_back(std::move(n));
    return Ref{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

void Tape::backward(Ref loss) {
    if (loss.tape != this) throw std::invalid_argument("Tape::backward: foreign ref");
    if (val(loss.id).size() != 1)
        throw std::invalid_argument("Tape::backward: loss must be scalar");
    grad_buffer(loss.id).fill(1.0);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) continue;
        if (n.back) n.back(*this, id);
        if (n.sink) {
            Tensor& s = *n.sink;
            require_same_shape(s, n.grad, "Tape::backward sink");
            for (std::size_t i = 0; i < s.size(); ++i) s[i] += n.grad[i];
        }
    }
}

void Tape::reset() { nodes_.clear(); }

namespace {

Tape& same_tape(Ref a, Ref b, const char* where) {
    if (a.tape == nullptr || a.tape != b.tape)
        throw std::invalid_argument(std::string(where) + ": refs on different tapes");
    return *a.tape;
}

void accum(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Unary elementwise: out[i] = f(x[i]); dx[i] += g[i] * dfdx(x[i], out[i]).
template <typename F, typename DF>
Ref unary_op(Ref a, const char* /*name*/, F f, DF dfdx) {
    Tape& t = *a.tape;
    const Tensor& x = t.val(a.id);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    int ia = a.id;
    int id = t.emit(std::move(out), [ia, dfdx](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& x = tp.val(ia);
        const Tensor& y = tp.val(self);
        Tensor& ga = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
    return Ref{a.tape, id};
}

}  // namespace

Ref add(Ref a, Ref b) {
    Tape& t = same_tape(a, b, "add");
    const Tensor& xa = t.val(a.id);
    const Tensor& xb = t.val(b.id);
    require_same_shape(xa, xb, "add");
    Tensor out = xa;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xb[i];
    int ia = a.id, ib = b.id;
    int id = t.emit(std::move(out), [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        accum(tp.grad_buffer(ia), g);
        accum(tp.grad_buffer(ib), g);
    });
    return Ref{a.tape, id};
}

Ref sub(Ref a, Ref b) {
    Tape& t = same_tape(a, b, "sub");
    const Tensor& xa = t.val(a.id);
    const Tensor& xb = t.val(b.id);
    require_same_shape(xa, xb, "sub");
    Tensor out = xa;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= xb[i];
    int ia = a.id, ib = b.id;
    int id = t.emit(std::move(out), [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        accum(tp.grad_buffer(ia), g);
        Tensor& gb = tp.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
    return Ref{a.tape, id};
}

Ref mul(Ref a, Ref b) {
    Tape& t = same_tape(a, b, "mul");
    const Tensor& xa = t.val(a.id);
    const Tensor& xb = t.val(b.id);
    require_same_shape(xa, xb, "mul");
    Tensor out = xa;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= xb[i];
    int ia = a.id, ib = b.id;
    int id = t.emit(std::move(out), [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xa = tp.val(ia);
        const Tensor& xb = tp.val(ib);
        Tensor& ga = tp.grad_buffer(ia);
        Tensor& gb = tp.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * xb[i];
            gb[i] += g[i] * xa[i];
        }
    });
    return Ref{a.tape, id};
}

Ref div(Ref a, Ref b) {
    Tape& t = same_tape(a, b, "div");
    const Tensor& xa = t.val(a.id);
    const Tensor& xb = t.val(b.id);
    require_same_shape(xa, xb, "div");
    Tensor out = xa;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= xb[i];
    int ia = a.id, ib = b.id;
    int id = t.emit(std::move(out), [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xb = tp.val(ib);
        const Tensor& y = tp.val(self);
        Tensor& ga = tp.grad_buffer(ia);
        Tensor& gb = tp.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / xb[i];
            gb[i] -= g[i] * y[i] / xb[i];
        }
    });
    return Ref{a.tape, id};
}

Ref neg(Ref a) {
    return unary_op(a, "neg", [](double x) { return -x; },
                    [](double, double) { return -1.0; });
}

Ref scale(Ref a, double s) {
    return unary_op(a, "scale", [s](double x) { return s * x; },
                    [s](double, double) { return s; });
}

Ref add_scalar(Ref a, double s) {
    return unary_op(a, "add_scalar", [s](double x) { return x + s; },
                    [](double, double) { return 1.0; });
}

Ref rsub_scalar(double s, Ref a) {
    return unary_op(a, "rsub_scalar", [s](double x) { return s - x; },
                    [](double, double) { return -1.0; });
}

Ref abs_val(Ref a) {
    return unary_op(a, "abs", [](double x) { return std::abs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Ref square(Ref a) {
    return unary_op(a, "square", [](double x) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Ref exp_val(Ref a) {
    return unary_op(a, "exp", [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Ref sqrt_eps(Ref a, double eps) {
    return unary_op(a, "sqrt_eps", [eps](double x) { return std::sqrt(x + eps); },
                    [](double, double y) { return 0.5 / y; });
}

Ref pow_floored(Ref a, double e, double floor_val) {
    return unary_op(
        a, "pow_floored",
        [e, floor_val](double x) { return std::pow(x < floor_val ? floor_val : x, e); },
        [e, floor_val](double x, double y) {
            if (x < floor_val) return 0.0;
            return e * y / x;  // d/dx x^e = e*x^(e-1)
        });
}

Ref relu(Ref a) {
    return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Ref leaky_relu(Ref a, double slope) {
    return unary_op(a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
                    [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Ref sigmoid(Ref a) {
    return unary_op(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Ref clamp01(Ref a) {
    return unary_op(a, "clamp01", [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); },
                    [](double x, double) { return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0; });
}

Ref clamp_min0(Ref a) {
    return unary_op(a, "clamp_min0", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Ref add_const(Ref a, const Tensor& c) {
    Tape& t = *a.tape;
    const Tensor& x = t.val(a.id);
    require_same_shape(x, c, "add_const");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
    int ia = a.id;
    int id = t.emit(std::move(out), [ia](Tape& tp, int self) {
        accum(tp.grad_buffer(ia), tp.grad(self));
    });
    return Ref{a.tape, id};
}

Ref sub_const(Ref a, const Tensor& c) {
    Tape& t = *a.tape;
    const Tensor& x = t.val(a.id);
    require_same_shape(x, c, "sub_const");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c[i];
    int ia = a.id;
    int id = t.emit(std::move(out), [ia](Tape& tp, int self) {
        accum(tp.grad_buffer(ia), tp.grad(self));
    });
    return Ref{a.tape, id};
}

Ref sub_rowvec_const(Ref x, const Tensor& v) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 2 || v.ndim() != 1 || xv.dim(1) != v.dim(0))
        throw std::invalid_argument("sub_rowvec_const: need [B,Z] and [Z]");
    Tensor out = xv;
    const int B = xv.dim(0), Z = xv.dim(1);
    for (int b = 0; b < B; ++b)
        for (int z = 0; z < Z; ++z) out[static_cast<std::size_t>(b) * Z + z] -= v[z];
    int ix = x.id;
    int id = t.emit(std::move(out), [ix](Tape& tp, int self) {
        accum(tp.grad_buffer(ix), tp.grad(self));
    });
    return Ref{x.tape, id};
}

Ref scale_per_image(Ref x, const std::vector<double>& s) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    const int N = xv.dim(0);
    if (static_cast<int>(s.size()) != N)
        throw std::invalid_argument("scale_per_image: scale count != batch size");
    const std::size_t per = xv.size() / static_cast<std::size_t>(N);
    Tensor out = xv;
    for (int n = 0; n < N; ++n)
        for (std::size_t i = 0; i < per; ++i) out[n * per + i] *= s[static_cast<std::size_t>(n)];
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, s, per, N](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (int n = 0; n < N; ++n)
            for (std::size_t i = 0; i < per; ++i)
                gx[n * per + i] += g[n * per + i] * s[static_cast<std::size_t>(n)];
    });
    return Ref{x.tape, id};
}

Ref permute_batch(Ref x, const std::vector<int>& idx) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    const int N = xv.dim(0);
    if (static_cast<int>(idx.size()) != N)
        throw std::invalid_argument("permute_batch: index count != batch size");
    const std::size_t per = xv.size() / static_cast<std::size_t>(N);
    Tensor out(xv.shape());
    for (int n = 0; n < N; ++n) {
        const int src = idx[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < per; ++i) out[n * per + i] = xv[src * per + i];
    }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, idx, per, N](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (int n = 0; n < N; ++n) {
            const int src = idx[static_cast<std::size_t>(n)];
            for (std::size_t i = 0; i < per; ++i) gx[src * per + i] += g[n * per + i];
        }
    });
    return Ref{x.tape, id};
}

Ref mean_per_image(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    const int N = xv.dim(0);
    const std::size_t per = xv.size() / static_cast<std::size_t>(N);
    Tensor out({N});
    for (int n = 0; n < N; ++n) {
        double s = 0.0;
        for (std::size_t i = 0; i < per; ++i) s += xv[n * per + i];
        out[static_cast<std::size_t>(n)] = s / static_cast<double>(per);
    }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, per, N](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        const double inv = 1.0 / static_cast<double>(per);
        for (int n = 0; n < N; ++n) {
            const double gn = g[static_cast<std::size_t>(n)] * inv;
            for (std::size_t i = 0; i < per; ++i) gx[n * per + i] += gn;
        }
    });
    return Ref{x.tape, id};
}

Ref sum_rows(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 2) throw std::invalid_argument("sum_rows: need [B,Z]");
    const int B = xv.dim(0), Z = xv.dim(1);
    Tensor out({B});
    for (int b = 0; b < B; ++b) {
        double s = 0.0;
        for (int z = 0; z < Z; ++z) s += xv[static_cast<std::size_t>(b) * Z + z];
        out[static_cast<std::size_t>(b)] = s;
    }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, B, Z](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (int b = 0; b < B; ++b)
            for (int z = 0; z < Z; ++z)
                gx[static_cast<std::size_t>(b) * Z + z] += g[static_cast<std::size_t>(b)];
    });
    return Ref{x.tape, id};
}

Ref mean_all(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    const std::size_t n = xv.size();
    Tensor out({1});
    out[0] = xv.sum() / static_cast<double>(n);
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, n](Tape& tp, int self) {
        const double g = tp.grad(self)[0] / static_cast<double>(n);
        Tensor& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
    return Ref{x.tape, id};
}

Ref sum_all(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    const std::size_t n = xv.size();
    Tensor out({1});
    out[0] = xv.sum();
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, n](Tape& tp, int self) {
        const double g = tp.grad(self)[0];
        Tensor& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
    return Ref{x.tape, id};
}

Ref reshape(Ref x, std::vector<int> shape) {
    Tape& t = *x.tape;
    Tensor out = t.val(x.id).reshaped(shape);
    int ix = x.id;
    int id = t.emit(std::move(out), [ix](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return Ref{x.tape, id};
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Ref linear(Ref x, Ref w, Ref b) {
    Tape& t = same_tape(x, w, "linear");
    const Tensor& xv = t.val(x.id);
    const Tensor& wv = t.val(w.id);
    if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(0))
        throw std::invalid_argument("linear: need x[B,I], w[I,O]");
    const int B = xv.dim(0), I = xv.dim(1), O = wv.dim(1);
    const bool has_bias = b.valid();
    if (has_bias && (t.val(b.id).ndim() != 1 || t.val(b.id).dim(0) != O))
        throw std::invalid_argument("linear: bias must be [O]");
    Tensor out({B, O});
    if (has_bias) {
        const Tensor& bv = t.val(b.id);
        for (int n = 0; n < B; ++n)
            for (int o = 0; o < O; ++o) out.at(n, o) = bv[static_cast<std::size_t>(o)];
    }
    for (int n = 0; n < B; ++n) {
        for (int i = 0; i < I; ++i) {
            const double xi = xv.at(n, i);
            if (xi == 0.0) continue;
            const double* wrow = wv.data() + static_cast<std::size_t>(i) * O;
            double* orow = out.data() + static_cast<std::size_t>(n) * O;
            for (int o = 0; o < O; ++o) orow[o] += xi * wrow[o];
        }
    }
    int ix = x.id, iw = w.id, ib = has_bias ? b.id : -1;
    int id = t.emit(std::move(out), [ix, iw, ib, B, I, O](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv = tp.val(ix);
        const Tensor& wv = tp.val(iw);
        Tensor& gx = tp.grad_buffer(ix);
        Tensor& gw = tp.grad_buffer(iw);
        for (int n = 0; n < B; ++n) {
            const double* grow = g.data() + static_cast<std::size_t>(n) * O;
            for (int i = 0; i < I; ++i) {
                const double* wrow = wv.data() + static_cast<std::size_t>(i) * O;
                double* gwrow = gw.data() + static_cast<std::size_t>(i) * O;
                const double xi = xv.at(n, i);
                double acc = 0.0;
                for (int o = 0; o < O; ++o) {
                    acc += grow[o] * wrow[o];
                    gwrow[o] += grow[o] * xi;
                }
                gx.at(n, i) += acc;
            }
        }
        if (ib >= 0) {
            Tensor& gb = tp.grad_buffer(ib);
            for (int n = 0; n < B; ++n)
                for (int o = 0; o < O; ++o) gb[static_cast<std::size_t>(o)] += g.at(n, o);
        }
    });
    return Ref{x.tape, id};
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

Ref conv2d(Ref x, Ref w, Ref b, int stride, int pad) {
    Tape& t = same_tape(x, w, "conv2d");
    const Tensor& xv = t.val(x.id);
    const Tensor& wv = t.val(w.id);
    if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1))
        throw std::invalid_argument("conv2d: need x[N,IC,H,W], w[OC,IC,KH,KW]");
    const int N = xv.dim(0), IC = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int OC = wv.dim(0), KH = wv.dim(2), KW = wv.dim(3);
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
    const bool has_bias = b.valid();
    Tensor out({N, OC, OH, OW});
    if (has_bias) {
        const Tensor& bv = t.val(b.id);
        for (int n = 0; n < N; ++n)
            for (int oc = 0; oc < OC; ++oc)
                for (int p = 0; p < OH * OW; ++p)
                    out.data()[((static_cast<std::size_t>(n) * OC + oc) * OH * OW) + p] =
                        bv[static_cast<std::size_t>(oc)];
    }
    for (int n = 0; n < N; ++n) {
        for (int oc = 0; oc < OC; ++oc) {
            for (int ic = 0; ic < IC; ++ic) {
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const double wval = wv.at(oc, ic, kh, kw);
                        if (wval == 0.0) continue;
                        for (int oh = 0; oh < OH; ++oh) {
                            const int ih = oh * stride + kh - pad;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow =
                                xv.data() + ((static_cast<std::size_t>(n) * IC + ic) * H + ih) * W;
                            double* orow =
                                out.data() + ((static_cast<std::size_t>(n) * OC + oc) * OH + oh) * OW;
                            for (int ow = 0; ow < OW; ++ow) {
                                const int iw = ow * stride + kw - pad;
                                if (iw < 0 || iw >= W) continue;
                                orow[ow] += wval * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    int ix = x.id, iw_ = w.id, ib = has_bias ? b.id : -1;
    int id = t.emit(std::move(out), [ix, iw_, ib, N, IC, H, W, OC, KH, KW, OH, OW, stride,
                                     pad](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv = tp.val(ix);
        const Tensor& wv = tp.val(iw_);
        Tensor& gx = tp.grad_buffer(ix);
        Tensor& gw = tp.grad_buffer(iw_);
        for (int n = 0; n < N; ++n) {
            for (int oc = 0; oc < OC; ++oc) {
                for (int ic = 0; ic < IC; ++ic) {
                    for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                            const double wval = wv.at(oc, ic, kh, kw);
                            double gwacc = 0.0;
                            for (int oh = 0; oh < OH; ++oh) {
                                const int ih = oh * stride + kh - pad;
                                if (ih < 0 || ih >= H) continue;
                                const double* grow =
                                    g.data() +
                                    ((static_cast<std::size_t>(n) * OC + oc) * OH + oh) * OW;
                                const double* xrow =
                                    xv.data() +
                                    ((static_cast<std::size_t>(n) * IC + ic) * H + ih) * W;
                                double* gxrow =
                                    gx.data() +
                                    ((static_cast<std::size_t>(n) * IC + ic) * H + ih) * W;
                                for (int ow = 0; ow < OW; ++ow) {
                                    const int iw = ow * stride + kw - pad;
                                    if (iw < 0 || iw >= W) continue;
                                    gxrow[iw] += wval * grow[ow];
                                    gwacc += grow[ow] * xrow[iw];
                                }
                            }
                            gw.at(oc, ic, kh, kw) += gwacc;
                        }
                    }
                }
            }
        }
        if (ib >= 0) {
            Tensor& gb = tp.grad_buffer(ib);
            for (int n = 0; n < N; ++n)
                for (int oc = 0; oc < OC; ++oc) {
                    double s = 0.0;
                    const double* gplane =
                        g.data() + (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
                    for (int p = 0; p < OH * OW; ++p) s += gplane[p];
                    gb[static_cast<std::size_t>(oc)] += s;
                }
        }
    });
    return Ref{x.tape, id};
}

Ref conv2d_transpose(Ref x, Ref w, Ref b, int stride, int pad, int out_pad) {
    Tape& t = same_tape(x, w, "conv2d_transpose");
    const Tensor& xv = t.val(x.id);
    const Tensor& wv = t.val(w.id);
    if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(0))
        throw std::invalid_argument("conv2d_transpose: need x[N,IC,H,W], w[IC,OC,KH,KW]");
    const int N = xv.dim(0), IC = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int OC = wv.dim(1), KH = wv.dim(2), KW = wv.dim(3);
    const int OH = (H - 1) * stride - 2 * pad + KH + out_pad;
    const int OW = (W - 1) * stride - 2 * pad + KW + out_pad;
    if (OH <= 0 || OW <= 0) throw std::invalid_argument("conv2d_transpose: empty output");
    const bool has_bias = b.valid();
    Tensor out({N, OC, OH, OW});
    if (has_bias) {
        const Tensor& bv = t.val(b.id);
        for (int n = 0; n < N; ++n)
            for (int oc = 0; oc < OC; ++oc)
                for (int p = 0; p < OH * OW; ++p)
                    out.data()[(static_cast<std::size_t>(n) * OC + oc) * OH * OW + p] =
                        bv[static_cast<std::size_t>(oc)];
    }
    for (int n = 0; n < N; ++n) {
        for (int ic = 0; ic < IC; ++ic) {
            for (int oc = 0; oc < OC; ++oc) {
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        const double wval = wv.at(ic, oc, kh, kw);
                        if (wval == 0.0) continue;
                        for (int ih = 0; ih < H; ++ih) {
                            const int oh = ih * stride + kh - pad;
                            if (oh < 0 || oh >= OH) continue;
                            const double* xrow =
                                xv.data() + ((static_cast<std::size_t>(n) * IC + ic) * H + ih) * W;
                            double* orow =
                                out.data() + ((static_cast<std::size_t>(n) * OC + oc) * OH + oh) * OW;
                            for (int iw = 0; iw < W; ++iw) {
                                const int ow = iw * stride + kw - pad;
                                if (ow < 0 || ow >= OW) continue;
                                orow[ow] += wval * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    int ix = x.id, iw_ = w.id, ib = has_bias ? b.id : -1;
    int id = t.emit(std::move(out), [ix, iw_, ib, N, IC, H, W, OC, KH, KW, OH, OW, stride,
                                     pad](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv = tp.val(ix);
        const Tensor& wv = tp.val(iw_);
        Tensor& gx = tp.grad_buffer(ix);
        Tensor& gw = tp.grad_buffer(iw_);
        for (int n = 0; n < N; ++n) {
            for (int ic = 0; ic < IC; ++ic) {
                for (int oc = 0; oc < OC; ++oc) {
                    for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                            const double wval = wv.at(ic, oc, kh, kw);
                            double gwacc = 0.0;
                            for (int ih = 0; ih < H; ++ih) {
                                const int oh = ih * stride + kh - pad;
                                if (oh < 0 || oh >= OH) continue;
                                const double* grow =
                                    g.data() +
                                    ((static_cast<std::size_t>(n) * OC + oc) * OH + oh) * OW;
                                const double* xrow =
                                    xv.data() +
                                    ((static_cast<std::size_t>(n) * IC + ic) * H + ih) * W;
                                double* gxrow =
                                    gx.data() +
                                    ((static_cast<std::size_t>(n) * IC + ic) * H + ih) * W;
                                for (int iw = 0; iw < W; ++iw) {
                                    const int ow = iw * stride + kw - pad;
                                    if (ow < 0 || ow >= OW) continue;
                                    gxrow[iw] += wval * grow[ow];
                                    gwacc += xrow[iw] * grow[ow];
                                }
                            }
                            gw.at(ic, oc, kh, kw) += gwacc;
                        }
                    }
                }
            }
        }
        if (ib >= 0) {
            Tensor& gb = tp.grad_buffer(ib);
            for (int n = 0; n < N; ++n)
                for (int oc = 0; oc < OC; ++oc) {
                    double s = 0.0;
                    const double* gplane =
                        g.data() + (static_cast<std::size_t>(n) * OC + oc) * OH * OW;
                    for (int p = 0; p < OH * OW; ++p) s += gplane[p];
                    gb[static_cast<std::size_t>(oc)] += s;
                }
        }
    });
    return Ref{x.tape, id};
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Ref avg_pool2(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 4) throw std::invalid_argument("avg_pool2: need NCHW");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int OH = H / 2, OW = W / 2;
    if (OH == 0 || OW == 0) throw std::invalid_argument("avg_pool2: input too small");
    Tensor out({N, C, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    const double s = xv.at(n, c, 2 * oh, 2 * ow) + xv.at(n, c, 2 * oh, 2 * ow + 1) +
                                     xv.at(n, c, 2 * oh + 1, 2 * ow) +
                                     xv.at(n, c, 2 * oh + 1, 2 * ow + 1);
                    out.at(n, c, oh, ow) = 0.25 * s;
                }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, N, C, OH, OW](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < OH; ++oh)
                    for (int ow = 0; ow < OW; ++ow) {
                        const double gv = 0.25 * g.at(n, c, oh, ow);
                        gx.at(n, c, 2 * oh, 2 * ow) += gv;
                        gx.at(n, c, 2 * oh, 2 * ow + 1) += gv;
                        gx.at(n, c, 2 * oh + 1, 2 * ow) += gv;
                        gx.at(n, c, 2 * oh + 1, 2 * ow + 1) += gv;
                    }
    });
    return Ref{x.tape, id};
}

Ref max_pool(Ref x, int k, int stride, int pad) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 4) throw std::invalid_argument("max_pool: need NCHW");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;
    if (OH <= 0 || OW <= 0) throw std::invalid_argument("max_pool: window larger than input");
    Tensor out({N, C, OH, OW});
    std::vector<std::size_t> arg(out.size());
    std::size_t o = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++o) {
                    double best = -1e300;
                    std::size_t best_i = 0;
                    for (int kh = 0; kh < k; ++kh) {
                        const int ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= H) continue;
                        for (int kw = 0; kw < k; ++kw) {
                            const int iw = ow * stride + kw - pad;
                            if (iw < 0 || iw >= W) continue;
                            const std::size_t i =
                                ((static_cast<std::size_t>(n) * C + c) * H + ih) * W + iw;
                            if (xv[i] > best) {
                                best = xv[i];
                                best_i = i;
                            }
                        }
                    }
                    out[o] = best;
                    arg[o] = best_i;
                }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, arg = std::move(arg)](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i]] += g[i];
    });
    return Ref{x.tape, id};
}

Ref global_avg_pool(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 4) throw std::invalid_argument("global_avg_pool: need NCHW");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = xv.data() + (static_cast<std::size_t>(n) * C + c) * hw;
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += p[i];
            out.at(n, c) = s / static_cast<double>(hw);
        }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, N, C, hw](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double gv = g.at(n, c) / static_cast<double>(hw);
                double* p = gx.data() + (static_cast<std::size_t>(n) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] += gv;
            }
    });
    return Ref{x.tape, id};
}

Ref mean_channels(Ref x) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 4) throw std::invalid_argument("mean_channels: need NCHW");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Tensor out({N, 1, H, W});
    const double inv = 1.0 / static_cast<double>(C);
    for (int n = 0; n < N; ++n) {
        double* op = out.data() + static_cast<std::size_t>(n) * hw;
        for (int c = 0; c < C; ++c) {
            const double* p = xv.data() + (static_cast<std::size_t>(n) * C + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) op[i] += p[i] * inv;
        }
    }
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, N, C, hw, inv](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        for (int n = 0; n < N; ++n) {
            const double* gp = g.data() + static_cast<std::size_t>(n) * hw;
            for (int c = 0; c < C; ++c) {
                double* p = gx.data() + (static_cast<std::size_t>(n) * C + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) p[i] += gp[i] * inv;
            }
        }
    });
    return Ref{x.tape, id};
}

// ---------------------------------------------------------------------------
// Box mean with clipped windows
// ---------------------------------------------------------------------------

namespace {

// One 1-D pass over lines of length `len` with element stride `stride`.
// Window [i - lo, i + hi] clipped to [0, len). If `normalize`, divide by the
// clipped window length (mean); otherwise plain sum.
void box_line(const double* in, double* out, int len, std::size_t stride, int lo, int hi,
              bool normalize) {
    for (int i = 0; i < len; ++i) {
        const int a = std::max(0, i - lo);
        const int b = std::min(len - 1, i + hi);
        double s;
        if (i == 0) {
            s = 0.0;
            for (int j = a; j <= b; ++j) s += in[static_cast<std::size_t>(j) * stride];
        } else {
            // Incremental update from the previous window.
            s = out[static_cast<std::size_t>(i - 1) * stride];  // holds raw sum temporarily
            const int pa = std::max(0, i - 1 - lo);
            const int pb = std::min(len - 1, i - 1 + hi);
            if (a > pa) s -= in[static_cast<std::size_t>(pa) * stride];
            if (b > pb) s += in[static_cast<std::size_t>(b) * stride];
        }
        out[static_cast<std::size_t>(i) * stride] = s;
    }
    if (normalize) {
        for (int i = 0; i < len; ++i) {
            const int a = std::max(0, i - lo);
            const int b = std::min(len - 1, i + hi);
            out[static_cast<std::size_t>(i) * stride] /= static_cast<double>(b - a + 1);
        }
    }
}

// Apply box_line along W then H for every (n, c) plane.
void box_2d(const Tensor& in, Tensor& out, int N, int C, int H, int W, int lo, int hi,
            bool normalize) {
    Tensor tmp({H, W});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const double* src = in.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            double* dst = out.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int h = 0; h < H; ++h)
                box_line(src + static_cast<std::size_t>(h) * W, tmp.data() + static_cast<std::size_t>(h) * W,
                         W, 1, lo, hi, normalize);
            for (int w = 0; w < W; ++w)
                box_line(tmp.data() + w, dst + w, H, static_cast<std::size_t>(W), lo, hi, normalize);
        }
    }
}

}  // namespace

Ref box_mean(Ref x, int k) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 4) throw std::invalid_argument("box_mean: need NCHW");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (k < 1 || k > H || k > W) throw std::invalid_argument("box_mean: window does not fit");
    const int lo = (k - 1) / 2, hi = k - 1 - lo;
    Tensor out({N, C, H, W});
    box_2d(xv, out, N, C, H, W, lo, hi, true);
    int ix = x.id;
    int id = t.emit(std::move(out), [ix, N, C, H, W, lo, hi](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(ix);
        // Adjoint: divide by per-position window size, then box-sum with
        // swapped offsets.
        Tensor scaled({N, C, H, W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h) {
                    const int ca = std::max(0, h - lo), cb = std::min(H - 1, h + hi);
                    const double ch = static_cast<double>(cb - ca + 1);
                    for (int w = 0; w < W; ++w) {
                        const int wa = std::max(0, w - lo), wb = std::min(W - 1, w + hi);
                        scaled.at(n, c, h, w) =
                            g.at(n, c, h, w) / (ch * static_cast<double>(wb - wa + 1));
                    }
                }
        Tensor summed({N, C, H, W});
        box_2d(scaled, summed, N, C, H, W, hi, lo, false);
        for (std::size_t i = 0; i < summed.size(); ++i) gx[i] += summed[i];
    });
    return Ref{x.tape, id};
}

Ref upsample_shift(Ref x, int out_h, int out_w, int shift) {
    Tape& t = *x.tape;
    const Tensor& xv = t.val(x.id);
    if (xv.ndim() != 4) throw std::invalid_argument("upsample_shift: need NCHW");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor out({N, C, out_h, out_w});
    std::vector<int> iy(static_cast<std::size_t>(out_h)), ix_map(static_cast<std::size_t>(out_w));
    for (int p = 0; p < out_h; ++p) iy[static_cast<std::size_t>(p)] = std::min(p >> shift, H - 1);
    for (int q = 0; q < out_w; ++q) ix_map[static_cast<std::size_t>(q)] = std::min(q >> shift, W - 1);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < out_h; ++p)
                for (int q = 0; q < out_w; ++q)
                    out.at(n, c, p, q) = xv.at(n, c, iy[static_cast<std::size_t>(p)],
                                               ix_map[static_cast<std::size_t>(q)]);
    int id_x = x.id;
    int id = t.emit(std::move(out), [id_x, N, C, out_h, out_w, iy = std::move(iy),
                                     ix_map = std::move(ix_map)](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(id_x);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int p = 0; p < out_h; ++p)
                    for (int q = 0; q < out_w; ++q)
                        gx.at(n, c, iy[static_cast<std::size_t>(p)],
                              ix_map[static_cast<std::size_t>(q)]) += g.at(n, c, p, q);
    });
    return Ref{x.tape, id};
}

}  // namespace igd
