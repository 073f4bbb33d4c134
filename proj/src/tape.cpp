#include "cvae/tape.hpp"

#include <Eigen/Core>
#include <cmath>

#include "cvae/parallel.hpp"

namespace cvae {

namespace {

using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RM>;
using CMapRM = Eigen::Map<const RM>;
using MapArr = Eigen::Map<Eigen::ArrayXd>;
using CMapArr = Eigen::Map<const Eigen::ArrayXd>;

MapArr arr(Tensor& t) { return MapArr(t.data(), t.size()); }
[[maybe_unused]] CMapArr arr(const Tensor& t) { return CMapArr(t.data(), t.size()); }

bool any_grad(Var a, Var b = nullptr) {
    return a->requires_grad || (b && b->requires_grad);
}

// Gathers k x k patches of src (C x Hs x Ws) for every cell of a Ht x Wt
// target grid into buf (Ht*Wt rows, C*kh*kw cols). Out-of-range taps are 0.
void im2col(const double* src, int c, int hs, int ws, int kh, int kw, int sh,
            int sw, int ph, int pw, int ht, int wt, double* buf) {
    const int cols = c * kh * kw;
    for (int i = 0; i < ht; ++i) {
        for (int j = 0; j < wt; ++j) {
            double* row = buf + (static_cast<int64_t>(i) * wt + j) * cols;
            for (int ch = 0; ch < c; ++ch) {
                const double* plane = src + static_cast<int64_t>(ch) * hs * ws;
                for (int ki = 0; ki < kh; ++ki) {
                    int y = i * sh - ph + ki;
                    for (int kj = 0; kj < kw; ++kj) {
                        int x = j * sw - pw + kj;
                        *row++ = (y >= 0 && y < hs && x >= 0 && x < ws)
                                     ? plane[static_cast<int64_t>(y) * ws + x]
                                     : 0.0;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds buf back into dst (C x Hs x Ws).
void col2im_add(const double* buf, int c, int hs, int ws, int kh, int kw,
                int sh, int sw, int ph, int pw, int ht, int wt, double* dst) {
    const int cols = c * kh * kw;
    for (int i = 0; i < ht; ++i) {
        for (int j = 0; j < wt; ++j) {
            const double* row = buf + (static_cast<int64_t>(i) * wt + j) * cols;
            for (int ch = 0; ch < c; ++ch) {
                double* plane = dst + static_cast<int64_t>(ch) * hs * ws;
                for (int ki = 0; ki < kh; ++ki) {
                    int y = i * sh - ph + ki;
                    for (int kj = 0; kj < kw; ++kj) {
                        int x = j * sw - pw + kj;
                        double v = *row++;
                        if (y >= 0 && y < hs && x >= 0 && x < ws)
                            plane[static_cast<int64_t>(y) * ws + x] += v;
                    }
                }
            }
        }
    }
}

}  // namespace

Var Tape::alloc(Tensor val, bool requires_grad) {
    auto node = std::make_unique<Node>();
    node->val = std::move(val);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad = Tensor(node->val.shape());
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Var Tape::leaf(Param& p) {
    Var v = alloc(p.value, true);
    Param* pp = &p;
    v->backward = [pp](Node& o) { arr(pp->grad) += arr(o.grad); };
    return v;
}

void Tape::backward(Var loss) {
    if (loss->val.size() != 1)
        throw std::logic_error("Tape::backward: loss must be scalar");
    if (!loss->requires_grad)
        throw std::logic_error("Tape::backward: loss does not require grad");
    loss->grad.fill(1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.requires_grad && n.backward) n.backward(n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(Tape& t, Var a, Var b) {
    check_same_shape(a->val, b->val, "add");
    Tensor v(a->val.shape());
    arr(v) = arr(a->val) + arr(b->val);
    Var out = t.alloc(std::move(v), any_grad(a, b));
    if (out->requires_grad)
        out->backward = [a, b](Node& o) {
            if (a->requires_grad) arr(a->grad) += arr(o.grad);
            if (b->requires_grad) arr(b->grad) += arr(o.grad);
        };
    return out;
}

Var sub(Tape& t, Var a, Var b) {
    check_same_shape(a->val, b->val, "sub");
    Tensor v(a->val.shape());
    arr(v) = arr(a->val) - arr(b->val);
    Var out = t.alloc(std::move(v), any_grad(a, b));
    if (out->requires_grad)
        out->backward = [a, b](Node& o) {
            if (a->requires_grad) arr(a->grad) += arr(o.grad);
            if (b->requires_grad) arr(b->grad) -= arr(o.grad);
        };
    return out;
}

Var mul(Tape& t, Var a, Var b) {
    check_same_shape(a->val, b->val, "mul");
    Tensor v(a->val.shape());
    arr(v) = arr(a->val) * arr(b->val);
    Var out = t.alloc(std::move(v), any_grad(a, b));
    if (out->requires_grad)
        out->backward = [a, b](Node& o) {
            if (a->requires_grad) arr(a->grad) += arr(o.grad) * arr(b->val);
            if (b->requires_grad) arr(b->grad) += arr(o.grad) * arr(a->val);
        };
    return out;
}

Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

Var scale(Tape& t, Var a, double c) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val) * c;
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a, c](Node& o) { arr(a->grad) += arr(o.grad) * c; };
    return out;
}

Var add_scalar(Tape& t, Var a, double c) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val) + c;
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) { arr(a->grad) += arr(o.grad); };
    return out;
}

Var exp_(Tape& t, Var a) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val).exp();
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) { arr(a->grad) += arr(o.grad) * arr(o.val); };
    return out;
}

Var log_(Tape& t, Var a) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val).log();
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) { arr(a->grad) += arr(o.grad) / arr(a->val); };
    return out;
}

Var square(Tape& t, Var a) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val).square();
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) {
            arr(a->grad) += 2.0 * arr(o.grad) * arr(a->val);
        };
    return out;
}

Var tanh_(Tape& t, Var a) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val).tanh();
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) {
            arr(a->grad) += arr(o.grad) * (1.0 - arr(o.val).square());
        };
    return out;
}

Var sigmoid(Tape& t, Var a) {
    Tensor v(a->val.shape());
    auto x = arr(a->val);
    arr(v) = 0.5 * (0.5 * x).tanh() + 0.5;  // numerically stable logistic
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) {
            arr(a->grad) += arr(o.grad) * arr(o.val) * (1.0 - arr(o.val));
        };
    return out;
}

Var elu(Tape& t, Var a) {
    Tensor v(a->val.shape());
    for (int64_t i = 0; i < v.size(); ++i) {
        double x = a->val[i];
        v[i] = x > 0.0 ? x : std::expm1(x);
    }
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) {
            for (int64_t i = 0; i < o.grad.size(); ++i) {
                double x = a->val[i];
                a->grad[i] += o.grad[i] * (x > 0.0 ? 1.0 : std::exp(x));
            }
        };
    return out;
}

Var scaled_tanh(Tape& t, Var a, double m) {
    Tensor v(a->val.shape());
    arr(v) = m * (arr(a->val) / m).tanh();
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a, m](Node& o) {
            arr(a->grad) += arr(o.grad) * (1.0 - (arr(o.val) / m).square());
        };
    return out;
}

Var clamp(Tape& t, Var a, double lo, double hi) {
    Tensor v(a->val.shape());
    arr(v) = arr(a->val).max(lo).min(hi);
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a, lo, hi](Node& o) {
            for (int64_t i = 0; i < o.grad.size(); ++i) {
                double x = a->val[i];
                if (x > lo && x < hi) a->grad[i] += o.grad[i];
            }
        };
    return out;
}

// ------------------------------------------------------------- reductions etc.

Var sum_all(Tape& t, Var a) {
    Var out = t.alloc(Tensor::scalar(arr(a->val).sum()), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) { arr(a->grad) += o.grad[0]; };
    return out;
}

Var mean_all(Tape& t, Var a) {
    return scale(t, sum_all(t, a), 1.0 / static_cast<double>(a->val.size()));
}

Var sum_cols(Tape& t, Var a) {
    if (a->val.ndim() != 2) throw std::invalid_argument("sum_cols: expects [N,M]");
    int n = a->val.dim(0), m = a->val.dim(1);
    Tensor v({n});
    CMapRM A(a->val.data(), n, m);
    for (int i = 0; i < n; ++i) v[i] = A.row(i).sum();
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a, n, m](Node& o) {
            MapRM G(a->grad.data(), n, m);
            for (int i = 0; i < n; ++i) G.row(i).array() += o.grad[i];
        };
    return out;
}

Var reshape(Tape& t, Var a, std::vector<int> shape) {
    Var out = t.alloc(a->val.reshaped(std::move(shape)), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a](Node& o) { arr(a->grad) += arr(o.grad); };
    return out;
}

Var slice_cols(Tape& t, Var a, int start, int len) {
    if (a->val.ndim() != 2) throw std::invalid_argument("slice_cols: expects [N,M]");
    int n = a->val.dim(0), m = a->val.dim(1);
    if (start < 0 || len < 0 || start + len > m)
        throw std::invalid_argument("slice_cols: range out of bounds");
    Tensor v({n, len});
    CMapRM A(a->val.data(), n, m);
    MapRM V(v.data(), n, len);
    V = A.middleCols(start, len);
    Var out = t.alloc(std::move(v), a->requires_grad);
    if (out->requires_grad)
        out->backward = [a, start, len, n, m](Node& o) {
            MapRM G(a->grad.data(), n, m);
            CMapRM Og(o.grad.data(), n, len);
            G.middleCols(start, len) += Og;
        };
    return out;
}

Var concat_cols(Tape& t, Var a, Var b) {
    if (a->val.ndim() != 2 || b->val.ndim() != 2 || a->val.dim(0) != b->val.dim(0))
        throw std::invalid_argument("concat_cols: incompatible shapes");
    int n = a->val.dim(0), ma = a->val.dim(1), mb = b->val.dim(1);
    Tensor v({n, ma + mb});
    MapRM V(v.data(), n, ma + mb);
    V.leftCols(ma) = CMapRM(a->val.data(), n, ma);
    V.rightCols(mb) = CMapRM(b->val.data(), n, mb);
    Var out = t.alloc(std::move(v), any_grad(a, b));
    if (out->requires_grad)
        out->backward = [a, b, n, ma, mb](Node& o) {
            CMapRM Og(o.grad.data(), n, ma + mb);
            if (a->requires_grad) MapRM(a->grad.data(), n, ma) += Og.leftCols(ma);
            if (b->requires_grad) MapRM(b->grad.data(), n, mb) += Og.rightCols(mb);
        };
    return out;
}

Var detach(Tape& t, Var a) { return t.constant(a->val); }

// --------------------------------------------------------------- image ops

Var broadcast_planes(Tape& t, Var y, int h, int w) {
    if (y->val.ndim() != 2) throw std::invalid_argument("broadcast_planes: expects [N,A]");
    int n = y->val.dim(0), a = y->val.dim(1);
    Tensor v({n, a, h, w});
    int64_t plane = static_cast<int64_t>(h) * w;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < a; ++j) {
            double x = y->val[static_cast<int64_t>(i) * a + j];
            double* dst = v.data() + (static_cast<int64_t>(i) * a + j) * plane;
            std::fill(dst, dst + plane, x);
        }
    Var out = t.alloc(std::move(v), y->requires_grad);
    if (out->requires_grad)
        out->backward = [y, n, a, plane](Node& o) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < a; ++j) {
                    const double* g = o.grad.data() +
                                      (static_cast<int64_t>(i) * a + j) * plane;
                    double s = 0;
                    for (int64_t k = 0; k < plane; ++k) s += g[k];
                    y->grad[static_cast<int64_t>(i) * a + j] += s;
                }
        };
    return out;
}

Var concat_channels(Tape& t, Var a, Var b) {
    const auto& sa = a->val.shape();
    const auto& sb = b->val.shape();
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] ||
        sa[3] != sb[3])
        throw std::invalid_argument("concat_channels: incompatible shapes");
    int n = sa[0], ca = sa[1], cb = sb[1], h = sa[2], w = sa[3];
    int64_t plane = static_cast<int64_t>(h) * w;
    Tensor v({n, ca + cb, h, w});
    for (int i = 0; i < n; ++i) {
        double* dst = v.data() + static_cast<int64_t>(i) * (ca + cb) * plane;
        std::copy_n(a->val.data() + static_cast<int64_t>(i) * ca * plane, ca * plane, dst);
        std::copy_n(b->val.data() + static_cast<int64_t>(i) * cb * plane, cb * plane,
                    dst + ca * plane);
    }
    Var out = t.alloc(std::move(v), any_grad(a, b));
    if (out->requires_grad)
        out->backward = [a, b, n, ca, cb, plane](Node& o) {
            for (int i = 0; i < n; ++i) {
                const double* g = o.grad.data() + static_cast<int64_t>(i) * (ca + cb) * plane;
                if (a->requires_grad) {
                    double* ga = a->grad.data() + static_cast<int64_t>(i) * ca * plane;
                    for (int64_t k = 0; k < ca * plane; ++k) ga[k] += g[k];
                }
                if (b->requires_grad) {
                    double* gb = b->grad.data() + static_cast<int64_t>(i) * cb * plane;
                    for (int64_t k = 0; k < cb * plane; ++k) gb[k] += g[ca * plane + k];
                }
            }
        };
    return out;
}

// ------------------------------------------------------------------- linear

Var linear(Tape& t, Var x, Var w, Var b) {
    if (x->val.ndim() != 2 || w->val.ndim() != 2 || b->val.ndim() != 1)
        throw std::invalid_argument("linear: expects x[N,I], w[O,I], b[O]");
    int n = x->val.dim(0), in = x->val.dim(1);
    int out_dim = w->val.dim(0);
    if (w->val.dim(1) != in || b->val.dim(0) != out_dim)
        throw std::invalid_argument("linear: dimension mismatch");
    Tensor v({n, out_dim});
    {
        CMapRM X(x->val.data(), n, in);
        CMapRM W(w->val.data(), out_dim, in);
        CMapArr B(b->val.data(), out_dim);
        MapRM Y(v.data(), n, out_dim);
        Y.noalias() = X * W.transpose();
        Y.rowwise() += B.matrix().transpose();
    }
    Var out = t.alloc(std::move(v), any_grad(x, w) || b->requires_grad);
    if (out->requires_grad)
        out->backward = [x, w, b, n, in, out_dim](Node& o) {
            CMapRM Og(o.grad.data(), n, out_dim);
            if (x->requires_grad) {
                CMapRM W(w->val.data(), out_dim, in);
                MapRM Gx(x->grad.data(), n, in);
                Gx.noalias() += Og * W;
            }
            if (w->requires_grad) {
                CMapRM X(x->val.data(), n, in);
                MapRM Gw(w->grad.data(), out_dim, in);
                Gw.noalias() += Og.transpose() * X;
            }
            if (b->requires_grad) {
                MapArr Gb(b->grad.data(), out_dim);
                Gb += Og.colwise().sum().array().transpose();
            }
        };
    return out;
}

// --------------------------------------------------------------------- conv

Var conv2d(Tape& t, Var x, Var w, Var b, int sh, int sw, int ph, int pw) {
    const auto& xs = x->val.shape();
    const auto& ws = w->val.shape();
    if (xs.size() != 4 || ws.size() != 4)
        throw std::invalid_argument("conv2d: expects x[N,Ci,H,W], w[Co,Ci,kh,kw]");
    int n = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
    int co = ws[0], kh = ws[2], kw = ws[3];
    if (ws[1] != ci || b->val.size() != co)
        throw std::invalid_argument("conv2d: channel mismatch");
    int ho = (h + 2 * ph - kh) / sh + 1;
    int wo = (wd + 2 * pw - kw) / sw + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");

    const int cols = ci * kh * kw;
    const int64_t in_sz = static_cast<int64_t>(ci) * h * wd;
    const int64_t out_sz = static_cast<int64_t>(co) * ho * wo;
    Tensor v({n, co, ho, wo});
    {
        CMapRM W(w->val.data(), co, cols);
        CMapArr B(b->val.data(), co);
        parallel_for(n, [&](int64_t lo, int64_t hi, int) {
            std::vector<double> buf(static_cast<size_t>(ho) * wo * cols);
            for (int64_t i = lo; i < hi; ++i) {
                im2col(x->val.data() + i * in_sz, ci, h, wd, kh, kw, sh, sw, ph,
                       pw, ho, wo, buf.data());
                CMapRM C(buf.data(), ho * wo, cols);
                MapRM Y(v.data() + i * out_sz, co, ho * wo);
                Y.noalias() = W * C.transpose();
                Y.colwise() += B.matrix();
            }
        });
    }
    Var out = t.alloc(std::move(v), any_grad(x, w) || b->requires_grad);
    if (!out->requires_grad) return out;

    out->backward = [=](Node& o) {
        CMapRM W(w->val.data(), co, cols);
        int nt = num_threads();
        std::vector<std::vector<double>> gw_part, gb_part;
        if (w->requires_grad)
            gw_part.assign(static_cast<size_t>(nt), std::vector<double>(w->val.size(), 0.0));
        if (b->requires_grad)
            gb_part.assign(static_cast<size_t>(nt), std::vector<double>(static_cast<size_t>(co), 0.0));
        parallel_for(n, [&](int64_t lo, int64_t hi, int tid) {
            std::vector<double> buf(static_cast<size_t>(ho) * wo * cols);
            std::vector<double> dcol(static_cast<size_t>(ho) * wo * cols);
            for (int64_t i = lo; i < hi; ++i) {
                CMapRM Og(o.grad.data() + i * out_sz, co, ho * wo);
                if (x->requires_grad) {
                    MapRM Dc(dcol.data(), ho * wo, cols);
                    Dc.noalias() = Og.transpose() * W;
                    col2im_add(dcol.data(), ci, h, wd, kh, kw, sh, sw, ph, pw,
                               ho, wo, x->grad.data() + i * in_sz);
                }
                if (w->requires_grad) {
                    im2col(x->val.data() + i * in_sz, ci, h, wd, kh, kw, sh, sw,
                           ph, pw, ho, wo, buf.data());
                    CMapRM C(buf.data(), ho * wo, cols);
                    MapRM Gw(gw_part[static_cast<size_t>(tid)].data(), co, cols);
                    Gw.noalias() += Og * C;
                }
                if (b->requires_grad) {
                    MapArr Gb(gb_part[static_cast<size_t>(tid)].data(), co);
                    Gb += Og.rowwise().sum().array();
                }
            }
        });
        // Reduce partials in fixed chunk order.
        if (w->requires_grad)
            for (auto& part : gw_part) arr(w->grad) += CMapArr(part.data(), w->grad.size());
        if (b->requires_grad)
            for (auto& part : gb_part) arr(b->grad) += CMapArr(part.data(), co);
    };
    return out;
}

Var conv_transpose2d(Tape& t, Var x, Var w, Var b, int sh, int sw, int ph,
                     int pw, int oph, int opw) {
    const auto& xs = x->val.shape();
    const auto& ws = w->val.shape();
    if (xs.size() != 4 || ws.size() != 4)
        throw std::invalid_argument("conv_transpose2d: expects x[N,Ci,H,W], w[Ci,Co,kh,kw]");
    int n = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
    int co = ws[1], kh = ws[2], kw = ws[3];
    if (ws[0] != ci || b->val.size() != co)
        throw std::invalid_argument("conv_transpose2d: channel mismatch");
    if (oph >= sh || opw >= sw)
        throw std::invalid_argument("conv_transpose2d: output padding must be < stride");
    int ho = (h - 1) * sh - 2 * ph + kh + oph;
    int wo = (wd - 1) * sw - 2 * pw + kw + opw;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv_transpose2d: empty output");

    const int cols = co * kh * kw;
    const int64_t in_sz = static_cast<int64_t>(ci) * h * wd;
    const int64_t out_sz = static_cast<int64_t>(co) * ho * wo;
    Tensor v({n, co, ho, wo});
    {
        CMapRM W(w->val.data(), ci, cols);
        CMapArr B(b->val.data(), co);
        parallel_for(n, [&](int64_t lo, int64_t hi, int) {
            std::vector<double> colbuf(static_cast<size_t>(h) * wd * cols);
            for (int64_t i = lo; i < hi; ++i) {
                CMapRM X(x->val.data() + i * in_sz, ci, h * wd);
                MapRM C(colbuf.data(), h * wd, cols);
                C.noalias() = X.transpose() * W;
                double* out_img = v.data() + i * out_sz;
                col2im_add(colbuf.data(), co, ho, wo, kh, kw, sh, sw, ph, pw, h,
                           wd, out_img);
                MapRM Y(out_img, co, ho * wo);
                Y.colwise() += B.matrix();
            }
        });
    }
    Var out = t.alloc(std::move(v), any_grad(x, w) || b->requires_grad);
    if (!out->requires_grad) return out;

    out->backward = [=](Node& o) {
        CMapRM W(w->val.data(), ci, cols);
        int nt = num_threads();
        std::vector<std::vector<double>> gw_part, gb_part;
        if (w->requires_grad)
            gw_part.assign(static_cast<size_t>(nt), std::vector<double>(w->val.size(), 0.0));
        if (b->requires_grad)
            gb_part.assign(static_cast<size_t>(nt), std::vector<double>(static_cast<size_t>(co), 0.0));
        parallel_for(n, [&](int64_t lo, int64_t hi, int tid) {
            std::vector<double> dcol(static_cast<size_t>(h) * wd * cols);
            for (int64_t i = lo; i < hi; ++i) {
                im2col(o.grad.data() + i * out_sz, co, ho, wo, kh, kw, sh, sw,
                       ph, pw, h, wd, dcol.data());
                CMapRM Dc(dcol.data(), h * wd, cols);
                if (x->requires_grad) {
                    MapRM Gx(x->grad.data() + i * in_sz, ci, h * wd);
                    Gx.noalias() += (Dc * W.transpose()).transpose();
                }
                if (w->requires_grad) {
                    CMapRM X(x->val.data() + i * in_sz, ci, h * wd);
                    MapRM Gw(gw_part[static_cast<size_t>(tid)].data(), ci, cols);
                    Gw.noalias() += X * Dc;
                }
                if (b->requires_grad) {
                    CMapRM Og(o.grad.data() + i * out_sz, co, ho * wo);
                    MapArr Gb(gb_part[static_cast<size_t>(tid)].data(), co);
                    Gb += Og.rowwise().sum().array();
                }
            }
        });
        if (w->requires_grad)
            for (auto& part : gw_part) arr(w->grad) += CMapArr(part.data(), w->grad.size());
        if (b->requires_grad)
            for (auto& part : gb_part) arr(b->grad) += CMapArr(part.data(), co);
    };
    return out;
}

}  // namespace cvae
