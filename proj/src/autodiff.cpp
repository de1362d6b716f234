#include "proxbo/autodiff.hpp"

#include "proxbo/errors.hpp"

#include <cmath>
#include <string>

namespace proxbo::nn {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw InputError(std::string("autodiff: ") + what);
}

}  // namespace

Var Tape::push(Tensor value, bool needs_grad) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = record_ && needs_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor t) { return push(std::move(t), false); }

Var Tape::param(Parameter& p) {
    Node n;
    n.param = &p;
    n.needs_grad = record_;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
    require(!record_, "const parameter on a recording tape");
    Node n;
    n.param = const_cast<Parameter*>(&p);  // never written: no grads without recording
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Tensor& Tape::grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) return n.param->grad;
    if (n.grad.shape.empty()) n.grad = Tensor(n.owned.shape);
    return n.grad;
}

void Tape::backward(Var loss) {
    require(record_, "backward on a non-recording tape");
    require(value(loss).size() == 1, "backward needs a scalar loss");
    grad(loss)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back && !n.grad.shape.empty()) n.back();
    }
}

Var Tape::conv1d(Var xv, Var wv, Var bv) {
    const Tensor& x = value(xv);
    const Tensor& w = value(wv);
    const Tensor& b = value(bv);
    require(x.rank() == 3 && w.rank() == 3 && b.rank() == 1, "conv1d shapes");
    const std::size_t B = x.dim(0), L = x.dim(1), Cin = x.dim(2);
    const std::size_t K = w.dim(0), Cout = w.dim(2);
    require(w.dim(1) == Cin && b.dim(0) == Cout && K % 2 == 1, "conv1d shapes");
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(K / 2);

    Tensor out({B, L, Cout});
    for (std::size_t bi = 0; bi < B; ++bi) {
        for (std::size_t l = 0; l < L; ++l) {
            double* o = &out.data[(bi * L + l) * Cout];
            for (std::size_t co = 0; co < Cout; ++co) o[co] = b.data[co];
            for (std::size_t k = 0; k < K; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + k) - pad;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
                const double* xr = &x.data[(bi * L + static_cast<std::size_t>(src)) * Cin];
                const double* wk = &w.data[k * Cin * Cout];
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const double xv_ = xr[ci];
                    if (xv_ == 0.0) continue;
                    const double* wr = wk + ci * Cout;
                    for (std::size_t co = 0; co < Cout; ++co) o[co] += xv_ * wr[co];
                }
            }
        }
    }
    const Var out_v = push(std::move(out), needs(xv) || needs(wv) || needs(bv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, wv, bv, out_v, B, L, Cin, K, Cout, pad] {
        const Tensor& g = nodes_[out_v.id].grad;
        const Tensor& x = value(xv);
        const Tensor& w = value(wv);
        const bool gx_on = needs(xv), gw_on = needs(wv), gb_on = needs(bv);
        Tensor* gx = gx_on ? &grad(xv) : nullptr;
        Tensor* gw = gw_on ? &grad(wv) : nullptr;
        Tensor* gb = gb_on ? &grad(bv) : nullptr;
        for (std::size_t bi = 0; bi < B; ++bi) {
            for (std::size_t l = 0; l < L; ++l) {
                const double* go = &g.data[(bi * L + l) * Cout];
                if (gb)
                    for (std::size_t co = 0; co < Cout; ++co) gb->data[co] += go[co];
                for (std::size_t k = 0; k < K; ++k) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l + k) - pad;
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
                    const std::size_t xoff = (bi * L + static_cast<std::size_t>(src)) * Cin;
                    const double* xr = &x.data[xoff];
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        const std::size_t woff = (k * Cin + ci) * Cout;
                        if (gw) {
                            const double xv_ = xr[ci];
                            if (xv_ != 0.0) {
                                double* gwr = &gw->data[woff];
                                for (std::size_t co = 0; co < Cout; ++co) gwr[co] += xv_ * go[co];
                            }
                        }
                        if (gx) {
                            const double* wr = &w.data[woff];
                            double acc = 0.0;
                            for (std::size_t co = 0; co < Cout; ++co) acc += wr[co] * go[co];
                            gx->data[xoff + ci] += acc;
                        }
                    }
                }
            }
        }
    };
    return out_v;
}

Var Tape::dense(Var xv, Var wv, Var bv) {
    const Var m = matmul(xv, wv);
    const Tensor& b = value(bv);
    require(b.rank() == 1 && b.dim(0) == value(m).dim(1), "dense bias shape");
    Tensor out = value(m);
    const std::size_t B = out.dim(0), O = out.dim(1);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t o = 0; o < O; ++o) out.data[i * O + o] += b.data[o];
    const Var out_v = push(std::move(out), needs(m) || needs(bv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, m, bv, out_v, B, O] {
        const Tensor& g = nodes_[out_v.id].grad;
        if (needs(m)) {
            Tensor& gm = grad(m);
            for (std::size_t i = 0; i < g.size(); ++i) gm.data[i] += g.data[i];
        }
        if (needs(bv)) {
            Tensor& gb = grad(bv);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t o = 0; o < O; ++o) gb.data[o] += g.data[i * O + o];
        }
    };
    return out_v;
}

Var Tape::matmul(Var xv, Var wv) {
    const Tensor& x = value(xv);
    const Tensor& w = value(wv);
    require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0), "matmul shapes");
    const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(1);
    Tensor out({B, O});
    for (std::size_t i = 0; i < B; ++i) {
        double* o = &out.data[i * O];
        for (std::size_t f = 0; f < F; ++f) {
            const double xf = x.data[i * F + f];
            if (xf == 0.0) continue;
            const double* wr = &w.data[f * O];
            for (std::size_t c = 0; c < O; ++c) o[c] += xf * wr[c];
        }
    }
    const Var out_v = push(std::move(out), needs(xv) || needs(wv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, wv, out_v, B, F, O] {
        const Tensor& g = nodes_[out_v.id].grad;
        const Tensor& x = value(xv);
        const Tensor& w = value(wv);
        if (needs(wv)) {
            Tensor& gw = grad(wv);
            for (std::size_t i = 0; i < B; ++i) {
                const double* gr = &g.data[i * O];
                for (std::size_t f = 0; f < F; ++f) {
                    const double xf = x.data[i * F + f];
                    if (xf == 0.0) continue;
                    double* gwr = &gw.data[f * O];
                    for (std::size_t c = 0; c < O; ++c) gwr[c] += xf * gr[c];
                }
            }
        }
        if (needs(xv)) {
            Tensor& gx = grad(xv);
            for (std::size_t i = 0; i < B; ++i) {
                const double* gr = &g.data[i * O];
                for (std::size_t f = 0; f < F; ++f) {
                    const double* wr = &w.data[f * O];
                    double acc = 0.0;
                    for (std::size_t c = 0; c < O; ++c) acc += wr[c] * gr[c];
                    gx.data[i * F + f] += acc;
                }
            }
        }
    };
    return out_v;
}

Var Tape::add(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    require(a.shape == b.shape, "add shapes");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    const Var out_v = push(std::move(out), needs(av) || needs(bv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, av, bv, out_v] {
        const Tensor& g = nodes_[out_v.id].grad;
        for (Var v : {av, bv}) {
            if (!needs(v)) continue;
            Tensor& gv = grad(v);
            for (std::size_t i = 0; i < g.size(); ++i) gv.data[i] += g.data[i];
        }
    };
    return out_v;
}

Var Tape::relu(Var xv) {
    Tensor out = value(xv);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const Var out_v = push(std::move(out), needs(xv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, out_v] {
        const Tensor& g = nodes_[out_v.id].grad;
        const Tensor& x = value(xv);
        Tensor& gx = grad(xv);
        const bool pass_through = fault_ == BackwardFault::relu_pass_through;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pass_through || x.data[i] > 0.0) gx.data[i] += g.data[i];
    };
    return out_v;
}

Var Tape::tanh(Var xv) {
    Tensor out = value(xv);
    for (double& v : out.data) v = std::tanh(v);
    const Var out_v = push(std::move(out), needs(xv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, out_v] {
        const Tensor& g = nodes_[out_v.id].grad;
        const Tensor& y = nodes_[out_v.id].owned;
        Tensor& gx = grad(xv);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    };
    return out_v;
}

Var Tape::mean_pool(Var xv) {
    const Tensor& x = value(xv);
    require(x.rank() == 3, "mean_pool expects [B,L,C]");
    const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
    Tensor out({B, C});
    const double inv = 1.0 / static_cast<double>(L);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t c = 0; c < C; ++c) out.data[b * C + c] += x.data[(b * L + l) * C + c] * inv;
    const Var out_v = push(std::move(out), needs(xv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, out_v, B, L, C, inv] {
        const Tensor& g = nodes_[out_v.id].grad;
        Tensor& gx = grad(xv);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t c = 0; c < C; ++c) gx.data[(b * L + l) * C + c] += g.data[b * C + c] * inv;
    };
    return out_v;
}

Var Tape::flatten(Var xv) {
    Tensor out = value(xv);
    require(out.rank() >= 1, "flatten of a scalar");
    const std::size_t B = out.dim(0);
    out.shape = {B, B ? out.size() / B : 0};
    const Var out_v = push(std::move(out), needs(xv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, out_v] {
        const Tensor& g = nodes_[out_v.id].grad;
        Tensor& gx = grad(xv);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    };
    return out_v;
}

Var Tape::position(Var xv, std::size_t t) {
    const Tensor& x = value(xv);
    require(x.rank() == 3 && t < x.dim(1), "position index");
    const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
    Tensor out({B, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) out.data[b * C + c] = x.data[(b * L + t) * C + c];
    const Var out_v = push(std::move(out), needs(xv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    nodes_[out_v.id].back = [this, xv, out_v, t, B, L, C] {
        const Tensor& g = nodes_[out_v.id].grad;
        Tensor& gx = grad(xv);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) gx.data[(b * L + t) * C + c] += g.data[b * C + c];
    };
    return out_v;
}

Var Tape::mse(Var pv, std::span<const double> targets) {
    const Tensor& p = value(pv);
    require(p.rank() == 2 && p.dim(1) == 1 && p.dim(0) == targets.size() && !targets.empty(), "mse shapes");
    const std::size_t B = targets.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double r = p.data[i] - targets[i];
        acc += r * r;
    }
    Tensor out({1});
    out.data[0] = acc / static_cast<double>(B);
    const Var out_v = push(std::move(out), needs(pv));
    if (!nodes_[out_v.id].needs_grad) return out_v;
    std::vector<double> t(targets.begin(), targets.end());
    nodes_[out_v.id].back = [this, pv, out_v, t = std::move(t)] {
        const double g = nodes_[out_v.id].grad.data[0];
        const Tensor& p = value(pv);
        Tensor& gp = grad(pv);
        const double scale = 2.0 * g / static_cast<double>(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) gp.data[i] += scale * (p.data[i] - t[i]);
    };
    return out_v;
}

}  // namespace proxbo::nn
