#include "neuroclip/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace neuroclip::ad {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return n;
}

void require_rank2(const NodePtr& x, const char* op) {
    if (x->value.rank() != 2)
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                         x->value.shape_str());
}

bool is_scalar(const NodePtr& x) { return x->value.numel() == 1; }

// Elementwise unary with pointwise derivative.
NodePtr unary_op(const NodePtr& x, const char* /*op*/,
                 const std::function<double(double)>& f,
                 const std::function<double(double)>& dfdx) {
    Tensor out = Tensor::zeros_like(x->value);
    const auto& xv = x->value.flat();
    for (std::size_t i = 0; i < xv.size(); ++i) out.flat()[i] = f(xv[i]);
    return make_node(std::move(out), {x}, [dfdx](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref().flat();
        const auto& pv = p.value.flat();
        const auto& g = n.grad.flat();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * dfdx(pv[i]);
    });
}

}  // namespace

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += " x ";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

NodePtr constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

NodePtr parameter(Tensor v, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->name = std::move(name);
    return n;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
    if (a->value.same_shape(b->value)) {
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out.flat()[i] += b->value.flat()[i];
        return make_node(std::move(out), {a, b}, [](Node& n) {
            for (auto& p : n.parents) {
                if (!p->requires_grad) continue;
                auto& pg = p->grad_ref().flat();
                const auto& g = n.grad.flat();
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i];
            }
        });
    }
    if (is_scalar(b) || is_scalar(a)) {
        const NodePtr& big = is_scalar(b) ? a : b;
        const NodePtr& sc = is_scalar(b) ? b : a;
        Tensor out = big->value;
        const double s = sc->value.flat()[0];
        for (auto& v : out.flat()) v += s;
        return make_node(std::move(out), {big, sc}, [](Node& n) {
            auto& big = *n.parents[0];
            auto& sc = *n.parents[1];
            const auto& g = n.grad.flat();
            if (big.requires_grad) {
                auto& pg = big.grad_ref().flat();
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i];
            }
            if (sc.requires_grad) {
                double acc = 0.0;
                for (double v : g) acc += v;
                sc.grad_ref().flat()[0] += acc;
            }
        });
    }
    throw ShapeError("add: shape mismatch " + a->value.shape_str() + " vs " +
                     b->value.shape_str());
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    if (a->value.same_shape(b->value)) {
        Tensor out = a->value;
        for (std::size_t i = 0; i < out.numel(); ++i) out.flat()[i] *= b->value.flat()[i];
        return make_node(std::move(out), {a, b}, [](Node& n) {
            auto& a = *n.parents[0];
            auto& b = *n.parents[1];
            const auto& g = n.grad.flat();
            if (a.requires_grad) {
                auto& ag = a.grad_ref().flat();
                const auto& bv = b.value.flat();
                for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * bv[i];
            }
            if (b.requires_grad) {
                auto& bg = b.grad_ref().flat();
                const auto& av = a.value.flat();
                for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g[i] * av[i];
            }
        });
    }
    if (is_scalar(b) || is_scalar(a)) {
        const NodePtr& big = is_scalar(b) ? a : b;
        const NodePtr& sc = is_scalar(b) ? b : a;
        Tensor out = big->value;
        const double s = sc->value.flat()[0];
        for (auto& v : out.flat()) v *= s;
        return make_node(std::move(out), {big, sc}, [](Node& n) {
            auto& big = *n.parents[0];
            auto& sc = *n.parents[1];
            const auto& g = n.grad.flat();
            if (big.requires_grad) {
                auto& pg = big.grad_ref().flat();
                const double s = sc.value.flat()[0];
                for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i] * s;
            }
            if (sc.requires_grad) {
                double acc = 0.0;
                const auto& bv = big.value.flat();
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * bv[i];
                sc.grad_ref().flat()[0] += acc;
            }
        });
    }
    throw ShapeError("mul: shape mismatch " + a->value.shape_str() + " vs " +
                     b->value.shape_str());
}

NodePtr add_rowvec(const NodePtr& x, const NodePtr& bias) {
    require_rank2(x, "add_rowvec");
    if (bias->value.rank() != 2 || bias->value.rows() != 1 ||
        bias->value.cols() != x->value.cols())
        throw ShapeError("add_rowvec: bias " + bias->value.shape_str() +
                         " incompatible with " + x->value.shape_str());
    Tensor out = x->value;
    const std::size_t R = out.rows(), C = out.cols();
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) += bias->value.at(0, c);
    return make_node(std::move(out), {x, bias}, [](Node& n) {
        auto& x = *n.parents[0];
        auto& b = *n.parents[1];
        const std::size_t R = n.value.rows(), C = n.value.cols();
        if (x.requires_grad) {
            auto& xg = x.grad_ref().flat();
            const auto& g = n.grad.flat();
            for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g[i];
        }
        if (b.requires_grad) {
            auto& bg = b.grad_ref();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) bg.at(0, c) += n.grad.at(r, c);
        }
    });
}

NodePtr add_colvec(const NodePtr& x, const NodePtr& bias) {
    require_rank2(x, "add_colvec");
    if (bias->value.rank() != 2 || bias->value.cols() != 1 ||
        bias->value.rows() != x->value.rows())
        throw ShapeError("add_colvec: bias " + bias->value.shape_str() +
                         " incompatible with " + x->value.shape_str());
    Tensor out = x->value;
    const std::size_t R = out.rows(), C = out.cols();
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(r, c) += bias->value.at(r, 0);
    return make_node(std::move(out), {x, bias}, [](Node& n) {
        auto& x = *n.parents[0];
        auto& b = *n.parents[1];
        const std::size_t R = n.value.rows(), C = n.value.cols();
        if (x.requires_grad) {
            auto& xg = x.grad_ref().flat();
            const auto& g = n.grad.flat();
            for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g[i];
        }
        if (b.requires_grad) {
            auto& bg = b.grad_ref();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) bg.at(r, 0) += n.grad.at(r, c);
        }
    });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t R = a->value.rows(), K = a->value.cols();
    if (b->value.rows() != K)
        throw ShapeError("matmul: inner dimension mismatch " + a->value.shape_str() +
                         " vs " + b->value.shape_str());
    const std::size_t C = b->value.cols();
    Tensor out({R, C});
    // ikj order keeps the inner loop contiguous over both b and out.
    for (std::size_t i = 0; i < R; ++i) {
        double* orow = out.data() + i * C;
        for (std::size_t k = 0; k < K; ++k) {
            const double av = a->value.at(i, k);
            if (av == 0.0) continue;
            const double* brow = b->value.data() + k * C;
            for (std::size_t j = 0; j < C; ++j) orow[j] += av * brow[j];
        }
    }
    return make_node(std::move(out), {a, b}, [](Node& n) {
        auto& a = *n.parents[0];
        auto& b = *n.parents[1];
        const std::size_t R = a.value.rows(), K = a.value.cols(), C = b.value.cols();
        if (a.requires_grad) {  // dA = G * B^T
            auto& ag = a.grad_ref();
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double* grow = n.grad.data() + i * C;
                    const double* brow = b.value.data() + k * C;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < C; ++j) acc += grow[j] * brow[j];
                    ag.at(i, k) += acc;
                }
        }
        if (b.requires_grad) {  // dB = A^T * G
            auto& bg = b.grad_ref();
            for (std::size_t k = 0; k < K; ++k) {
                double* bgrow = bg.data() + k * C;
                for (std::size_t i = 0; i < R; ++i) {
                    const double av = a.value.at(i, k);
                    if (av == 0.0) continue;
                    const double* grow = n.grad.data() + i * C;
                    for (std::size_t j = 0; j < C; ++j) bgrow[j] += av * grow[j];
                }
            }
        }
    });
}

NodePtr conv1d(const NodePtr& x, const NodePtr& w, std::size_t stride, std::size_t padding) {
    require_rank2(x, "conv1d");
    if (w->value.rank() != 3)
        throw ShapeError("conv1d: weight must be rank-3 [C_out x C_in x K], got " +
                         w->value.shape_str());
    const std::size_t Cin = x->value.rows(), T = x->value.cols();
    const std::size_t Cout = w->value.dim(0), WCin = w->value.dim(1), K = w->value.dim(2);
    if (WCin != Cin)
        throw ShapeError("conv1d: input channels " + x->value.shape_str() +
                         " vs weight " + w->value.shape_str());
    if (stride == 0) throw ConfigError("conv1d: stride must be >= 1");
    if (T + 2 * padding < K)
        throw ShapeError("conv1d: input too short for kernel (" + x->value.shape_str() +
                         ", K=" + std::to_string(K) + ")");
    const std::size_t Tout = (T + 2 * padding - K) / stride + 1;
    Tensor out({Cout, Tout});
    const double* wd = w->value.data();
    for (std::size_t co = 0; co < Cout; ++co) {
        double* orow = out.data() + co * Tout;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
            const double* xrow = x->value.data() + ci * T;
            const double* wrow = wd + (co * Cin + ci) * K;
            for (std::size_t k = 0; k < K; ++k) {
                const double wk = wrow[k];
                if (wk == 0.0) continue;
                // t = to*stride + k - padding must land in [0, T)
                for (std::size_t to = 0; to < Tout; ++to) {
                    const std::ptrdiff_t t =
                        static_cast<std::ptrdiff_t>(to * stride + k) -
                        static_cast<std::ptrdiff_t>(padding);
                    if (t < 0 || t >= static_cast<std::ptrdiff_t>(T)) continue;
                    orow[to] += wk * xrow[t];
                }
            }
        }
    }
    return make_node(std::move(out), {x, w}, [stride, padding](Node& n) {
        auto& x = *n.parents[0];
        auto& w = *n.parents[1];
        const std::size_t Cin = x.value.rows(), T = x.value.cols();
        const std::size_t Cout = w.value.dim(0), K = w.value.dim(2);
        const std::size_t Tout = n.value.cols();
        if (x.requires_grad) {
            auto& xg = x.grad_ref();
            for (std::size_t co = 0; co < Cout; ++co) {
                const double* grow = n.grad.data() + co * Tout;
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    double* xgrow = xg.data() + ci * T;
                    const double* wrow = w.value.data() + (co * Cin + ci) * K;
                    for (std::size_t k = 0; k < K; ++k) {
                        const double wk = wrow[k];
                        if (wk == 0.0) continue;
                        for (std::size_t to = 0; to < Tout; ++to) {
                            const std::ptrdiff_t t =
                                static_cast<std::ptrdiff_t>(to * stride + k) -
                                static_cast<std::ptrdiff_t>(padding);
                            if (t < 0 || t >= static_cast<std::ptrdiff_t>(T)) continue;
                            xgrow[t] += wk * grow[to];
                        }
                    }
                }
            }
        }
        if (w.requires_grad) {
            auto& wg = w.grad_ref();
            for (std::size_t co = 0; co < Cout; ++co) {
                const double* grow = n.grad.data() + co * Tout;
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const double* xrow = x.value.data() + ci * T;
                    double* wgrow = wg.data() + (co * Cin + ci) * K;
                    for (std::size_t k = 0; k < K; ++k) {
                        double acc = 0.0;
                        for (std::size_t to = 0; to < Tout; ++to) {
                            const std::ptrdiff_t t =
                                static_cast<std::ptrdiff_t>(to * stride + k) -
                                static_cast<std::ptrdiff_t>(padding);
                            if (t < 0 || t >= static_cast<std::ptrdiff_t>(T)) continue;
                            acc += grow[to] * xrow[t];
                        }
                        wgrow[k] += acc;
                    }
                }
            }
        }
    });
}

NodePtr relu(const NodePtr& x) {
    return unary_op(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

NodePtr gelu(const NodePtr& x) {
    // x * Phi(x); d/dx = Phi(x) + x * phi(x)
    return unary_op(
        x, "gelu",
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [](double v) {
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            return cdf + v * pdf;
        });
}

NodePtr silu(const NodePtr& x) {
    return unary_op(
        x, "silu",
        [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

NodePtr vexp(const NodePtr& x) {
    return unary_op(
        x, "exp", [](double v) { return std::exp(v); },
        [](double v) { return std::exp(v); });
}

NodePtr vlog(const NodePtr& x) {
    for (double v : x->value.flat())
        if (!(v > 0.0)) throw DataError("log: non-positive input");
    return unary_op(
        x, "log", [](double v) { return std::log(v); },
        [](double v) { return 1.0 / v; });
}

NodePtr scale(const NodePtr& x, double c) {
    Tensor out = x->value;
    for (auto& v : out.flat()) v *= c;
    return make_node(std::move(out), {x}, [c](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref().flat();
        const auto& g = n.grad.flat();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += c * g[i];
    });
}

NodePtr transpose(const NodePtr& x) {
    require_rank2(x, "transpose");
    const std::size_t R = x->value.rows(), C = x->value.cols();
    Tensor out({C, R});
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out.at(c, r) = x->value.at(r, c);
    return make_node(std::move(out), {x}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref();
        const std::size_t R = p.value.rows(), C = p.value.cols();
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) pg.at(r, c) += n.grad.at(c, r);
    });
}

NodePtr mean_axis(const NodePtr& x, std::size_t axis) {
    require_rank2(x, "mean_axis");
    if (axis > 1) throw ShapeError("mean_axis: axis must be 0 or 1");
    const std::size_t R = x->value.rows(), C = x->value.cols();
    if (axis == 0) {
        Tensor out({1, C});
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) out.at(0, c) += x->value.at(r, c);
        for (std::size_t c = 0; c < C; ++c) out.at(0, c) /= static_cast<double>(R);
        return make_node(std::move(out), {x}, [](Node& n) {
            auto& p = *n.parents[0];
            if (!p.requires_grad) return;
            auto& pg = p.grad_ref();
            const std::size_t R = p.value.rows(), C = p.value.cols();
            const double inv = 1.0 / static_cast<double>(R);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) pg.at(r, c) += n.grad.at(0, c) * inv;
        });
    }
    Tensor out({R, 1});
    for (std::size_t r = 0; r < R; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += x->value.at(r, c);
        out.at(r, 0) = acc / static_cast<double>(C);
    }
    return make_node(std::move(out), {x}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref();
        const std::size_t R = p.value.rows(), C = p.value.cols();
        const double inv = 1.0 / static_cast<double>(C);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) pg.at(r, c) += n.grad.at(r, 0) * inv;
    });
}

NodePtr sum_all(const NodePtr& x) {
    double acc = 0.0;
    for (double v : x->value.flat()) acc += v;
    return make_node(Tensor::scalar(acc), {x}, [](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref().flat();
        const double g = n.grad.flat()[0];
        for (auto& v : pg) v += g;
    });
}

NodePtr softmax(const NodePtr& x, std::size_t axis) {
    require_rank2(x, "softmax");
    if (axis > 1) throw ShapeError("softmax: axis must be 0 or 1");
    const std::size_t R = x->value.rows(), C = x->value.cols();
    Tensor out({R, C});
    auto run_line = [&](std::size_t n_el, auto get, auto set) {
        double mx = get(0);
        for (std::size_t i = 1; i < n_el; ++i) mx = std::max(mx, get(i));
        double denom = 0.0;
        for (std::size_t i = 0; i < n_el; ++i) denom += std::exp(get(i) - mx);
        for (std::size_t i = 0; i < n_el; ++i) set(i, std::exp(get(i) - mx) / denom);
    };
    if (axis == 1) {
        for (std::size_t r = 0; r < R; ++r)
            run_line(
                C, [&](std::size_t c) { return x->value.at(r, c); },
                [&](std::size_t c, double v) { out.at(r, c) = v; });
    } else {
        for (std::size_t c = 0; c < C; ++c)
            run_line(
                R, [&](std::size_t r) { return x->value.at(r, c); },
                [&](std::size_t r, double v) { out.at(r, c) = v; });
    }
    return make_node(std::move(out), {x}, [axis](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref();
        const std::size_t R = n.value.rows(), C = n.value.cols();
        // dx = y .* (g - sum(g .* y)) along the softmax axis
        if (axis == 1) {
            for (std::size_t r = 0; r < R; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < C; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
                for (std::size_t c = 0; c < C; ++c)
                    pg.at(r, c) += n.value.at(r, c) * (n.grad.at(r, c) - dot);
            }
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                double dot = 0.0;
                for (std::size_t r = 0; r < R; ++r) dot += n.grad.at(r, c) * n.value.at(r, c);
                for (std::size_t r = 0; r < R; ++r)
                    pg.at(r, c) += n.value.at(r, c) * (n.grad.at(r, c) - dot);
            }
        }
    });
}

NodePtr l2_normalize(const NodePtr& x, std::size_t axis) {
    require_rank2(x, "l2_normalize");
    if (axis > 1) throw ShapeError("l2_normalize: axis must be 0 or 1");
    const std::size_t R = x->value.rows(), C = x->value.cols();
    Tensor out({R, C});
    std::vector<double> norms(axis == 1 ? R : C, 0.0);
    if (axis == 1) {
        for (std::size_t r = 0; r < R; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += x->value.at(r, c) * x->value.at(r, c);
            norms[r] = std::sqrt(s);
            const double inv = norms[r] > 0.0 ? 1.0 / norms[r] : 0.0;  // zero rows stay zero
            for (std::size_t c = 0; c < C; ++c) out.at(r, c) = x->value.at(r, c) * inv;
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < R; ++r) s += x->value.at(r, c) * x->value.at(r, c);
            norms[c] = std::sqrt(s);
            const double inv = norms[c] > 0.0 ? 1.0 / norms[c] : 0.0;
            for (std::size_t r = 0; r < R; ++r) out.at(r, c) = x->value.at(r, c) * inv;
        }
    }
    return make_node(std::move(out), {x}, [axis, norms](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref();
        const std::size_t R = n.value.rows(), C = n.value.cols();
        // dx = (g - y * <g, y>) / ||x||; zero where the input vector was zero
        if (axis == 1) {
            for (std::size_t r = 0; r < R; ++r) {
                if (norms[r] == 0.0) continue;
                double dot = 0.0;
                for (std::size_t c = 0; c < C; ++c) dot += n.grad.at(r, c) * n.value.at(r, c);
                for (std::size_t c = 0; c < C; ++c)
                    pg.at(r, c) += (n.grad.at(r, c) - n.value.at(r, c) * dot) / norms[r];
            }
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                if (norms[c] == 0.0) continue;
                double dot = 0.0;
                for (std::size_t r = 0; r < R; ++r) dot += n.grad.at(r, c) * n.value.at(r, c);
                for (std::size_t r = 0; r < R; ++r)
                    pg.at(r, c) += (n.grad.at(r, c) - n.value.at(r, c) * dot) / norms[c];
            }
        }
    });
}

NodePtr concat(const std::vector<NodePtr>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: empty input list");
    if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
    for (const auto& x : xs) require_rank2(x, "concat");
    std::size_t R = xs[0]->value.rows(), C = xs[0]->value.cols();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const auto& s = xs[i]->value;
        if (axis == 0) {
            if (s.cols() != C)
                throw ShapeError("concat axis 0: column mismatch " + s.shape_str());
            R += s.rows();
        } else {
            if (s.rows() != R)
                throw ShapeError("concat axis 1: row mismatch " + s.shape_str());
            C += s.cols();
        }
    }
    Tensor out({R, C});
    std::size_t off = 0;
    for (const auto& x : xs) {
        const auto& s = x->value;
        if (axis == 0) {
            for (std::size_t r = 0; r < s.rows(); ++r)
                for (std::size_t c = 0; c < C; ++c) out.at(off + r, c) = s.at(r, c);
            off += s.rows();
        } else {
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < s.cols(); ++c) out.at(r, off + c) = s.at(r, c);
            off += s.cols();
        }
    }
    return make_node(std::move(out), xs, [axis](Node& n) {
        std::size_t off = 0;
        for (auto& xp : n.parents) {
            auto& p = *xp;
            const std::size_t pr = p.value.rows(), pc = p.value.cols();
            if (p.requires_grad) {
                auto& pg = p.grad_ref();
                if (axis == 0) {
                    for (std::size_t r = 0; r < pr; ++r)
                        for (std::size_t c = 0; c < pc; ++c)
                            pg.at(r, c) += n.grad.at(off + r, c);
                } else {
                    for (std::size_t r = 0; r < pr; ++r)
                        for (std::size_t c = 0; c < pc; ++c)
                            pg.at(r, c) += n.grad.at(r, off + c);
                }
            }
            off += (axis == 0) ? pr : pc;
        }
    });
}

NodePtr slice(const NodePtr& x, std::size_t r0, std::size_t r1, std::size_t c0,
              std::size_t c1) {
    require_rank2(x, "slice");
    if (r1 > x->value.rows() || c1 > x->value.cols() || r0 >= r1 || c0 >= c1)
        throw ShapeError("slice: bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for " + x->value.shape_str());
    Tensor out({r1 - r0, c1 - c0});
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out.at(r - r0, c - c0) = x->value.at(r, c);
    return make_node(std::move(out), {x}, [r0, c0](Node& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        auto& pg = p.grad_ref();
        for (std::size_t r = 0; r < n.value.rows(); ++r)
            for (std::size_t c = 0; c < n.value.cols(); ++c)
                pg.at(r0 + r, c0 + c) += n.grad.at(r, c);
    });
}

NodePtr cross_entropy_logits(const NodePtr& logits, const std::vector<std::size_t>& labels) {
    require_rank2(logits, "cross_entropy_logits");
    const std::size_t B = logits->value.rows(), K = logits->value.cols();
    if (labels.size() != B)
        throw ShapeError("cross_entropy_logits: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(B) + " rows");
    for (auto l : labels)
        if (l >= K) throw DataError("cross_entropy_logits: label out of range");
    double loss = 0.0;
    Tensor probs({B, K});
    for (std::size_t b = 0; b < B; ++b) {
        double mx = logits->value.at(b, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, logits->value.at(b, k));
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(logits->value.at(b, k) - mx);
        loss += mx + std::log(denom) - logits->value.at(b, labels[b]);
        for (std::size_t k = 0; k < K; ++k)
            probs.at(b, k) = std::exp(logits->value.at(b, k) - mx) / denom;
    }
    loss /= static_cast<double>(B);
    return make_node(Tensor::scalar(loss), {logits},
                     [probs = std::move(probs), labels](Node& n) {
                         auto& p = *n.parents[0];
                         if (!p.requires_grad) return;
                         auto& pg = p.grad_ref();
                         const std::size_t B = probs.rows(), K = probs.cols();
                         const double g = n.grad.flat()[0] / static_cast<double>(B);
                         for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t k = 0; k < K; ++k) {
                                 double d = probs.at(b, k) - (labels[b] == k ? 1.0 : 0.0);
                                 pg.at(b, k) += g * d;
                             }
                     });
}

void backward(const NodePtr& loss) {
    if (loss->value.numel() != 1)
        throw DataError("backward: loss must be scalar, got " + loss->value.shape_str());
    // Iterative post-order DFS; conv chains can be deep.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->grad_ref().flat()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad && n->backward_fn) {
            n->grad_ref();  // nodes never visited downstream still need zero grads
            n->backward_fn(*n);
        }
    }
}

double finite_diff_check(
    const std::function<NodePtr(const std::vector<NodePtr>&)>& build,
    const std::vector<Tensor>& point, double eps) {
    std::vector<NodePtr> params;
    params.reserve(point.size());
    for (std::size_t i = 0; i < point.size(); ++i)
        params.push_back(parameter(point[i], "p" + std::to_string(i)));
    NodePtr loss = build(params);
    backward(loss);

    auto eval_at = [&](std::size_t pi, std::size_t ei, double delta) {
        std::vector<NodePtr> probe;
        probe.reserve(point.size());
        for (std::size_t i = 0; i < point.size(); ++i) {
            Tensor t = point[i];
            if (i == pi) t.flat()[ei] += delta;
            probe.push_back(constant(std::move(t)));
        }
        return build(probe)->value.flat()[0];
    };

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < point.size(); ++pi) {
        const Tensor& g = params[pi]->grad_ref();
        for (std::size_t ei = 0; ei < point[pi].numel(); ++ei) {
            const double fd = (eval_at(pi, ei, eps) - eval_at(pi, ei, -eps)) / (2.0 * eps);
            const double an = g.flat()[ei];
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
            max_rel = std::max(max_rel, std::abs(an - fd) / denom);
        }
    }
    return max_rel;
}

bool all_finite(const Tensor& t) {
    for (double v : t.flat())
        if (!std::isfinite(v)) return false;
    return true;
}

void SgdMomentum::add_param(const NodePtr& p, double lr_multiplier) {
    params_.push_back({p, lr_multiplier, Tensor::zeros_like(p->value)});
}

void SgdMomentum::step() {
    double scale = 1.0;
    if (clip_norm_ > 0.0) {
        double sq = 0.0;
        for (const auto& e : params_) {
            if (!e.node->grad_allocated) continue;
            for (double g : e.node->grad.flat()) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > clip_norm_) scale = clip_norm_ / norm;
    }
    for (auto& e : params_) {
        if (!e.node->grad_allocated) continue;
        auto& v = e.velocity.flat();
        auto& g = e.node->grad.flat();
        auto& val = e.node->value.flat();
        const double lr = lr_ * e.mult;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = momentum_ * v[i] - lr * scale * g[i];
            val[i] += v[i];
        }
    }
}

void SgdMomentum::zero_grad() {
    for (auto& e : params_) e.node->zero_grad();
}

}  // namespace neuroclip::ad
