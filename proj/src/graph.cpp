// Copyright 2026 EINet Authors
// Autodiff op implementations.
//
// Licensed under the Apache License, Version 2.0

#include "einet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "einet/dsp.hpp"

namespace einet::ad {

Var Graph::make(Tensor val, std::vector<Var> parents, std::function<void(Node&)> bp) {
    auto node = std::make_unique<Node>();
    node->val = std::move(val);
    for (Var p : parents)
        if (p->requires_grad) node->requires_grad = true;
    if (node->requires_grad) node->backprop = std::move(bp);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Var Graph::leaf(Tensor t, bool requires_grad) {
    auto node = std::make_unique<Node>();
    node->val = std::move(t);
    node->requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

void Graph::backward(Var root) {
    if (root->val.numel() != 1) throw ContractError("backward: root must be scalar");
    for (auto& n : nodes_)
        if (n->requires_grad) n->grad = Tensor::zeros(n->val.shape);
    root->grad = Tensor::full(root->val.shape, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.requires_grad && n.backprop) n.backprop(n);
    }
}

namespace {
void check_same_shape(const Var a, const Var b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw ContractError(std::string(op) + ": shape mismatch");
}
void accum(Var p, const Tensor& g) {
    if (!p->requires_grad) return;
    for (int64_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
}
}  // namespace

Var Graph::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b->val[i];
    return make(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad);
        accum(b, n.grad);
    });
}

Var Graph::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b->val[i];
    return make(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad);
        if (b->requires_grad)
            for (int64_t i = 0; i < n.grad.numel(); ++i) b->grad[i] -= n.grad[i];
    });
}

Var Graph::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->val;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->val[i];
    return make(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * b->val[i];
        if (b->requires_grad)
            for (int64_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i] * a->val[i];
    });
}

Var Graph::scale(Var a, double c) {
    Tensor out = a->val;
    for (double& x : out.data) x *= c;
    return make(std::move(out), {a}, [a, c](Node& n) {
        if (a->requires_grad)
            for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += c * n.grad[i];
    });
}

Var Graph::add_scalar(Var a, double c) {
    Tensor out = a->val;
    for (double& x : out.data) x += c;
    return make(std::move(out), {a}, [a](Node& n) { accum(a, n.grad); });
}

Var Graph::tanh_(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::tanh(x);
    Var v = make(std::move(out), {a}, nullptr);
    if (v->requires_grad)
        v->backprop = [a, v](Node& n) {
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                a->grad[i] += n.grad[i] * (1.0 - v->val[i] * v->val[i]);
        };
    return v;
}

Var Graph::sigmoid_(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    Var v = make(std::move(out), {a}, nullptr);
    if (v->requires_grad)
        v->backprop = [a, v](Node& n) {
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                a->grad[i] += n.grad[i] * v->val[i] * (1.0 - v->val[i]);
        };
    return v;
}

Var Graph::exp_(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::exp(x);
    Var v = make(std::move(out), {a}, nullptr);
    if (v->requires_grad)
        v->backprop = [a, v](Node& n) {
            for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * v->val[i];
        };
    return v;
}

Var Graph::log_(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::log(x);
    return make(std::move(out), {a}, [a](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] / a->val[i];
    });
}

Var Graph::log_floor(Var a, double floor) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::log(std::max(x, floor));
    return make(std::move(out), {a}, [a, floor](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (a->val[i] > floor) a->grad[i] += n.grad[i] / a->val[i];
    });
}

Var Graph::sin_(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::sin(x);
    return make(std::move(out), {a}, [a](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * std::cos(a->val[i]);
    });
}

Var Graph::square(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x *= x;
    return make(std::move(out), {a}, [a](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += 2.0 * n.grad[i] * a->val[i];
    });
}

Var Graph::abs_(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::abs(x);
    return make(std::move(out), {a}, [a](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            const double s = a->val[i] > 0.0 ? 1.0 : (a->val[i] < 0.0 ? -1.0 : 0.0);
            a->grad[i] += n.grad[i] * s;
        }
    });
}

Var Graph::lrelu(Var a, double slope) {
    Tensor out = a->val;
    for (double& x : out.data) x = x > 0.0 ? x : slope * x;
    return make(std::move(out), {a}, [a, slope](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * (a->val[i] > 0.0 ? 1.0 : slope);
    });
}

Var Graph::softplus(Var a) {
    Tensor out = a->val;
    for (double& x : out.data) x = x > 30.0 ? x : std::log1p(std::exp(x));
    return make(std::move(out), {a}, [a](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] / (1.0 + std::exp(-a->val[i]));
    });
}

Var Graph::max_scalar(Var a, double c) {
    Tensor out = a->val;
    for (double& x : out.data) x = std::max(x, c);
    return make(std::move(out), {a}, [a, c](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            if (a->val[i] > c) a->grad[i] += n.grad[i];
    });
}

Var Graph::mul_rowconst(Var a, const std::vector<double>& v) {
    const int T = a->val.rows(), C = a->val.cols();
    if (static_cast<int>(v.size()) != C) throw ContractError("mul_rowconst: width mismatch");
    Tensor out = a->val;
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) out.at(t, c) *= v[c];
    return make(std::move(out), {a}, [a, v](Node& n) {
        const int T2 = n.grad.rows(), C2 = n.grad.cols();
        for (int t = 0; t < T2; ++t)
            for (int c = 0; c < C2; ++c) a->grad.at(t, c) += n.grad.at(t, c) * v[c];
    });
}

Var Graph::matmul(Var a, Var b) {
    const int m = a->val.rows(), k = a->val.cols();
    const int k2 = b->val.rows(), n = b->val.cols();
    if (k != k2) throw ContractError("matmul: inner dimensions disagree");
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = &a->val.data[static_cast<size_t>(i) * k];
        double* orow = &out.data[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b->val.data[static_cast<size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
        if (a->requires_grad) {
            // dA = G * B^T
            for (int i = 0; i < m; ++i) {
                const double* grow = &nd.grad.data[static_cast<size_t>(i) * n];
                double* darow = &a->grad.data[static_cast<size_t>(i) * k];
                for (int p = 0; p < k; ++p) {
                    const double* brow = &b->val.data[static_cast<size_t>(p) * n];
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    darow[p] += acc;
                }
            }
        }
        if (b->requires_grad) {
            // dB = A^T * G
            for (int i = 0; i < m; ++i) {
                const double* arow = &a->val.data[static_cast<size_t>(i) * k];
                const double* grow = &nd.grad.data[static_cast<size_t>(i) * n];
                for (int p = 0; p < k; ++p) {
                    const double av = arow[p];
                    if (av == 0.0) continue;
                    double* dbrow = &b->grad.data[static_cast<size_t>(p) * n];
                    for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Var Graph::transpose(Var a) {
    const int m = a->val.rows(), n = a->val.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a->val.at(i, j);
    return make(std::move(out), {a}, [a, m, n](Node& nd) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad.at(i, j) += nd.grad.at(j, i);
    });
}

Var Graph::add_bias(Var x, Var b) {
    const int T = x->val.rows(), C = x->val.cols();
    if (b->val.numel() != C) throw ContractError("add_bias: bias width mismatch");
    Tensor out = x->val;
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) out.at(t, c) += b->val[c];
    return make(std::move(out), {x, b}, [x, b, T, C](Node& n) {
        if (x->requires_grad) accum(x, n.grad);
        if (b->requires_grad)
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c) b->grad[c] += n.grad.at(t, c);
    });
}

Var Graph::conv1d(Var x, Var w, Var b, int dilation) {
    const int T = x->val.rows(), Cin = x->val.cols();
    if (w->val.shape.size() != 3) throw ContractError("conv1d: weight must be {Cout,k,Cin}");
    const int Cout = w->val.shape[0], K = w->val.shape[1], WCin = w->val.shape[2];
    if (WCin != Cin) throw ContractError("conv1d: channel mismatch");
    if (K % 2 == 0) throw ContractError("conv1d: kernel must be odd");
    if (b->val.numel() != Cout) throw ContractError("conv1d: bias width mismatch");
    const int half = K / 2;

    Tensor out({T, Cout});
    for (int t = 0; t < T; ++t) {
        double* orow = &out.data[static_cast<size_t>(t) * Cout];
        for (int co = 0; co < Cout; ++co) orow[co] = b->val[co];
        for (int kk = 0; kk < K; ++kk) {
            const int src = t + (kk - half) * dilation;
            if (src < 0 || src >= T) continue;
            const double* xrow = &x->val.data[static_cast<size_t>(src) * Cin];
            for (int co = 0; co < Cout; ++co) {
                const double* wrow = &w->val.data[(static_cast<size_t>(co) * K + kk) * Cin];
                double acc = 0.0;
                for (int ci = 0; ci < Cin; ++ci) acc += xrow[ci] * wrow[ci];
                orow[co] += acc;
            }
        }
    }
    return make(std::move(out), {x, w, b},
                [x, w, b, T, Cin, Cout, K, half, dilation](Node& n) {
        if (b->requires_grad)
            for (int t = 0; t < T; ++t)
                for (int co = 0; co < Cout; ++co) b->grad[co] += n.grad.at(t, co);
        if (x->requires_grad) {
            for (int t = 0; t < T; ++t) {
                double* dxrow = &x->grad.data[static_cast<size_t>(t) * Cin];
                for (int kk = 0; kk < K; ++kk) {
                    const int dst = t - (kk - half) * dilation;
                    if (dst < 0 || dst >= T) continue;
                    const double* grow = &n.grad.data[static_cast<size_t>(dst) * Cout];
                    for (int co = 0; co < Cout; ++co) {
                        const double gv = grow[co];
                        if (gv == 0.0) continue;
                        const double* wrow = &w->val.data[(static_cast<size_t>(co) * K + kk) * Cin];
                        for (int ci = 0; ci < Cin; ++ci) dxrow[ci] += gv * wrow[ci];
                    }
                }
            }
        }
        if (w->requires_grad) {
            for (int t = 0; t < T; ++t) {
                const double* grow = &n.grad.data[static_cast<size_t>(t) * Cout];
                for (int kk = 0; kk < K; ++kk) {
                    const int src = t + (kk - half) * dilation;
                    if (src < 0 || src >= T) continue;
                    const double* xrow = &x->val.data[static_cast<size_t>(src) * Cin];
                    for (int co = 0; co < Cout; ++co) {
                        const double gv = grow[co];
                        if (gv == 0.0) continue;
                        double* dwrow = &w->grad.data[(static_cast<size_t>(co) * K + kk) * Cin];
                        for (int ci = 0; ci < Cin; ++ci) dwrow[ci] += gv * xrow[ci];
                    }
                }
            }
        }
    });
}

Var Graph::tconv1d(Var x, Var w, Var b, int stride) {
    const int T = x->val.rows(), Cin = x->val.cols();
    if (w->val.shape.size() != 3) throw ContractError("tconv1d: weight must be {Cout,k,Cin}");
    const int Cout = w->val.shape[0], K = w->val.shape[1], WCin = w->val.shape[2];
    if (WCin != Cin) throw ContractError("tconv1d: channel mismatch");
    if (K != 2 * stride) throw ContractError("tconv1d: kernel must equal 2*stride");
    const int pad = (K - stride) / 2;
    const int Tout = T * stride;

    Tensor out({Tout, Cout});
    for (int o = 0; o < Tout; ++o) {
        double* orow = &out.data[static_cast<size_t>(o) * Cout];
        for (int co = 0; co < Cout; ++co) orow[co] = b->val[co];
        for (int kk = 0; kk < K; ++kk) {
            const int num = o + pad - kk;
            if (num < 0 || num % stride != 0) continue;
            const int t = num / stride;
            if (t >= T) continue;
            const double* xrow = &x->val.data[static_cast<size_t>(t) * Cin];
            for (int co = 0; co < Cout; ++co) {
                const double* wrow = &w->val.data[(static_cast<size_t>(co) * K + kk) * Cin];
                double acc = 0.0;
                for (int ci = 0; ci < Cin; ++ci) acc += xrow[ci] * wrow[ci];
                orow[co] += acc;
            }
        }
    }
    return make(std::move(out), {x, w, b},
                [x, w, b, T, Cin, Cout, K, pad, stride, Tout](Node& n) {
        if (b->requires_grad)
            for (int o = 0; o < Tout; ++o)
                for (int co = 0; co < Cout; ++co) b->grad[co] += n.grad.at(o, co);
        for (int o = 0; o < Tout; ++o) {
            const double* grow = &n.grad.data[static_cast<size_t>(o) * Cout];
            for (int kk = 0; kk < K; ++kk) {
                const int num = o + pad - kk;
                if (num < 0 || num % stride != 0) continue;
                const int t = num / stride;
                if (t >= T) continue;
                const double* xrow = &x->val.data[static_cast<size_t>(t) * Cin];
                double* dxrow = x->requires_grad ? &x->grad.data[static_cast<size_t>(t) * Cin]
                                                 : nullptr;
                for (int co = 0; co < Cout; ++co) {
                    const double gv = grow[co];
                    if (gv == 0.0) continue;
                    const double* wrow = &w->val.data[(static_cast<size_t>(co) * K + kk) * Cin];
                    if (dxrow)
                        for (int ci = 0; ci < Cin; ++ci) dxrow[ci] += gv * wrow[ci];
                    if (w->requires_grad) {
                        double* dwrow = &w->grad.data[(static_cast<size_t>(co) * K + kk) * Cin];
                        for (int ci = 0; ci < Cin; ++ci) dwrow[ci] += gv * xrow[ci];
                    }
                }
            }
        }
    });
}

Var Graph::avg_pool_rows(Var x, int factor) {
    const int T = x->val.rows(), C = x->val.cols();
    const int Tout = T / factor;
    if (Tout < 1) throw ContractError("avg_pool_rows: input too short");
    Tensor out({Tout, C});
    for (int o = 0; o < Tout; ++o)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int j = 0; j < factor; ++j) acc += x->val.at(o * factor + j, c);
            out.at(o, c) = acc / factor;
        }
    return make(std::move(out), {x}, [x, factor, Tout, C](Node& n) {
        for (int o = 0; o < Tout; ++o)
            for (int c = 0; c < C; ++c) {
                const double gv = n.grad.at(o, c) / factor;
                for (int j = 0; j < factor; ++j) x->grad.at(o * factor + j, c) += gv;
            }
    });
}

Var Graph::slice_rows(Var a, int start, int n) {
    const int T = a->val.rows(), C = a->val.cols();
    if (start < 0 || start + n > T) throw ContractError("slice_rows: out of range");
    Tensor out({n, C});
    std::copy(a->val.data.begin() + static_cast<size_t>(start) * C,
              a->val.data.begin() + static_cast<size_t>(start + n) * C, out.data.begin());
    return make(std::move(out), {a}, [a, start, n, C](Node& nd) {
        for (int t = 0; t < n; ++t)
            for (int c = 0; c < C; ++c) a->grad.at(start + t, c) += nd.grad.at(t, c);
    });
}

Var Graph::slice_cols(Var a, int start, int n) {
    const int T = a->val.rows(), C = a->val.cols();
    if (start < 0 || start + n > C) throw ContractError("slice_cols: out of range");
    Tensor out({T, n});
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < n; ++c) out.at(t, c) = a->val.at(t, start + c);
    return make(std::move(out), {a}, [a, start, n, T](Node& nd) {
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < n; ++c) a->grad.at(t, start + c) += nd.grad.at(t, c);
    });
}

Var Graph::concat_cols(Var a, Var b) {
    const int T = a->val.rows();
    if (b->val.rows() != T) throw ContractError("concat_cols: row mismatch");
    const int Ca = a->val.cols(), Cb = b->val.cols();
    Tensor out({T, Ca + Cb});
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < Ca; ++c) out.at(t, c) = a->val.at(t, c);
        for (int c = 0; c < Cb; ++c) out.at(t, Ca + c) = b->val.at(t, c);
    }
    return make(std::move(out), {a, b}, [a, b, T, Ca, Cb](Node& n) {
        if (a->requires_grad)
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < Ca; ++c) a->grad.at(t, c) += n.grad.at(t, c);
        if (b->requires_grad)
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < Cb; ++c) b->grad.at(t, c) += n.grad.at(t, Ca + c);
    });
}

Var Graph::concat_rows(Var a, Var b) {
    const int C = a->val.cols();
    if (b->val.cols() != C) throw ContractError("concat_rows: col mismatch");
    const int Ta = a->val.rows(), Tb = b->val.rows();
    Tensor out({Ta + Tb, C});
    std::copy(a->val.data.begin(), a->val.data.end(), out.data.begin());
    std::copy(b->val.data.begin(), b->val.data.end(),
              out.data.begin() + static_cast<size_t>(Ta) * C);
    return make(std::move(out), {a, b}, [a, b, Ta, Tb, C](Node& n) {
        if (a->requires_grad)
            for (int t = 0; t < Ta; ++t)
                for (int c = 0; c < C; ++c) a->grad.at(t, c) += n.grad.at(t, c);
        if (b->requires_grad)
            for (int t = 0; t < Tb; ++t)
                for (int c = 0; c < C; ++c) b->grad.at(t, c) += n.grad.at(Ta + t, c);
    });
}

Var Graph::broadcast_row(Var a, int rows) {
    if (a->val.rows() != 1) throw ContractError("broadcast_row: input must have one row");
    const int C = a->val.cols();
    Tensor out({rows, C});
    for (int t = 0; t < rows; ++t)
        for (int c = 0; c < C; ++c) out.at(t, c) = a->val[c];
    return make(std::move(out), {a}, [a, rows, C](Node& n) {
        for (int t = 0; t < rows; ++t)
            for (int c = 0; c < C; ++c) a->grad[c] += n.grad.at(t, c);
    });
}

Var Graph::gather_rows(Var table, const std::vector<int>& ids) {
    const int K = table->val.rows(), C = table->val.cols();
    const int L = static_cast<int>(ids.size());
    Tensor out({L, C});
    for (int i = 0; i < L; ++i) {
        if (ids[i] < 0 || ids[i] >= K) throw ContractError("gather_rows: id out of range");
        for (int c = 0; c < C; ++c) out.at(i, c) = table->val.at(ids[i], c);
    }
    return make(std::move(out), {table}, [table, ids, C](Node& n) {
        for (int i = 0; i < static_cast<int>(ids.size()); ++i)
            for (int c = 0; c < C; ++c) table->grad.at(ids[i], c) += n.grad.at(i, c);
    });
}

Var Graph::repeat_rows(Var a, const std::vector<int>& counts) {
    const int L = a->val.rows(), C = a->val.cols();
    if (static_cast<int>(counts.size()) != L) throw ContractError("repeat_rows: count mismatch");
    int T = 0;
    for (int c : counts) {
        if (c < 0) throw ContractError("repeat_rows: negative count");
        T += c;
    }
    Tensor out({T, C});
    int t = 0;
    for (int i = 0; i < L; ++i)
        for (int r = 0; r < counts[i]; ++r, ++t)
            for (int c = 0; c < C; ++c) out.at(t, c) = a->val.at(i, c);
    return make(std::move(out), {a}, [a, counts, C](Node& n) {
        int t2 = 0;
        for (int i = 0; i < static_cast<int>(counts.size()); ++i)
            for (int r = 0; r < counts[i]; ++r, ++t2)
                for (int c = 0; c < C; ++c) a->grad.at(i, c) += n.grad.at(t2, c);
    });
}

Var Graph::gather_flat(Var a, std::shared_ptr<const std::vector<int64_t>> idx,
                       std::vector<int> out_shape) {
    Tensor out(std::move(out_shape));
    if (out.numel() != static_cast<int64_t>(idx->size()))
        throw ContractError("gather_flat: index count mismatch");
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->val[(*idx)[i]];
    return make(std::move(out), {a}, [a, idx](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) a->grad[(*idx)[i]] += n.grad[i];
    });
}

Var Graph::cumsum_col(Var a) {
    if (a->val.cols() != 1) throw ContractError("cumsum_col: expects a column");
    const int T = a->val.rows();
    Tensor out({T, 1});
    double acc = 0.0;
    for (int t = 0; t < T; ++t) {
        acc += a->val[t];
        out[t] = acc;
    }
    return make(std::move(out), {a}, [a, T](Node& n) {
        double acc2 = 0.0;
        for (int t = T - 1; t >= 0; --t) {
            acc2 += n.grad[t];
            a->grad[t] += acc2;
        }
    });
}

Var Graph::sum(Var a) {
    double s = 0.0;
    for (double x : a->val.data) s += x;
    return make(Tensor::scalar(s), {a}, [a](Node& n) {
        const double g = n.grad[0];
        for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
    });
}

Var Graph::mean(Var a) {
    const double inv = 1.0 / static_cast<double>(a->val.numel());
    double s = 0.0;
    for (double x : a->val.data) s += x;
    return make(Tensor::scalar(s * inv), {a}, [a, inv](Node& n) {
        const double g = n.grad[0] * inv;
        for (int64_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += g;
    });
}

Var Graph::row_sum(Var a) {
    const int T = a->val.rows(), C = a->val.cols();
    Tensor out({T, 1});
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += a->val.at(t, c);
        out[t] = acc;
    }
    return make(std::move(out), {a}, [a, T, C](Node& n) {
        for (int t = 0; t < T; ++t) {
            const double g = n.grad[t];
            for (int c = 0; c < C; ++c) a->grad.at(t, c) += g;
        }
    });
}

Var Graph::col_sum(Var a) {
    const int T = a->val.rows(), C = a->val.cols();
    Tensor out({1, C});
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) out[c] += a->val.at(t, c);
    return make(std::move(out), {a}, [a, T, C](Node& n) {
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c) a->grad.at(t, c) += n.grad[c];
    });
}

Var Graph::softmax_rows(Var a, const std::vector<int>* valid) {
    const int T = a->val.rows(), C = a->val.cols();
    std::vector<char> keep(static_cast<size_t>(C), 1);
    if (valid) {
        if (static_cast<int>(valid->size()) != C)
            throw ContractError("softmax_rows: mask width mismatch");
        bool any = false;
        for (int c = 0; c < C; ++c) {
            keep[c] = (*valid)[c] ? 1 : 0;
            any = any || keep[c];
        }
        if (!any) throw InputError("softmax_rows: all positions masked");
    }
    Tensor out({T, C});
    for (int t = 0; t < T; ++t) {
        double mx = -1e300;
        for (int c = 0; c < C; ++c)
            if (keep[c]) mx = std::max(mx, a->val.at(t, c));
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
            const double e = keep[c] ? std::exp(a->val.at(t, c) - mx) : 0.0;
            out.at(t, c) = e;
            z += e;
        }
        for (int c = 0; c < C; ++c) out.at(t, c) /= z;
    }
    Var v = make(std::move(out), {a}, nullptr);
    if (v->requires_grad)
        v->backprop = [a, v, T, C](Node& n) {
            for (int t = 0; t < T; ++t) {
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += n.grad.at(t, c) * v->val.at(t, c);
                for (int c = 0; c < C; ++c)
                    a->grad.at(t, c) += v->val.at(t, c) * (n.grad.at(t, c) - dot);
            }
        };
    return v;
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
    const int T = x->val.rows(), C = x->val.cols();
    if (gain->val.numel() != C || bias->val.numel() != C)
        throw ContractError("layer_norm: parameter width mismatch");
    Tensor out({T, C});
    auto mu = std::make_shared<std::vector<double>>(T);
    auto istd = std::make_shared<std::vector<double>>(T);
    for (int t = 0; t < T; ++t) {
        double m = 0.0;
        for (int c = 0; c < C; ++c) m += x->val.at(t, c);
        m /= C;
        double v = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = x->val.at(t, c) - m;
            v += d * d;
        }
        v /= C;
        const double is = 1.0 / std::sqrt(v + eps);
        (*mu)[t] = m;
        (*istd)[t] = is;
        for (int c = 0; c < C; ++c)
            out.at(t, c) = (x->val.at(t, c) - m) * is * gain->val[c] + bias->val[c];
    }
    return make(std::move(out), {x, gain, bias},
                [x, gain, bias, mu, istd, T, C](Node& n) {
        for (int t = 0; t < T; ++t) {
            const double m = (*mu)[t], is = (*istd)[t];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int c = 0; c < C; ++c) {
                const double xn = (x->val.at(t, c) - m) * is;
                const double gl = n.grad.at(t, c) * gain->val[c];
                sum_g += gl;
                sum_gx += gl * xn;
                if (gain->requires_grad) gain->grad[c] += n.grad.at(t, c) * xn;
                if (bias->requires_grad) bias->grad[c] += n.grad.at(t, c);
            }
            if (x->requires_grad) {
                for (int c = 0; c < C; ++c) {
                    const double xn = (x->val.at(t, c) - m) * is;
                    const double gl = n.grad.at(t, c) * gain->val[c];
                    x->grad.at(t, c) += is * (gl - sum_g / C - xn * sum_gx / C);
                }
            }
        }
    });
}

Var Graph::dropout(Var x, double p, Rng& rng, bool training) {
    if (!training || p <= 0.0) return x;
    const double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(x->val.numel());
    Tensor out = x->val;
    for (int64_t i = 0; i < x->val.numel(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
        out[i] *= (*mask)[i];
    }
    return make(std::move(out), {x}, [x, mask](Node& n) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) x->grad[i] += n.grad[i] * (*mask)[i];
    });
}

Var Graph::stop_grad(Var a) { return constant(a->val); }

Var Graph::rdft_power(Var frames) {
    const int F = frames->val.rows(), N = frames->val.cols();
    const int B = N / 2 + 1;
    Tensor out({F, B});
    auto spectra = std::make_shared<std::vector<std::complex<double>>>(
        static_cast<size_t>(F) * B);
    std::vector<std::complex<double>> buf(static_cast<size_t>(N));
    for (int f = 0; f < F; ++f) {
        for (int i = 0; i < N; ++i) buf[i] = std::complex<double>(frames->val.at(f, i), 0.0);
        dsp::fft(buf, false);
        for (int b = 0; b < B; ++b) {
            (*spectra)[static_cast<size_t>(f) * B + b] = buf[b];
            out.at(f, b) = std::norm(buf[b]);
        }
    }
    return make(std::move(out), {frames}, [frames, spectra, F, N, B](Node& n) {
        // adjoint: dL/dx = Re(sum_b 2 g_b X_b e^{+2pi i b t / N}), via inverse FFT
        std::vector<std::complex<double>> buf2(static_cast<size_t>(N));
        for (int f = 0; f < F; ++f) {
            std::fill(buf2.begin(), buf2.end(), std::complex<double>(0.0, 0.0));
            for (int b = 0; b < B; ++b)
                buf2[b] = 2.0 * n.grad.at(f, b) * (*spectra)[static_cast<size_t>(f) * B + b];
            dsp::fft(buf2, true);
            for (int i = 0; i < N; ++i)
                frames->grad.at(f, i) += buf2[i].real() * N;
        }
    });
}

}  // namespace einet::ad
