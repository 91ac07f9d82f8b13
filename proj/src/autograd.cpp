#include "xlf5/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "xlf5/errors.hpp"
#include "xlf5/kernels.hpp"

namespace xlf5::nn {

using kern::ops;

Tensor& Node::ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
}

void Node::accumulate_grad(const Tensor& g) {
    Tensor& dst = ensure_grad();
    ops().vadd(size_t(dst.numel()), dst.data(), g.data(), dst.data());
}

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (auto& p : parents)
        if (p && p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        for (auto& p : parents)
            if (p) n->parents.push_back(std::move(p));
        n->backward_fn = std::move(fn);
    }
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* what) {
    if (!a->value.same_shape(b->value))
        fail(ErrorCode::shape_error, std::string(what) + ": " + a->value.shape_str() + " vs " +
                                         b->value.shape_str());
}

}  // namespace

void backward(const Var& root) {
    if (root->value.numel() != 1) fail(ErrorCode::invalid_input, "backward needs a scalar root");
    // iterative topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->ensure_grad().fill(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->value.shape());
    ops().vadd(size_t(out.numel()), a->value.data(), b->value.data(), out.data());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate_grad(n.grad);
        if (b->requires_grad) b->accumulate_grad(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->value.shape());
    ops().vsub(size_t(out.numel()), a->value.data(), b->value.data(), out.data());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate_grad(n.grad);
        if (b->requires_grad) {
            Tensor& g = b->ensure_grad();
            ops().saxpy(size_t(g.numel()), -1.0f, n.grad.data(), g.data());
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    ops().vmul(size_t(out.numel()), a->value.data(), b->value.data(), out.data());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        size_t sz = size_t(n.grad.numel());
        Tensor tmp(n.grad.shape());
        if (a->requires_grad) {
            ops().vmul(sz, n.grad.data(), b->value.data(), tmp.data());
            a->accumulate_grad(tmp);
        }
        if (b->requires_grad) {
            ops().vmul(sz, n.grad.data(), a->value.data(), tmp.data());
            b->accumulate_grad(tmp);
        }
    });
}

Var scale(const Var& a, float c) {
    Tensor out(a->value.shape());
    ops().vscale(size_t(out.numel()), c, a->value.data(), out.data());
    return make_node(std::move(out), {a}, [a, c](Node& n) {
        Tensor& g = a->ensure_grad();
        ops().saxpy(size_t(g.numel()), c, n.grad.data(), g.data());
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
        fail(ErrorCode::shape_error,
             "matmul: " + a->value.shape_str() + " x " + b->value.shape_str());
    int64_t m = a->value.dim(0), k = a->value.dim(1), n2 = b->value.dim(1);
    Tensor out({m, n2});
    ops().gemm_nn(size_t(m), size_t(n2), size_t(k), a->value.data(), b->value.data(), out.data(),
                  false);
    return make_node(std::move(out), {a, b}, [a, b, m, k, n2](Node& n) {
        if (a->requires_grad)
            ops().gemm_nt(size_t(m), size_t(k), size_t(n2), n.grad.data(), b->value.data(),
                          a->ensure_grad().data(), true);
        if (b->requires_grad)
            ops().gemm_tn(size_t(k), size_t(n2), size_t(m), a->value.data(), n.grad.data(),
                          b->ensure_grad().data(), true);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (w->value.rank() != 2)
        fail(ErrorCode::shape_error, "linear: weight must be 2-D");
    int64_t k = w->value.dim(0), n_out = w->value.dim(1);
    if (x->value.rank() < 1 || x->value.shape().back() != k)
        fail(ErrorCode::shape_error, "linear: input " + x->value.shape_str() + " vs weight " +
                                         w->value.shape_str());
    if (b && b->value.numel() != n_out) fail(ErrorCode::shape_error, "linear: bad bias");
    int64_t rows = x->value.numel() / k;
    std::vector<int64_t> out_shape = x->value.shape();
    out_shape.back() = n_out;
    Tensor out(out_shape);
    ops().gemm_nn(size_t(rows), size_t(n_out), size_t(k), x->value.data(), w->value.data(),
                  out.data(), false);
    if (b)
        for (int64_t r = 0; r < rows; ++r)
            ops().vadd(size_t(n_out), out.data() + r * n_out, b->value.data(),
                       out.data() + r * n_out);
    return make_node(std::move(out), {x, w, b}, [x, w, b, rows, k, n_out](Node& n) {
        if (x->requires_grad)
            ops().gemm_nt(size_t(rows), size_t(k), size_t(n_out), n.grad.data(), w->value.data(),
                          x->ensure_grad().data(), true);
        if (w->requires_grad)
            ops().gemm_tn(size_t(k), size_t(n_out), size_t(rows), x->value.data(), n.grad.data(),
                          w->ensure_grad().data(), true);
        if (b && b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                ops().vadd(size_t(n_out), g.data(), n.grad.data() + r * n_out, g.data());
        }
    });
}

namespace {
constexpr float kGeluA = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluB = 0.044715f;
}  // namespace

Var gelu(const Var& x) {
    Tensor out(x->value.shape());
    Tensor th(x->value.shape());  // tanh(u), saved for backward
    for (int64_t i = 0; i < out.numel(); ++i) {
        float v = x->value[i];
        float u = kGeluA * (v + kGeluB * v * v * v);
        float t = std::tanh(u);
        th[i] = t;
        out[i] = 0.5f * v * (1.0f + t);
    }
    return make_node(std::move(out), {x}, [x, th = std::move(th)](Node& n) {
        Tensor& g = x->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            float v = x->value[i];
            float t = th[i];
            float du = kGeluA * (1.0f + 3.0f * kGeluB * v * v);
            float d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
            g[i] += n.grad[i] * d;
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
    int64_t d = x->value.shape().back();
    if (gamma->value.numel() != d || beta->value.numel() != d)
        fail(ErrorCode::shape_error, "layer_norm: gamma/beta size");
    int64_t rows = x->value.numel() / d;
    Tensor out(x->value.shape());
    Tensor xhat(x->value.shape());
    Tensor inv_std({rows});
    for (int64_t r = 0; r < rows; ++r) {
        const float* px = x->value.data() + r * d;
        float mean = ops().sum(size_t(d), px) / float(d);
        float var = 0.0f;
        for (int64_t i = 0; i < d; ++i) {
            float c = px[i] - mean;
            var += c * c;
        }
        var /= float(d);
        float is = 1.0f / std::sqrt(var + eps);
        inv_std[r] = is;
        float* ph = xhat.data() + r * d;
        float* po = out.data() + r * d;
        for (int64_t i = 0; i < d; ++i) {
            ph[i] = (px[i] - mean) * is;
            po[i] = gamma->value[i] * ph[i] + beta->value[i];
        }
    }
    return make_node(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, d, rows, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Node& n) {
        Tensor dxhat({d});
        for (int64_t r = 0; r < rows; ++r) {
            const float* gy = n.grad.data() + r * d;
            const float* ph = xhat.data() + r * d;
            if (gamma->requires_grad) {
                Tensor& gg = gamma->ensure_grad();
                for (int64_t i = 0; i < d; ++i) gg[i] += gy[i] * ph[i];
            }
            if (beta->requires_grad) {
                Tensor& gb = beta->ensure_grad();
                ops().vadd(size_t(d), gb.data(), gy, gb.data());
            }
            if (x->requires_grad) {
                float mean_dx = 0.0f, mean_dxx = 0.0f;
                for (int64_t i = 0; i < d; ++i) {
                    dxhat[i] = gy[i] * gamma->value[i];
                    mean_dx += dxhat[i];
                    mean_dxx += dxhat[i] * ph[i];
                }
                mean_dx /= float(d);
                mean_dxx /= float(d);
                float* gx = x->ensure_grad().data() + r * d;
                float is = inv_std[r];
                for (int64_t i = 0; i < d; ++i)
                    gx[i] += is * (dxhat[i] - mean_dx - ph[i] * mean_dxx);
            }
        }
    });
}

Var embedding(const Var& table, const std::vector<int>& ids, int64_t B, int64_t T) {
    if (table->value.rank() != 2) fail(ErrorCode::shape_error, "embedding: table must be 2-D");
    int64_t V = table->value.dim(0), E = table->value.dim(1);
    if (int64_t(ids.size()) != B * T) fail(ErrorCode::shape_error, "embedding: ids length");
    Tensor out({B, T, E});
    for (int64_t i = 0; i < B * T; ++i) {
        int id = ids[size_t(i)];
        if (id < 0 || id >= V) fail(ErrorCode::invalid_input, "embedding: id out of range");
        std::copy_n(table->value.data() + int64_t(id) * E, E, out.data() + i * E);
    }
    return make_node(std::move(out), {table}, [table, ids, E](Node& n) {
        Tensor& g = table->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i)
            ops().vadd(size_t(E), g.data() + int64_t(ids[i]) * E,
                       n.grad.data() + int64_t(i) * E, g.data() + int64_t(ids[i]) * E);
    });
}

Var concat_lastdim(const std::vector<Var>& parts) {
    if (parts.empty()) fail(ErrorCode::invalid_input, "concat: no parts");
    auto lead = parts[0]->value.shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        auto s = p->value.shape();
        if (std::vector<int64_t>(s.begin(), s.end() - 1) !=
            std::vector<int64_t>(lead.begin(), lead.end() - 1))
            fail(ErrorCode::shape_error, "concat: leading dims differ");
        total += s.back();
    }
    int64_t rows = parts[0]->value.numel() / lead.back();
    std::vector<int64_t> out_shape(lead.begin(), lead.end() - 1);
    out_shape.push_back(total);
    Tensor out(out_shape);
    int64_t off = 0;
    for (const auto& p : parts) {
        int64_t w = p->value.shape().back();
        for (int64_t r = 0; r < rows; ++r)
            std::copy_n(p->value.data() + r * w, w, out.data() + r * total + off);
        off += w;
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_node(std::move(out), parents, [parts, rows, total](Node& n) {
        int64_t off2 = 0;
        for (const auto& p : parts) {
            int64_t w = p->value.shape().back();
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    ops().vadd(size_t(w), g.data() + r * w, n.grad.data() + r * total + off2,
                               g.data() + r * w);
            }
            off2 += w;
        }
    });
}

Var broadcast_add_rows(const Var& x, const Var& r) {
    if (x->value.rank() != 3 || r->value.rank() != 2 || x->value.dim(0) != r->value.dim(0) ||
        x->value.dim(2) != r->value.dim(1))
        fail(ErrorCode::shape_error, "broadcast_add_rows: shapes");
    int64_t B = x->value.dim(0), T = x->value.dim(1), d = x->value.dim(2);
    Tensor out(x->value.shape());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            ops().vadd(size_t(d), x->value.data() + (b * T + t) * d, r->value.data() + b * d,
                       out.data() + (b * T + t) * d);
    return make_node(std::move(out), {x, r}, [x, r, B, T, d](Node& n) {
        if (x->requires_grad) x->accumulate_grad(n.grad);
        if (r->requires_grad) {
            Tensor& g = r->ensure_grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t t = 0; t < T; ++t)
                    ops().vadd(size_t(d), g.data() + b * d, n.grad.data() + (b * T + t) * d,
                               g.data() + b * d);
        }
    });
}

Var row_mask(const Var& x, const Tensor& mask) {
    if (x->value.rank() != 3 || mask.rank() != 2 || mask.dim(0) != x->value.dim(0) ||
        mask.dim(1) != x->value.dim(1))
        fail(ErrorCode::shape_error, "row_mask: shapes");
    int64_t B = x->value.dim(0), T = x->value.dim(1), d = x->value.dim(2);
    Tensor out(x->value.shape());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            ops().vscale(size_t(d), mask.at(b, t), x->value.data() + (b * T + t) * d,
                         out.data() + (b * T + t) * d);
    return make_node(std::move(out), {x}, [x, mask, B, T, d](Node& n) {
        Tensor& g = x->ensure_grad();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
                ops().saxpy(size_t(d), mask.at(b, t), n.grad.data() + (b * T + t) * d,
                            g.data() + (b * T + t) * d);
    });
}

Var conv1d_same(const Var& x, const Var& w, const Var& b) {
    if (x->value.rank() != 3 || w->value.rank() != 3)
        fail(ErrorCode::shape_error, "conv1d: x must be [B,T,Cin], w [K,Cin,Cout]");
    int64_t B = x->value.dim(0), T = x->value.dim(1), ci = x->value.dim(2);
    int64_t K = w->value.dim(0), co = w->value.dim(2);
    if (w->value.dim(1) != ci || (K % 2) == 0)
        fail(ErrorCode::shape_error, "conv1d: kernel shape");
    if (b && b->value.numel() != co) fail(ErrorCode::shape_error, "conv1d: bias");
    int64_t off = K / 2;
    Tensor out({B, T, co});
    if (b)
        for (int64_t r = 0; r < B * T; ++r)
            std::copy_n(b->value.data(), co, out.data() + r * co);
    for (int64_t bi = 0; bi < B; ++bi) {
        for (int64_t o = 0; o < K; ++o) {
            // y[t] += x[t + o - off] * w[o] over valid t
            int64_t t0 = std::max<int64_t>(0, off - o);
            int64_t t1 = std::min<int64_t>(T, T + off - o);
            if (t0 >= t1) continue;
            const float* src = x->value.data() + (bi * T + t0 + o - off) * ci;
            float* dst = out.data() + (bi * T + t0) * co;
            ops().gemm_nn(size_t(t1 - t0), size_t(co), size_t(ci), src,
                          w->value.data() + o * ci * co, dst, true);
        }
    }
    return make_node(std::move(out), {x, w, b}, [x, w, b, B, T, ci, K, co, off](Node& n) {
        for (int64_t bi = 0; bi < B; ++bi) {
            for (int64_t o = 0; o < K; ++o) {
                int64_t t0 = std::max<int64_t>(0, off - o);
                int64_t t1 = std::min<int64_t>(T, T + off - o);
                if (t0 >= t1) continue;
                const float* gy = n.grad.data() + (bi * T + t0) * co;
                if (x->requires_grad)
                    ops().gemm_nt(size_t(t1 - t0), size_t(ci), size_t(co), gy,
                                  w->value.data() + o * ci * co,
                                  x->ensure_grad().data() + (bi * T + t0 + o - off) * ci, true);
                if (w->requires_grad)
                    ops().gemm_tn(size_t(ci), size_t(co), size_t(t1 - t0),
                                  x->value.data() + (bi * T + t0 + o - off) * ci, gy,
                                  w->ensure_grad().data() + o * ci * co, true);
            }
        }
        if (b && b->requires_grad) {
            Tensor& g = b->ensure_grad();
            for (int64_t r = 0; r < B * T; ++r)
                ops().vadd(size_t(co), g.data(), n.grad.data() + r * co, g.data());
        }
    });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

namespace {

void softmax_row_inplace(float* row, int64_t n) {
    float mx = row[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    float z = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        z += row[i];
    }
    float inv = 1.0f / z;
    for (int64_t i = 0; i < n; ++i) row[i] *= inv;
}

// gather head h columns of src [T, d] into dst [T, dh]
void pack_head(const float* src, int64_t T, int64_t d, int64_t h, int64_t dh, float mulby,
               float* dst) {
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < dh; ++i) dst[t * dh + i] = mulby * src[t * d + h * dh + i];
}

void scatter_head_add(const float* src, int64_t T, int64_t d, int64_t h, int64_t dh, float mulby,
                      float* dst) {
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < dh; ++i) dst[t * d + h * dh + i] += mulby * src[t * dh + i];
}

}  // namespace

Var mha(const Var& x, const Var& wq, const Var& bq, const Var& wk, const Var& bk, const Var& wv,
        const Var& bv, const Var& wo, const Var& bo, int n_heads, const Tensor& key_mask) {
    if (x->value.rank() != 3) fail(ErrorCode::shape_error, "mha: x must be [B,T,d]");
    int64_t B = x->value.dim(0), T = x->value.dim(1), d = x->value.dim(2);
    if (d % n_heads != 0) fail(ErrorCode::shape_error, "mha: d_model % n_heads != 0");
    int64_t H = n_heads, dh = d / H;
    float scale_q = 1.0f / std::sqrt(float(dh));

    auto project = [&](const Var& wgt, const Var& bias) {
        Tensor out({B, T, d});
        ops().gemm_nn(size_t(B * T), size_t(d), size_t(d), x->value.data(), wgt->value.data(),
                      out.data(), false);
        for (int64_t r = 0; r < B * T; ++r)
            ops().vadd(size_t(d), out.data() + r * d, bias->value.data(), out.data() + r * d);
        return out;
    };
    Tensor Q = project(wq, bq);  // pre-scaled below during packing
    Tensor K = project(wk, bk);
    Tensor V = project(wv, bv);

    // attention probabilities saved for backward: [B, H, T, T]
    auto probs = std::make_shared<Tensor>(Tensor({B, H, T, T}));
    Tensor attn_out({B, T, d});  // concat of heads, pre-output-projection
    Tensor qh({T, dh}), kh({T, dh}), vh({T, dh}), oh({T, dh});
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            pack_head(Q.data() + b * T * d, T, d, h, dh, scale_q, qh.data());
            pack_head(K.data() + b * T * d, T, d, h, dh, 1.0f, kh.data());
            pack_head(V.data() + b * T * d, T, d, h, dh, 1.0f, vh.data());
            float* S = probs->data() + ((b * H + h) * T) * T;
            ops().gemm_nt(size_t(T), size_t(T), size_t(dh), qh.data(), kh.data(), S, false);
            for (int64_t i = 0; i < T; ++i) {
                float* row = S + i * T;
                for (int64_t j = 0; j < T; ++j)
                    if (key_mask.at(b, j) == 0.0f) row[j] = -1e30f;
                softmax_row_inplace(row, T);
            }
            ops().gemm_nn(size_t(T), size_t(dh), size_t(T), S, vh.data(), oh.data(), false);
            scatter_head_add(oh.data(), T, d, h, dh, 1.0f, attn_out.data() + b * T * d);
        }
    }
    Tensor out({B, T, d});
    ops().gemm_nn(size_t(B * T), size_t(d), size_t(d), attn_out.data(), wo->value.data(),
                  out.data(), false);
    for (int64_t r = 0; r < B * T; ++r)
        ops().vadd(size_t(d), out.data() + r * d, bo->value.data(), out.data() + r * d);

    auto saved_q = std::make_shared<Tensor>(std::move(Q));
    auto saved_k = std::make_shared<Tensor>(std::move(K));
    auto saved_v = std::make_shared<Tensor>(std::move(V));
    auto saved_ao = std::make_shared<Tensor>(std::move(attn_out));

    return make_node(
        std::move(out), {x, wq, bq, wk, bk, wv, bv, wo, bo},
        [=](Node& n) {
            // output projection
            Tensor d_ao({B, T, d});
            ops().gemm_nt(size_t(B * T), size_t(d), size_t(d), n.grad.data(), wo->value.data(),
                          d_ao.data(), false);
            if (wo->requires_grad)
                ops().gemm_tn(size_t(d), size_t(d), size_t(B * T), saved_ao->data(),
                              n.grad.data(), wo->ensure_grad().data(), true);
            if (bo->requires_grad) {
                Tensor& g = bo->ensure_grad();
                for (int64_t r = 0; r < B * T; ++r)
                    ops().vadd(size_t(d), g.data(), n.grad.data() + r * d, g.data());
            }

            Tensor dQ({B, T, d}), dK({B, T, d}), dV({B, T, d});
            Tensor qh2({T, dh}), kh2({T, dh}), vh2({T, dh});
            Tensor doh({T, dh}), dP({T, T}), dqh({T, dh}), dkh({T, dh}), dvh({T, dh});
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t h = 0; h < H; ++h) {
                    pack_head(saved_q->data() + b * T * d, T, d, h, dh, scale_q, qh2.data());
                    pack_head(saved_k->data() + b * T * d, T, d, h, dh, 1.0f, kh2.data());
                    pack_head(saved_v->data() + b * T * d, T, d, h, dh, 1.0f, vh2.data());
                    pack_head(d_ao.data() + b * T * d, T, d, h, dh, 1.0f, doh.data());
                    const float* P = probs->data() + ((b * H + h) * T) * T;
                    // dV_h = P^T * dO_h
                    ops().gemm_tn(size_t(T), size_t(dh), size_t(T), P, doh.data(), dvh.data(),
                                  false);
                    // dP = dO_h * V_h^T
                    ops().gemm_nt(size_t(T), size_t(T), size_t(dh), doh.data(), vh2.data(),
                                  dP.data(), false);
                    // softmax backward, in place on dP -> dS
                    for (int64_t i = 0; i < T; ++i) {
                        const float* prow = P + i * T;
                        float* drow = dP.data() + i * T;
                        float acc = ops().dot(size_t(T), drow, prow);
                        for (int64_t j = 0; j < T; ++j)
                            drow[j] = prow[j] * (drow[j] - acc);
                    }
                    // dq_scaled = dS * K_h ; dk = dS^T * q_scaled
                    ops().gemm_nn(size_t(T), size_t(dh), size_t(T), dP.data(), kh2.data(),
                                  dqh.data(), false);
                    ops().gemm_tn(size_t(T), size_t(dh), size_t(T), dP.data(), qh2.data(),
                                  dkh.data(), false);
                    // chain rule through the q pre-scaling
                    scatter_head_add(dqh.data(), T, d, h, dh, scale_q, dQ.data() + b * T * d);
                    scatter_head_add(dkh.data(), T, d, h, dh, 1.0f, dK.data() + b * T * d);
                    scatter_head_add(dvh.data(), T, d, h, dh, 1.0f, dV.data() + b * T * d);
                }
            }
            auto back_projection = [&](Tensor& dproj, const Var& wgt, const Var& bias) {
                if (x->requires_grad)
                    ops().gemm_nt(size_t(B * T), size_t(d), size_t(d), dproj.data(),
                                  wgt->value.data(), x->ensure_grad().data(), true);
                if (wgt->requires_grad)
                    ops().gemm_tn(size_t(d), size_t(d), size_t(B * T), x->value.data(),
                                  dproj.data(), wgt->ensure_grad().data(), true);
                if (bias->requires_grad) {
                    Tensor& g = bias->ensure_grad();
                    for (int64_t r = 0; r < B * T; ++r)
                        ops().vadd(size_t(d), g.data(), dproj.data() + r * d, g.data());
                }
            };
            back_projection(dQ, wq, bq);
            back_projection(dK, wk, bk);
            back_projection(dV, wv, bv);
        });
}

Var attention_pool(const Var& x, const Var& w, const Var& b, const Tensor& mask) {
    if (x->value.rank() != 3) fail(ErrorCode::shape_error, "attention_pool: x must be [B,T,d]");
    int64_t B = x->value.dim(0), T = x->value.dim(1), d = x->value.dim(2);
    if (w->value.numel() != d || b->value.numel() != 1)
        fail(ErrorCode::shape_error, "attention_pool: score params");
    auto alpha = std::make_shared<Tensor>(Tensor({B, T}));
    Tensor out({B, d});
    for (int64_t bi = 0; bi < B; ++bi) {
        float* a = alpha->data() + bi * T;
        for (int64_t t = 0; t < T; ++t) {
            a[t] = ops().dot(size_t(d), x->value.data() + (bi * T + t) * d, w->value.data()) +
                   b->value[0];
            if (mask.at(bi, t) == 0.0f) a[t] = -1e30f;
        }
        softmax_row_inplace(a, T);
        float* o = out.data() + bi * d;
        for (int64_t t = 0; t < T; ++t)
            ops().saxpy(size_t(d), a[t], x->value.data() + (bi * T + t) * d, o);
    }
    return make_node(std::move(out), {x, w, b}, [x, w, b, alpha, B, T, d](Node& n) {
        Tensor dalpha({T});
        Tensor dscore({T});
        for (int64_t bi = 0; bi < B; ++bi) {
            const float* a = alpha->data() + bi * T;
            const float* go = n.grad.data() + bi * d;
            for (int64_t t = 0; t < T; ++t)
                dalpha[t] = ops().dot(size_t(d), go, x->value.data() + (bi * T + t) * d);
            float acc = ops().dot(size_t(T), dalpha.data(), a);
            for (int64_t t = 0; t < T; ++t) dscore[t] = a[t] * (dalpha[t] - acc);
            if (x->requires_grad) {
                Tensor& gx = x->ensure_grad();
                for (int64_t t = 0; t < T; ++t) {
                    float* g = gx.data() + (bi * T + t) * d;
                    ops().saxpy(size_t(d), a[t], go, g);
                    ops().saxpy(size_t(d), dscore[t], w->value.data(), g);
                }
            }
            if (w->requires_grad) {
                Tensor& gw = w->ensure_grad();
                for (int64_t t = 0; t < T; ++t)
                    ops().saxpy(size_t(d), dscore[t], x->value.data() + (bi * T + t) * d,
                                gw.data());
            }
            if (b->requires_grad) b->ensure_grad()[0] += ops().sum(size_t(T), dscore.data());
        }
    });
}

Var dropout(const Var& x, float p, Rng& rng, bool training) {
    if (!training || p <= 0.0f) return x;
    if (p >= 1.0f) fail(ErrorCode::invalid_input, "dropout rate must be < 1");
    float keep = 1.0f - p;
    float inv = 1.0f / keep;
    auto mask = std::make_shared<Tensor>(Tensor(x->value.shape()));
    Tensor out(x->value.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        float m = rng.uniformf() < p ? 0.0f : inv;
        (*mask)[i] = m;
        out[i] = x->value[i] * m;
    }
    return make_node(std::move(out), {x}, [x, mask](Node& n) {
        Tensor& g = x->ensure_grad();
        for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += n.grad[i] * (*mask)[i];
    });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

std::vector<double> gaussian_soft_labels(int c_gt, int n_classes, double sigma) {
    std::vector<double> y(size_t(n_classes));
    double denom = 2.0 * sigma * sigma;
    for (int c = 0; c < n_classes; ++c) {
        double diff = double(c - c_gt);
        y[size_t(c)] = std::exp(-diff * diff / denom);
    }
    return y;
}

Var gce_with_logits(const Var& logits, const std::vector<int>& targets, double sigma,
                    bool normalize_labels) {
    if (logits->value.rank() != 2) fail(ErrorCode::shape_error, "gce: logits must be [B,N]");
    int64_t B = logits->value.dim(0), N = logits->value.dim(1);
    if (int64_t(targets.size()) != B) fail(ErrorCode::invalid_input, "gce: targets size");
    if (B == 0) fail(ErrorCode::invalid_input, "gce: empty batch");
    if (sigma <= 0.0) fail(ErrorCode::invalid_input, "gce: sigma must be positive");
    constexpr double kLogEps = -27.631021115928547;  // log(1e-12)

    auto probs = std::make_shared<Tensor>(Tensor({B, N}));
    auto soft = std::make_shared<Tensor>(Tensor({B, N}));
    // clamp indicator: 1 where log p fell below log(eps); those terms are
    // constant and contribute no gradient
    auto clamped = std::make_shared<Tensor>(Tensor({B, N}));
    double total = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        int tgt = targets[size_t(b)];
        if (tgt < 0 || tgt >= N) fail(ErrorCode::invalid_input, "gce: target out of range");
        const float* l = logits->value.data() + b * N;
        double mx = l[0];
        for (int64_t c = 1; c < N; ++c) mx = std::max(mx, double(l[c]));
        double z = 0.0;
        for (int64_t c = 0; c < N; ++c) z += std::exp(double(l[c]) - mx);
        double logz = std::log(z);
        auto y = gaussian_soft_labels(tgt, int(N), sigma);
        if (normalize_labels) {
            double s = 0.0;
            for (double v : y) s += v;
            for (double& v : y) v /= s;
        }
        double row_loss = 0.0;
        for (int64_t c = 0; c < N; ++c) {
            double logp = double(l[c]) - mx - logz;
            probs->at(b, c) = float(std::exp(logp));
            soft->at(b, c) = float(y[size_t(c)]);
            bool cl = logp < kLogEps;
            clamped->at(b, c) = cl ? 1.0f : 0.0f;
            row_loss -= y[size_t(c)] * std::max(logp, kLogEps);
        }
        total += row_loss;
    }
    Tensor out({1});
    out[0] = float(total / double(B));
    return make_node(std::move(out), {logits}, [logits, probs, soft, clamped, B, N](Node& n) {
        if (!logits->requires_grad) return;
        Tensor& g = logits->ensure_grad();
        float gscale = n.grad[0] / float(B);
        for (int64_t b = 0; b < B; ++b) {
            double ysum = 0.0;
            for (int64_t c = 0; c < N; ++c)
                if (clamped->at(b, c) == 0.0f) ysum += double(soft->at(b, c));
            for (int64_t c = 0; c < N; ++c) {
                double yc = clamped->at(b, c) == 0.0f ? double(soft->at(b, c)) : 0.0;
                g.at(b, c) += gscale * float(ysum * double(probs->at(b, c)) - yc);
            }
        }
    });
}

Var masked_mse(const Var& pred, const Tensor& target, const Tensor& frame_mask) {
    if (!pred->value.same_shape(target)) fail(ErrorCode::shape_error, "masked_mse: shapes");
    if (pred->value.rank() != 3 || frame_mask.rank() != 2 ||
        frame_mask.dim(0) != pred->value.dim(0) || frame_mask.dim(1) != pred->value.dim(1))
        fail(ErrorCode::shape_error, "masked_mse: mask shape");
    int64_t B = pred->value.dim(0), T = pred->value.dim(1), D = pred->value.dim(2);
    int64_t count = 0;
    double total = 0.0;
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t)
            if (frame_mask.at(b, t) != 0.0f) {
                count += D;
                total += double(ops().sqdiff_sum(size_t(D), pred->value.data() + (b * T + t) * D,
                                                 target.data() + (b * T + t) * D));
            }
    if (count == 0) fail(ErrorCode::invalid_mask, "mask selects no frames");
    Tensor out({1});
    out[0] = float(total / double(count));
    return make_node(std::move(out), {pred}, [pred, target, frame_mask, B, T, D, count](Node& n) {
        if (!pred->requires_grad) return;
        Tensor& g = pred->ensure_grad();
        float c = 2.0f * n.grad[0] / float(count);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t) {
                if (frame_mask.at(b, t) == 0.0f) continue;
                const float* p = pred->value.data() + (b * T + t) * D;
                const float* tg = target.data() + (b * T + t) * D;
                float* gp = g.data() + (b * T + t) * D;
                for (int64_t i = 0; i < D; ++i) gp[i] += c * (p[i] - tg[i]);
            }
    });
}

Var mean_all(const Var& x) {
    int64_t n = x->value.numel();
    Tensor out({1});
    out[0] = ops().sum(size_t(n), x->value.data()) / float(n);
    return make_node(std::move(out), {x}, [x, n](Node& nd) {
        Tensor& g = x->ensure_grad();
        float c = nd.grad[0] / float(n);
        for (int64_t i = 0; i < n; ++i) g[i] += c;
    });
}

Tensor softmax_rows(const Tensor& x) {
    int64_t d = x.shape().back();
    int64_t rows = x.numel() / d;
    Tensor out = x;
    for (int64_t r = 0; r < rows; ++r) softmax_row_inplace(out.data() + r * d, d);
    return out;
}

// ---------------------------------------------------------------------------
// parameters / optimizer
// ---------------------------------------------------------------------------

Var ParamSet::add(const std::string& name, Tensor init) {
    Var v = leaf(std::move(init), true);
    items.emplace_back(name, v);
    return v;
}

Var ParamSet::find(const std::string& name) const {
    for (const auto& [n, v] : items)
        if (n == name) return v;
    return nullptr;
}

void ParamSet::zero_grads() {
    for (auto& [n, v] : items) v->ensure_grad().fill(0.0f);
}

int64_t ParamSet::total_size() const {
    int64_t s = 0;
    for (const auto& [n, v] : items) s += v->value.numel();
    return s;
}

double AdamW::lr_at(int step) const {
    if (warmup_steps > 0 && step <= warmup_steps)
        return peak_lr * double(step) / double(warmup_steps);
    if (total_steps <= warmup_steps) return peak_lr;
    double rem = double(total_steps - step) / double(total_steps - warmup_steps);
    return peak_lr * std::max(rem, 0.0);
}

void AdamW::step(ParamSet& params) {
    if (m.size() != params.items.size()) {
        m.clear();
        v.clear();
        for (auto& [n, p] : params.items) {
            m.emplace_back(p->value.shape());
            v.emplace_back(p->value.shape());
        }
    }
    ++step_count;
    double lr = lr_at(step_count);
    double bc1 = 1.0 - std::pow(beta1, step_count);
    double bc2 = 1.0 - std::pow(beta2, step_count);
    for (size_t pi = 0; pi < params.items.size(); ++pi) {
        Var& p = params.items[pi].second;
        const Tensor& g = p->grad;
        if (g.numel() != p->value.numel()) continue;  // never touched by backward
        float* mp = m[pi].data();
        float* vp = v[pi].data();
        float* w = p->value.data();
        const float* gp = g.data();
        for (int64_t i = 0; i < p->value.numel(); ++i) {
            double gi = double(gp[i]);
            double mi = beta1 * double(mp[i]) + (1.0 - beta1) * gi;
            double vi = beta2 * double(vp[i]) + (1.0 - beta2) * gi * gi;
            mp[i] = float(mi);
            vp[i] = float(vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            double upd = lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * double(w[i]));
            w[i] = float(double(w[i]) - upd);
        }
    }
}

}  // namespace xlf5::nn
