#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xlf5/rng.hpp"
#include "xlf5/tensor.hpp"

// Reverse-mode autodiff over dense float tensors. Each op builds a node with
// a backward closure; backward() walks the graph in reverse topological
// order. All arithmetic routes through the kernel layer, and every op has a
// fixed accumulation order, so seeded training runs reproduce bit-identically
// on a given machine.
namespace xlf5::nn {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first use, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
    void accumulate_grad(const Tensor& g);
};

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);

// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

// ---- elementwise / linear algebra ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float c);
Var matmul(const Var& a, const Var& b);  // strict 2-D

// x [*, k] -> [*, n]; w [k, n]; optional bias [n]
Var linear(const Var& x, const Var& w, const Var& b);
Var gelu(const Var& x);
// x [*, d] normalized over the last dim
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
// table [V, E], ids flattened [B*T] -> [B, T, E]
Var embedding(const Var& table, const std::vector<int>& ids, int64_t B, int64_t T);
Var concat_lastdim(const std::vector<Var>& parts);
// x [B,T,d] + r [B,d] broadcast over frames
Var broadcast_add_rows(const Var& x, const Var& r);
// zero out padded frames; mask [B,T] with 1=keep
Var row_mask(const Var& x, const Tensor& mask);
// x [B,T,Cin], w [K,Cin,Cout], bias [Cout]; zero same-padding, odd K
Var conv1d_same(const Var& x, const Var& w, const Var& b);
// pre-LN multi-head self-attention core (projections included);
// key_mask [B,T] with 1=real frame
Var mha(const Var& x, const Var& wq, const Var& bq, const Var& wk, const Var& bk, const Var& wv,
        const Var& bv, const Var& wo, const Var& bo, int n_heads, const Tensor& key_mask);
// learned-scalar-score softmax pooling over frames: x [B,T,d] -> [B,d]
Var attention_pool(const Var& x, const Var& w, const Var& b, const Tensor& mask);
Var dropout(const Var& x, float p, Rng& rng, bool training);

// ---- losses ----
// Cross-entropy of softmax(logits) against unnormalized Gaussian soft labels
// centered on each target index. Returns scalar.
Var gce_with_logits(const Var& logits, const std::vector<int>& targets, double sigma,
                    bool normalize_labels = false);
// Mean squared error over entries of frames selected by frame_mask [B,T].
Var masked_mse(const Var& pred, const Tensor& target, const Tensor& frame_mask);
Var mean_all(const Var& x);

// ---- plain-tensor helpers ----
Tensor softmax_rows(const Tensor& x);
// Gaussian soft label vector: y[c] = exp(-(c-c_gt)^2 / (2 sigma^2))
std::vector<double> gaussian_soft_labels(int c_gt, int n_classes, double sigma);

// ---- parameters & optimizer ----
struct ParamSet {
    std::vector<std::pair<std::string, Var>> items;

    Var add(const std::string& name, Tensor init);
    Var find(const std::string& name) const;
    void zero_grads();
    int64_t total_size() const;
};

// Adam with decoupled weight decay and a linear warmup / linear decay
// schedule on the learning rate.
struct AdamW {
    double peak_lr = 1e-3;
    int warmup_steps = 0;
    int total_steps = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    int step_count = 0;
    std::vector<Tensor> m, v;

    double lr_at(int step) const;  // 1-based
    void step(ParamSet& params);
};

}  // namespace xlf5::nn
