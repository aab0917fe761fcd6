#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mole/tensor.hpp"

namespace mole {

/// One low-rank adapter: contributes (alpha/rank) * B * A * x.
/// B starts all-zero so a fresh expert contributes exactly nothing.
struct LoraExpert {
    Tensor2D a;    // rank x in_dim
    Tensor2D b;    // out_dim x rank
    int rank = 0;
    double alpha = 0.0;
};

/// Gating weights; routing any input yields a probability vector over experts.
struct Router {
    Tensor2D w_g; // num_experts x in_dim
};

/// Gradients for one per-token backward pass. There is deliberately no slot
/// for the base weight: it is frozen and never receives a gradient.
struct MoleGradients {
    std::vector<Tensor2D> d_a;
    std::vector<Tensor2D> d_b;
    Tensor2D d_wg;
    Tensor1D d_x;
};

/// Batched counterpart; parameter gradients are summed over rows of the input.
struct MoleBatchGradients {
    std::vector<Tensor2D> d_a;
    std::vector<Tensor2D> d_b;
    Tensor2D d_wg;
    Tensor2D d_x; // same shape as the forward input
};

/// Linear map with a frozen base weight, a set of low-rank experts, and a
/// softmax router mixing the expert outputs per input:
///
///   h = W0 x + sum_i R_i * (alpha/rank) * B_i A_i x,   R = softmax(W_g x)
///
/// Every expert contributes with a continuous weight (soft routing); nothing
/// is hard-selected. Only experts and router train; W0 never changes.
class MoleLinear {
public:
    MoleLinear() = default;

    /// Fresh layer: W0 ~ N(0, 1/sqrt(in_dim)), A ~ U(-1/sqrt(in_dim), +),
    /// B = 0, W_g = 0. Zero B and zero W_g make the initial layer behave as a
    /// plain frozen linear with uniform routing.
    static MoleLinear init(int out_dim, int in_dim, int num_experts, int rank, double alpha,
                           Rng& rng);

    /// Assemble from explicit parts (checkpoint load); validates invariants.
    static MoleLinear from_parts(Tensor2D w0, std::vector<LoraExpert> experts, Router router);

    int in_dim() const { return w0_.cols; }
    int out_dim() const { return w0_.rows; }
    int num_experts() const { return static_cast<int>(experts_.size()); }
    int rank() const { return experts_.empty() ? 0 : experts_[0].rank; }
    double alpha() const { return experts_.empty() ? 0.0 : experts_[0].alpha; }
    double scaling() const { return scaling_; }

    const Tensor2D& base_weight() const { return w0_; }
    const std::vector<LoraExpert>& experts() const { return experts_; }
    const Router& router() const { return router_; }

    /// R = softmax(W_g x), a length-T probability vector.
    Tensor1D route(const Tensor1D& x) const;

    /// Row-per-input routing; each row of the result sums to 1.
    Tensor2D route_batch(const Tensor2D& x) const;

    struct ForwardCache {
        std::uint64_t layer_id = 0;
        std::uint64_t revision = 0;
        Tensor1D x;
        Tensor1D r;              // routing weights
        std::vector<Tensor1D> u; // per expert, A_i x
        std::vector<Tensor1D> v; // per expert, B_i A_i x
    };

    std::pair<Tensor1D, ForwardCache> forward(const Tensor1D& x) const;
    MoleGradients backward(const ForwardCache& cache, const Tensor1D& upstream) const;

    struct BatchCache {
        std::uint64_t layer_id = 0;
        std::uint64_t revision = 0;
        Tensor2D x;
        Tensor2D r;              // rows x num_experts
        std::vector<Tensor2D> u; // per expert, rows x rank
        std::vector<Tensor2D> v; // per expert, rows x out_dim
    };

    std::pair<Tensor2D, BatchCache> forward_batch(const Tensor2D& x) const;
    MoleBatchGradients backward_batch(const BatchCache& cache, const Tensor2D& upstream) const;

    /// Inference-only batched forward: no cache. When routes is non-null the
    /// per-row routing weights are written there (rows x num_experts).
    Tensor2D apply_batch(const Tensor2D& x, Tensor2D* routes = nullptr) const;

    /// Mutable access for the optimizer. Any call invalidates outstanding
    /// forward caches (backward against them raises ContractError).
    Tensor2D& mutable_expert_a(int i);
    Tensor2D& mutable_expert_b(int i);
    Tensor2D& mutable_router_weight();

    std::int64_t trainable_param_count() const;
    std::int64_t frozen_param_count() const { return static_cast<std::int64_t>(w0_.data.size()); }

    std::uint64_t layer_id() const { return layer_id_; }

private:
    Tensor2D w0_;
    std::vector<LoraExpert> experts_;
    Router router_;
    double scaling_ = 0.0; // alpha / rank
    std::uint64_t layer_id_ = 0;
    std::uint64_t revision_ = 0;

    void check_input(int len) const;
    void assign_id();
};

/// Fig-5 style aggregation: for each task, the mean routing vector over every
/// collected row (tokens x layers x records). Means stay on the simplex.
std::map<std::string, Tensor1D> mean_router_weights(
    const std::map<std::string, std::vector<Tensor2D>>& per_task_routes);

} // namespace mole
