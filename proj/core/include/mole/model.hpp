#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mole/mole_linear.hpp"
#include "mole/tensor.hpp"
#include "mole/tokenizer.hpp"

namespace mole {

struct ModelConfig {
    int vocab_size = tok::kVocabSize;
    int embed_dim = 64;
    int num_layers = 2;
    int num_heads = 2;
    int max_seq_len = 512;
    int num_experts = 3;
    int rank = 8;
    double alpha = 16.0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// One transformer block: pre-norm attention and MLP, every linear projection
/// a MoleLinear. Norms carry no learned gain, so the trainable set is exactly
/// embeddings + expert adapters + routers.
struct Block {
    MoleLinear q, k, v, o; // embed_dim -> embed_dim
    MoleLinear up;         // embed_dim -> 4*embed_dim
    MoleLinear down;       // 4*embed_dim -> embed_dim
};

/// Gradient buffers mirroring one MoleLinear's trainable tensors.
struct MoleGradBuffers {
    std::vector<Tensor2D> a;
    std::vector<Tensor2D> b;
    Tensor2D wg;
};

/// Small from-scratch causal LM over the byte vocabulary. The backbone
/// weights are frozen random features; capacity for adaptation lives in the
/// (trainable) embeddings and the expert adapters + routers of each linear.
class TinyLM {
public:
    TinyLM() = default;

    static TinyLM init(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    /// Logits for every position. Causal: row i depends only on tokens <= i.
    /// Throws std::out_of_range for overlength input or bad token ids.
    Tensor2D forward_lm(const std::vector<int>& tokens) const;

    /// Same forward, additionally appending each MoLE linear's per-token
    /// routing weights (rows x num_experts) to *route_sink in layer order.
    Tensor2D forward_lm(const std::vector<int>& tokens, std::vector<Tensor2D>* route_sink) const;

    /// Greedy decoding until EOS or the budget runs out. Deterministic.
    std::vector<int> generate(const std::vector<int>& prompt, int max_new_tokens) const;

    /// Forward + masked cross entropy + full backward. Gradients are scaled
    /// by grad_scale and accumulated into the internal buffers. dropout_rate
    /// zeroes residual-branch activations during training only; masks are
    /// drawn from *dropout_rng (required when rate > 0).
    double loss_and_accumulate(const std::vector<int>& tokens,
                               const std::vector<std::uint8_t>& loss_mask, double grad_scale,
                               double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

    void zero_grads();

    struct ParamSlot {
        std::string name;
        Tensor2D* value;
        Tensor2D* grad;
    };

    /// Every trainable tensor paired with its gradient buffer, in a fixed
    /// deterministic order. Acquiring the slots counts as parameter mutation
    /// for cache-staleness purposes.
    std::vector<ParamSlot> trainable_slots();

    std::int64_t trainable_param_count() const;
    std::int64_t frozen_param_count() const;

    /// Frozen base weights of every MoleLinear, in layer order.
    std::vector<const Tensor2D*> base_weights() const;

    const Tensor2D& token_embedding() const { return tok_embed_; }
    const Tensor2D& position_embedding() const { return pos_embed_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    // checkpoint plumbing
    Tensor2D& mutable_token_embedding() { return tok_embed_; }
    Tensor2D& mutable_position_embedding() { return pos_embed_; }
    std::vector<Block>& mutable_blocks() { return blocks_; }
    void set_config(const ModelConfig& cfg);
    void rebuild_grad_buffers();

private:
    ModelConfig cfg_;
    Tensor2D tok_embed_; // vocab_size x embed_dim (also the tied output head)
    Tensor2D pos_embed_; // max_seq_len x embed_dim
    std::vector<Block> blocks_;

    Tensor2D tok_embed_grad_;
    Tensor2D pos_embed_grad_;
    std::vector<std::vector<MoleGradBuffers>> block_grads_; // per block: q,k,v,o,up,down

    Tensor2D embed_tokens(const std::vector<int>& tokens) const;
    void check_tokens(const std::vector<int>& tokens) const;
};

} // namespace mole
