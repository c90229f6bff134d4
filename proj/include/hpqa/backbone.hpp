#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hpqa/param.hpp"
#include "hpqa/prompt_pool.hpp"

namespace hpqa {

struct BackboneConfig {
    int vocab = 0;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 128;
    int max_seq = 320;
};

struct QALoss {
    double value = 0.0;
    std::vector<double> token_nll;  // one entry per target token
};

// Single-layer encoder-decoder with soft-prompt rows prepended to the encoder
// input. Pre-LN blocks, ReLU feed-forward, fixed sinusoidal positions added
// after prompt prepending (prompt rows occupy positions 0..p-1).
class Seq2SeqModel {
public:
    Seq2SeqModel(const BackboneConfig& cfg, std::uint64_t seed);

    const BackboneConfig& config() const { return cfg_; }

    // Teacher-forced loss; accumulates grad_scale * dL into model parameter
    // grads and into the prompt rows referenced by `prompt`.
    QALoss forward_loss(const ComposedPrompt& prompt, const std::vector<int>& input,
                        const std::vector<int>& target, double grad_scale = 1.0);

    // Loss only, no gradient accumulation.
    QALoss eval_loss(const ComposedPrompt& prompt, const std::vector<int>& input,
                     const std::vector<int>& target);

    // Iterative argmax decode; ties resolve to the lowest token id. The
    // returned sequence includes <eos> when it was emitted.
    std::vector<int> greedy_decode(const ComposedPrompt& prompt, const std::vector<int>& input,
                                   int max_len) const;

    std::vector<Param*> params();
    void visit_params(const std::function<void(Param&)>& fn);

private:
    BackboneConfig cfg_;
    Matrix pos_;  // max_seq x d_model sinusoidal table

    struct Ln {
        Param g, b;
    };
    struct Attn {
        Param wq, wk, wv, wo;
        Param rel_bias;  // heads x offset buckets; empty for cross attention
    };

    Param emb_;
    Ln enc_ln1_, enc_ln2_, enc_lnf_;
    Attn enc_attn_;
    Param enc_w1_, enc_w2_;
    Ln dec_ln1_, dec_ln2_, dec_ln3_, dec_lnf_;
    Attn dec_self_, dec_cross_;
    Param dec_w1_, dec_w2_;

    QALoss run(const ComposedPrompt& prompt, const std::vector<int>& input,
               const std::vector<int>& target, bool backward, double grad_scale);
    Matrix encode(const ComposedPrompt& prompt, const std::vector<int>& input) const;
    Matrix decoder_logits(const Matrix& enc_h, const std::vector<int>& dec_in) const;
};

// -log softmax(logits)[gold] per row, averaged; used by tests directly.
double cross_entropy_mean(const Matrix& logits, const std::vector<int>& gold);

}  // namespace hpqa
