#include "mole/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mole {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

double gelu(double x) {
    const double inner = kGeluC * (x + kGeluK * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_grad(double x) {
    const double inner = kGeluC * (x + kGeluK * x * x * x);
    const double t = std::tanh(inner);
    const double dinner = kGeluC * (1.0 + 3.0 * kGeluK * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

/// y = x / sqrt(mean(x^2) + eps) per row; returns per-row rms.
std::vector<double> rmsnorm_rows(const Tensor2D& x, Tensor2D& y) {
    std::vector<double> rms(static_cast<std::size_t>(x.rows));
    y = Tensor2D(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row_ptr(i);
        double ms = 0.0;
        for (int j = 0; j < x.cols; ++j) ms += xr[j] * xr[j];
        const double r = std::sqrt(ms / x.cols + kRmsEps);
        rms[static_cast<std::size_t>(i)] = r;
        double* yr = y.row_ptr(i);
        const double inv = 1.0 / r;
        for (int j = 0; j < x.cols; ++j) yr[j] = xr[j] * inv;
    }
    return rms;
}

/// dx for y = x / rms(x), accumulated into dst.
void rmsnorm_backward_rows(const Tensor2D& x, const std::vector<double>& rms, const Tensor2D& dy,
                           Tensor2D& dst) {
    for (int i = 0; i < x.rows; ++i) {
        const double* xr = x.row_ptr(i);
        const double* dyr = dy.row_ptr(i);
        double* out = dst.row_ptr(i);
        const double r = rms[static_cast<std::size_t>(i)];
        double dot = 0.0;
        for (int j = 0; j < x.cols; ++j) dot += dyr[j] * xr[j];
        const double inv_r = 1.0 / r;
        const double coef = dot / (static_cast<double>(x.cols) * r * r * r);
        for (int j = 0; j < x.cols; ++j) out[j] += dyr[j] * inv_r - coef * xr[j];
    }
}

Tensor2D head_slice(const Tensor2D& m, int head, int head_dim) {
    Tensor2D out(m.rows, head_dim);
    const int off = head * head_dim;
    for (int i = 0; i < m.rows; ++i) {
        const double* src = m.row_ptr(i) + off;
        std::copy(src, src + head_dim, out.row_ptr(i));
    }
    return out;
}

void head_unslice_add(Tensor2D& dst, const Tensor2D& part, int head, int head_dim) {
    const int off = head * head_dim;
    for (int i = 0; i < dst.rows; ++i) {
        double* d = dst.row_ptr(i) + off;
        const double* s = part.row_ptr(i);
        for (int j = 0; j < head_dim; ++j) d[j] += s[j];
    }
}

/// Causal scaled-dot-product attention for one head. Probabilities are kept
/// (rows x rows, zero above the diagonal) for the backward pass.
Tensor2D attend_head(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v, Tensor2D& probs) {
    const int n = q.rows;
    const int hd = q.cols;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    probs = Tensor2D(n, n, 0.0);
    for (int i = 0; i < n; ++i) {
        double* prow = probs.row_ptr(i);
        const double* qi = q.row_ptr(i);
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
            const double* kj = k.row_ptr(j);
            double s = 0.0;
            for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
            s *= inv_scale;
            prow[j] = s;
            mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
            prow[j] = std::exp(prow[j] - mx);
            sum += prow[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j <= i; ++j) prow[j] *= inv;
    }
    return matmul(probs, v);
}

struct LayerCache {
    Tensor2D x_in;
    Tensor2D xn1;
    std::vector<double> rms1;
    MoleLinear::BatchCache qc, kc, vc;
    Tensor2D q, k, v;
    std::vector<Tensor2D> probs; // per head
    Tensor2D attn_concat;
    MoleLinear::BatchCache oc;
    Tensor2D x_mid;
    Tensor2D xn2;
    std::vector<double> rms2;
    MoleLinear::BatchCache upc;
    Tensor2D u_pre;
    Tensor2D u_act;
    MoleLinear::BatchCache downc;
    Tensor2D drop1; // residual-branch dropout multipliers (empty when unused)
    Tensor2D drop2;
};

} // namespace

void ModelConfig::validate() const {
    if (vocab_size <= 0 || embed_dim <= 0 || num_layers <= 0 || num_heads <= 0 ||
        max_seq_len <= 0 || num_experts <= 0 || rank <= 0 || alpha <= 0.0) {
        throw ValidationError("ModelConfig: all fields must be positive");
    }
    if (embed_dim % num_heads != 0) {
        throw ValidationError("ModelConfig: embed_dim " + std::to_string(embed_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (rank > embed_dim) {
        throw ValidationError("ModelConfig: rank " + std::to_string(rank) +
                              " exceeds embed_dim " + std::to_string(embed_dim));
    }
}

TinyLM TinyLM::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TinyLM m;
    m.cfg_ = cfg;
    Rng rng(seed);
    const double emb_std = 0.25;
    m.tok_embed_ = Tensor2D::random_normal(cfg.vocab_size, cfg.embed_dim, emb_std, rng);
    m.pos_embed_ = Tensor2D::random_normal(cfg.max_seq_len, cfg.embed_dim, emb_std, rng);
    const int d = cfg.embed_dim;
    m.blocks_.resize(static_cast<std::size_t>(cfg.num_layers));
    for (Block& blk : m.blocks_) {
        blk.q = MoleLinear::init(d, d, cfg.num_experts, cfg.rank, cfg.alpha, rng);
        blk.k = MoleLinear::init(d, d, cfg.num_experts, cfg.rank, cfg.alpha, rng);
        blk.v = MoleLinear::init(d, d, cfg.num_experts, cfg.rank, cfg.alpha, rng);
        blk.o = MoleLinear::init(d, d, cfg.num_experts, cfg.rank, cfg.alpha, rng);
        blk.up = MoleLinear::init(4 * d, d, cfg.num_experts, cfg.rank, cfg.alpha, rng);
        blk.down = MoleLinear::init(d, 4 * d, cfg.num_experts, cfg.rank, cfg.alpha, rng);
    }
    m.rebuild_grad_buffers();
    return m;
}

void TinyLM::set_config(const ModelConfig& cfg) {
    cfg.validate();
    cfg_ = cfg;
}

void TinyLM::rebuild_grad_buffers() {
    tok_embed_grad_ = Tensor2D(tok_embed_.rows, tok_embed_.cols);
    pos_embed_grad_ = Tensor2D(pos_embed_.rows, pos_embed_.cols);
    block_grads_.clear();
    block_grads_.resize(blocks_.size());
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const Block& blk = blocks_[l];
        auto make = [](const MoleLinear& lin) {
            MoleGradBuffers buf;
            for (const LoraExpert& e : lin.experts()) {
                buf.a.emplace_back(e.a.rows, e.a.cols);
                buf.b.emplace_back(e.b.rows, e.b.cols);
            }
            buf.wg = Tensor2D(lin.router().w_g.rows, lin.router().w_g.cols);
            return buf;
        };
        block_grads_[l].resize(6);
        block_grads_[l][0] = make(blk.q);
        block_grads_[l][1] = make(blk.k);
        block_grads_[l][2] = make(blk.v);
        block_grads_[l][3] = make(blk.o);
        block_grads_[l][4] = make(blk.up);
        block_grads_[l][5] = make(blk.down);
    }
}

void TinyLM::check_tokens(const std::vector<int>& tokens) const {
    if (static_cast<int>(tokens.size()) > cfg_.max_seq_len) {
        throw std::out_of_range("TinyLM: sequence of " + std::to_string(tokens.size()) +
                                " tokens exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg_.vocab_size) {
            throw std::out_of_range("TinyLM: token id " + std::to_string(t) +
                                    " outside vocab of " + std::to_string(cfg_.vocab_size));
        }
    }
}

Tensor2D TinyLM::embed_tokens(const std::vector<int>& tokens) const {
    const int n = static_cast<int>(tokens.size());
    Tensor2D x(n, cfg_.embed_dim);
    for (int i = 0; i < n; ++i) {
        const double* te = tok_embed_.row_ptr(tokens[static_cast<std::size_t>(i)]);
        const double* pe = pos_embed_.row_ptr(i);
        double* xr = x.row_ptr(i);
        for (int j = 0; j < cfg_.embed_dim; ++j) xr[j] = te[j] + pe[j];
    }
    return x;
}

Tensor2D TinyLM::forward_lm(const std::vector<int>& tokens) const {
    return forward_lm(tokens, nullptr);
}

Tensor2D TinyLM::forward_lm(const std::vector<int>& tokens,
                            std::vector<Tensor2D>* route_sink) const {
    check_tokens(tokens);
    const int n = static_cast<int>(tokens.size());
    const int heads = cfg_.num_heads;
    const int hd = cfg_.embed_dim / heads;
    Tensor2D x = embed_tokens(tokens);

    auto apply = [&](const MoleLinear& lin, const Tensor2D& in) {
        if (route_sink == nullptr) return lin.apply_batch(in);
        Tensor2D routes;
        Tensor2D out = lin.apply_batch(in, &routes);
        route_sink->push_back(std::move(routes));
        return out;
    };

    for (const Block& blk : blocks_) {
        Tensor2D xn;
        rmsnorm_rows(x, xn);
        Tensor2D q = apply(blk.q, xn);
        Tensor2D k = apply(blk.k, xn);
        Tensor2D v = apply(blk.v, xn);
        Tensor2D concat(n, cfg_.embed_dim);
        for (int h = 0; h < heads; ++h) {
            Tensor2D probs;
            Tensor2D oh = attend_head(head_slice(q, h, hd), head_slice(k, h, hd),
                                      head_slice(v, h, hd), probs);
            head_unslice_add(concat, oh, h, hd);
        }
        add_inplace(x, apply(blk.o, concat));

        Tensor2D xn2;
        rmsnorm_rows(x, xn2);
        Tensor2D u = apply(blk.up, xn2);
        for (double& val : u.data) val = gelu(val);
        add_inplace(x, apply(blk.down, u));
    }

    Tensor2D xf;
    rmsnorm_rows(x, xf);
    return matmul_nt(xf, tok_embed_);
}

std::vector<int> TinyLM::generate(const std::vector<int>& prompt, int max_new_tokens) const {
    if (prompt.empty()) throw DegenerateInputError("TinyLM::generate: empty prompt");
    check_tokens(prompt);
    std::vector<int> tokens = prompt;
    const int heads = cfg_.num_heads;
    const int hd = cfg_.embed_dim / heads;

    for (int step = 0; step < max_new_tokens; ++step) {
        if (static_cast<int>(tokens.size()) >= cfg_.max_seq_len) break;
        const int n = static_cast<int>(tokens.size());
        Tensor2D x = embed_tokens(tokens);
        for (const Block& blk : blocks_) {
            Tensor2D xn;
            rmsnorm_rows(x, xn);
            Tensor2D q = blk.q.apply_batch(xn);
            Tensor2D k = blk.k.apply_batch(xn);
            Tensor2D v = blk.v.apply_batch(xn);
            Tensor2D concat(n, cfg_.embed_dim);
            for (int h = 0; h < heads; ++h) {
                Tensor2D probs;
                Tensor2D oh = attend_head(head_slice(q, h, hd), head_slice(k, h, hd),
                                          head_slice(v, h, hd), probs);
                head_unslice_add(concat, oh, h, hd);
            }
            add_inplace(x, blk.o.apply_batch(concat));
            Tensor2D xn2;
            rmsnorm_rows(x, xn2);
            Tensor2D u = blk.up.apply_batch(xn2);
            for (double& val : u.data) val = gelu(val);
            add_inplace(x, blk.down.apply_batch(u));
        }
        // head on the last position only
        Tensor1D last = x.row(n - 1);
        double ms = 0.0;
        for (int j = 0; j < cfg_.embed_dim; ++j) ms += last[j] * last[j];
        const double inv = 1.0 / std::sqrt(ms / cfg_.embed_dim + kRmsEps);
        for (int j = 0; j < cfg_.embed_dim; ++j) last[j] *= inv;
        Tensor1D logits = matvec(tok_embed_, last);
        int best = 0;
        for (int t = 1; t < logits.len(); ++t) {
            if (logits[t] > logits[best]) best = t;
        }
        tokens.push_back(best);
        if (best == tok::kEos) break;
    }
    return tokens;
}

double TinyLM::loss_and_accumulate(const std::vector<int>& tokens,
                                   const std::vector<std::uint8_t>& loss_mask, double grad_scale,
                                   double dropout_rate, Rng* dropout_rng) {
    check_tokens(tokens);
    const int n = static_cast<int>(tokens.size());
    if (n < 2) throw DegenerateInputError("TinyLM::loss_and_accumulate: need at least 2 tokens");
    if (static_cast<int>(loss_mask.size()) != n) {
        throw ShapeError("TinyLM::loss_and_accumulate: mask length " +
                         std::to_string(loss_mask.size()) + " does not match " +
                         std::to_string(n) + " tokens");
    }
    if (dropout_rate > 0.0 && dropout_rng == nullptr) {
        throw ContractError("TinyLM::loss_and_accumulate: dropout requires an rng");
    }
    const int heads = cfg_.num_heads;
    const int hd = cfg_.embed_dim / heads;

    auto make_dropout = [&](int rows, int cols) {
        Tensor2D mask(rows, cols);
        const double keep = 1.0 - dropout_rate;
        const double scale = 1.0 / keep;
        for (double& v : mask.data) v = (dropout_rng->uniform() < keep) ? scale : 0.0;
        return mask;
    };

    // ---- forward ----
    Tensor2D x = embed_tokens(tokens);
    std::vector<LayerCache> caches(blocks_.size());
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        Block& blk = blocks_[l];
        LayerCache& lc = caches[l];
        lc.x_in = x;
        lc.rms1 = rmsnorm_rows(lc.x_in, lc.xn1);
        std::tie(lc.q, lc.qc) = blk.q.forward_batch(lc.xn1);
        std::tie(lc.k, lc.kc) = blk.k.forward_batch(lc.xn1);
        std::tie(lc.v, lc.vc) = blk.v.forward_batch(lc.xn1);
        lc.attn_concat = Tensor2D(n, cfg_.embed_dim);
        lc.probs.resize(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            Tensor2D oh = attend_head(head_slice(lc.q, h, hd), head_slice(lc.k, h, hd),
                                      head_slice(lc.v, h, hd), lc.probs[static_cast<std::size_t>(h)]);
            head_unslice_add(lc.attn_concat, oh, h, hd);
        }
        auto [attn_out, oc] = blk.o.forward_batch(lc.attn_concat);
        lc.oc = std::move(oc);
        if (dropout_rate > 0.0) {
            lc.drop1 = make_dropout(n, cfg_.embed_dim);
            for (std::size_t i = 0; i < attn_out.data.size(); ++i) {
                attn_out.data[i] *= lc.drop1.data[i];
            }
        }
        lc.x_mid = lc.x_in;
        add_inplace(lc.x_mid, attn_out);

        lc.rms2 = rmsnorm_rows(lc.x_mid, lc.xn2);
        std::tie(lc.u_pre, lc.upc) = blk.up.forward_batch(lc.xn2);
        lc.u_act = lc.u_pre;
        for (double& val : lc.u_act.data) val = gelu(val);
        auto [mlp_out, downc] = blk.down.forward_batch(lc.u_act);
        lc.downc = std::move(downc);
        if (dropout_rate > 0.0) {
            lc.drop2 = make_dropout(n, cfg_.embed_dim);
            for (std::size_t i = 0; i < mlp_out.data.size(); ++i) {
                mlp_out.data[i] *= lc.drop2.data[i];
            }
        }
        x = lc.x_mid;
        add_inplace(x, mlp_out);
    }
    Tensor2D xf;
    std::vector<double> rms_f = rmsnorm_rows(x, xf);
    Tensor2D logits = matmul_nt(xf, tok_embed_);

    // targets: position i scores the prediction of token i+1
    std::vector<int> targets(static_cast<std::size_t>(n), 0);
    std::vector<std::uint8_t> mask = loss_mask;
    for (int i = 0; i < n - 1; ++i) targets[static_cast<std::size_t>(i)] = tokens[static_cast<std::size_t>(i) + 1];
    mask[static_cast<std::size_t>(n) - 1] = 0;
    CrossEntropyResult ce = cross_entropy_with_grad(logits, targets, mask);

    // ---- backward ----
    Tensor2D d_xf = matmul(ce.grad, tok_embed_);
    axpy_inplace(tok_embed_grad_, grad_scale, matmul_tn(ce.grad, xf));

    Tensor2D dx(n, cfg_.embed_dim);
    rmsnorm_backward_rows(x, rms_f, d_xf, dx);

    auto accumulate = [&](MoleGradBuffers& buf, const MoleBatchGradients& bg) {
        for (std::size_t i = 0; i < bg.d_a.size(); ++i) {
            axpy_inplace(buf.a[i], grad_scale, bg.d_a[i]);
            axpy_inplace(buf.b[i], grad_scale, bg.d_b[i]);
        }
        axpy_inplace(buf.wg, grad_scale, bg.d_wg);
    };

    for (int l = static_cast<int>(blocks_.size()) - 1; l >= 0; --l) {
        Block& blk = blocks_[static_cast<std::size_t>(l)];
        LayerCache& lc = caches[static_cast<std::size_t>(l)];
        std::vector<MoleGradBuffers>& bufs = block_grads_[static_cast<std::size_t>(l)];

        // MLP branch
        Tensor2D d_mlp_out = dx;
        if (dropout_rate > 0.0) {
            for (std::size_t i = 0; i < d_mlp_out.data.size(); ++i) {
                d_mlp_out.data[i] *= lc.drop2.data[i];
            }
        }
        MoleBatchGradients down_bg = blk.down.backward_batch(lc.downc, d_mlp_out);
        accumulate(bufs[5], down_bg);
        Tensor2D d_u = std::move(down_bg.d_x);
        for (std::size_t i = 0; i < d_u.data.size(); ++i) {
            d_u.data[i] *= gelu_grad(lc.u_pre.data[i]);
        }
        MoleBatchGradients up_bg = blk.up.backward_batch(lc.upc, d_u);
        accumulate(bufs[4], up_bg);
        // dx currently = d(x_mid) from the residual; add the norm path
        rmsnorm_backward_rows(lc.x_mid, lc.rms2, up_bg.d_x, dx);

        // attention branch
        Tensor2D d_attn_out = dx;
        if (dropout_rate > 0.0) {
            for (std::size_t i = 0; i < d_attn_out.data.size(); ++i) {
                d_attn_out.data[i] *= lc.drop1.data[i];
            }
        }
        MoleBatchGradients o_bg = blk.o.backward_batch(lc.oc, d_attn_out);
        accumulate(bufs[3], o_bg);
        const Tensor2D& d_concat = o_bg.d_x;

        Tensor2D dq(n, cfg_.embed_dim), dk(n, cfg_.embed_dim), dv(n, cfg_.embed_dim);
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
        for (int h = 0; h < heads; ++h) {
            Tensor2D d_oh = head_slice(d_concat, h, hd);
            Tensor2D kh = head_slice(lc.k, h, hd);
            Tensor2D vh = head_slice(lc.v, h, hd);
            Tensor2D qh = head_slice(lc.q, h, hd);
            const Tensor2D& p = lc.probs[static_cast<std::size_t>(h)];

            Tensor2D d_p = matmul_nt(d_oh, vh);       // n x n
            Tensor2D d_vh = matmul_tn(p, d_oh);       // n x hd
            // softmax rows backward; zero rows above the diagonal fall out
            Tensor2D d_s(n, n);
            for (int i = 0; i < n; ++i) {
                const double* pr = p.row_ptr(i);
                const double* dpr = d_p.row_ptr(i);
                double dot = 0.0;
                for (int j = 0; j <= i; ++j) dot += pr[j] * dpr[j];
                double* dsr = d_s.row_ptr(i);
                for (int j = 0; j <= i; ++j) dsr[j] = pr[j] * (dpr[j] - dot) * inv_scale;
            }
            Tensor2D d_qh = matmul(d_s, kh);
            Tensor2D d_kh = matmul_tn(d_s, qh);
            head_unslice_add(dq, d_qh, h, hd);
            head_unslice_add(dk, d_kh, h, hd);
            head_unslice_add(dv, d_vh, h, hd);
        }

        MoleBatchGradients q_bg = blk.q.backward_batch(lc.qc, dq);
        MoleBatchGradients k_bg = blk.k.backward_batch(lc.kc, dk);
        MoleBatchGradients v_bg = blk.v.backward_batch(lc.vc, dv);
        accumulate(bufs[0], q_bg);
        accumulate(bufs[1], k_bg);
        accumulate(bufs[2], v_bg);
        Tensor2D d_xn1 = std::move(q_bg.d_x);
        add_inplace(d_xn1, k_bg.d_x);
        add_inplace(d_xn1, v_bg.d_x);
        rmsnorm_backward_rows(lc.x_in, lc.rms1, d_xn1, dx);
    }

    // embeddings
    for (int i = 0; i < n; ++i) {
        const double* g = dx.row_ptr(i);
        double* te = tok_embed_grad_.row_ptr(tokens[static_cast<std::size_t>(i)]);
        double* pe = pos_embed_grad_.row_ptr(i);
        for (int j = 0; j < cfg_.embed_dim; ++j) {
            te[j] += grad_scale * g[j];
            pe[j] += grad_scale * g[j];
        }
    }
    return ce.loss;
}

void TinyLM::zero_grads() {
    fill_zero(tok_embed_grad_);
    fill_zero(pos_embed_grad_);
    for (auto& bufs : block_grads_) {
        for (MoleGradBuffers& buf : bufs) {
            for (Tensor2D& t : buf.a) fill_zero(t);
            for (Tensor2D& t : buf.b) fill_zero(t);
            fill_zero(buf.wg);
        }
    }
}

std::vector<TinyLM::ParamSlot> TinyLM::trainable_slots() {
    std::vector<ParamSlot> slots;
    slots.push_back({"tok_embed", &tok_embed_, &tok_embed_grad_});
    slots.push_back({"pos_embed", &pos_embed_, &pos_embed_grad_});
    const char* lin_names[6] = {"q", "k", "v", "o", "up", "down"};
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        MoleLinear* lins[6] = {&blocks_[l].q, &blocks_[l].k, &blocks_[l].v,
                               &blocks_[l].o, &blocks_[l].up, &blocks_[l].down};
        for (int li = 0; li < 6; ++li) {
            MoleLinear& lin = *lins[li];
            MoleGradBuffers& buf = block_grads_[l][static_cast<std::size_t>(li)];
            const std::string prefix =
                "layer" + std::to_string(l) + "." + lin_names[li] + ".";
            for (int e = 0; e < lin.num_experts(); ++e) {
                slots.push_back({prefix + "expert" + std::to_string(e) + ".a",
                                 &lin.mutable_expert_a(e), &buf.a[static_cast<std::size_t>(e)]});
                slots.push_back({prefix + "expert" + std::to_string(e) + ".b",
                                 &lin.mutable_expert_b(e), &buf.b[static_cast<std::size_t>(e)]});
            }
            slots.push_back({prefix + "router", &lin.mutable_router_weight(), &buf.wg});
        }
    }
    return slots;
}

std::int64_t TinyLM::trainable_param_count() const {
    std::int64_t n = static_cast<std::int64_t>(tok_embed_.data.size() + pos_embed_.data.size());
    for (const Block& blk : blocks_) {
        n += blk.q.trainable_param_count() + blk.k.trainable_param_count() +
             blk.v.trainable_param_count() + blk.o.trainable_param_count() +
             blk.up.trainable_param_count() + blk.down.trainable_param_count();
    }
    return n;
}

std::int64_t TinyLM::frozen_param_count() const {
    std::int64_t n = 0;
    for (const Block& blk : blocks_) {
        n += blk.q.frozen_param_count() + blk.k.frozen_param_count() +
             blk.v.frozen_param_count() + blk.o.frozen_param_count() +
             blk.up.frozen_param_count() + blk.down.frozen_param_count();
    }
    return n;
}

std::vector<const Tensor2D*> TinyLM::base_weights() const {
    std::vector<const Tensor2D*> out;
    for (const Block& blk : blocks_) {
        out.push_back(&blk.q.base_weight());
        out.push_back(&blk.k.base_weight());
        out.push_back(&blk.v.base_weight());
        out.push_back(&blk.o.base_weight());
        out.push_back(&blk.up.base_weight());
        out.push_back(&blk.down.base_weight());
    }
    return out;
}

} // namespace mole
