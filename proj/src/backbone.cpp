#include "hpqa/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "hpqa/error.hpp"
#include "hpqa/rng.hpp"

namespace hpqa {

namespace {

// c (+)= a * b
void mm_nn(const Matrix& a, const Matrix& b, Matrix& c, bool acc) {
    if (!acc) c.zero();
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double av = ai[k];
            if (av == 0.0) continue;
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
        }
    }
}

// c (+)= a * b^T
void mm_nt(const Matrix& a, const Matrix& b, Matrix& c, bool acc) {
    if (!acc) c.zero();
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) ci[j] += dot(ai, b.row(j), a.cols);
    }
}

// c (+)= a^T * b
void mm_tn(const Matrix& a, const Matrix& b, Matrix& c, bool acc) {
    if (!acc) c.zero();
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            double av = ak[i];
            if (av == 0.0) continue;
            double* ci = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bk[j];
        }
    }
}

struct LnCache {
    Matrix xhat;
    Vec inv_std;
};

constexpr double kLnEps = 1e-5;

Matrix ln_fwd(const Matrix& x, const Param& g, const Param& b, LnCache* cache) {
    Matrix y(x.rows, x.cols);
    if (cache) {
        cache->xhat = Matrix(x.rows, x.cols);
        cache->inv_std.assign(x.rows, 0.0);
    }
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) mu += xi[j];
        mu /= static_cast<double>(x.cols);
        double var = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<double>(x.cols);
        double inv = 1.0 / std::sqrt(var + kLnEps);
        double* yi = y.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) {
            double xh = (xi[j] - mu) * inv;
            if (cache) cache->xhat.at(i, j) = xh;
            yi[j] = g.value.at(0, j) * xh + b.value.at(0, j);
        }
        if (cache) cache->inv_std[i] = inv;
    }
    return y;
}

Matrix ln_bwd(const Matrix& dy, const LnCache& c, Param& g, Param& b) {
    std::size_t rows = dy.rows, cols = dy.cols;
    Matrix dx(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* dyi = dy.row(i);
        const double* xh = c.xhat.row(i);
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            double dxh = dyi[j] * g.value.at(0, j);
            m1 += dxh;
            m2 += dxh * xh[j];
            g.grad.at(0, j) += dyi[j] * xh[j];
            b.grad.at(0, j) += dyi[j];
        }
        m1 /= static_cast<double>(cols);
        m2 /= static_cast<double>(cols);
        double inv = c.inv_std[i];
        double* dxi = dx.row(i);
        for (std::size_t j = 0; j < cols; ++j) {
            double dxh = dyi[j] * g.value.at(0, j);
            dxi[j] = inv * (dxh - m1 - xh[j] * m2);
        }
    }
    return dx;
}

struct AttnCache {
    Matrix q, k, v, o;          // L x d projections and pre-wo concat output
    std::vector<Matrix> probs;  // per head, Lq x Lk (masked entries zero)
};

// relative offset key_pos - query_pos clamped into [-8, 8]
constexpr int kRelSpan = 8;
constexpr int kRelBuckets = 2 * kRelSpan + 1;

inline std::size_t rel_bucket(std::size_t qpos, std::size_t kpos) {
    long d = static_cast<long>(kpos) - static_cast<long>(qpos);
    d = std::max<long>(-kRelSpan, std::min<long>(kRelSpan, d));
    return static_cast<std::size_t>(d + kRelSpan);
}

Matrix attn_fwd(const Matrix& xq, const Matrix& xkv, const Param& wq, const Param& wk,
                const Param& wv, const Param& wo, const Param* rel, bool causal, int n_heads,
                AttnCache* c) {
    std::size_t d = xq.cols;
    std::size_t dh = d / static_cast<std::size_t>(n_heads);
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix q(xq.rows, d), k(xkv.rows, d), v(xkv.rows, d), o(xq.rows, d);
    mm_nn(xq, wq.value, q, false);
    mm_nn(xkv, wk.value, k, false);
    mm_nn(xkv, wv.value, v, false);
    std::vector<Matrix> probs;
    for (int h = 0; h < n_heads; ++h) {
        std::size_t off = static_cast<std::size_t>(h) * dh;
        Matrix p(xq.rows, xkv.rows);
        for (std::size_t i = 0; i < xq.rows; ++i) {
            std::size_t lim = causal ? i + 1 : xkv.rows;
            double mx = -1e300;
            for (std::size_t j = 0; j < lim; ++j) {
                double s = scale * dot(q.row(i) + off, k.row(j) + off, dh);
                if (rel) s += rel->value.at(static_cast<std::size_t>(h), rel_bucket(i, j));
                p.at(i, j) = s;
                mx = std::max(mx, s);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < lim; ++j) {
                double e = std::exp(p.at(i, j) - mx);
                p.at(i, j) = e;
                z += e;
            }
            for (std::size_t j = 0; j < lim; ++j) p.at(i, j) /= z;
            double* oi = o.row(i);
            for (std::size_t j = 0; j < lim; ++j) {
                double pij = p.at(i, j);
                const double* vj = v.row(j) + off;
                for (std::size_t t = 0; t < dh; ++t) oi[off + t] += pij * vj[t];
            }
        }
        probs.push_back(std::move(p));
    }
    Matrix out(xq.rows, d);
    mm_nn(o, wo.value, out, false);
    if (c) {
        c->q = std::move(q);
        c->k = std::move(k);
        c->v = std::move(v);
        c->o = std::move(o);
        c->probs = std::move(probs);
    }
    return out;
}

// Accumulates into dxq, dxkv and the projection grads.
void attn_bwd(const Matrix& dout, const Matrix& xq, const Matrix& xkv, Param& wq, Param& wk,
              Param& wv, Param& wo, Param* rel, bool causal, int n_heads, const AttnCache& c,
              Matrix& dxq, Matrix& dxkv) {
    std::size_t d = xq.cols;
    std::size_t dh = d / static_cast<std::size_t>(n_heads);
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix dO(xq.rows, d), dq(xq.rows, d), dk(xkv.rows, d), dv(xkv.rows, d);
    mm_nt(dout, wo.value, dO, false);
    mm_tn(c.o, dout, wo.grad, true);
    for (int h = 0; h < n_heads; ++h) {
        std::size_t off = static_cast<std::size_t>(h) * dh;
        const Matrix& p = c.probs[static_cast<std::size_t>(h)];
        for (std::size_t i = 0; i < xq.rows; ++i) {
            std::size_t lim = causal ? i + 1 : xkv.rows;
            const double* dOi = dO.row(i) + off;
            // dP then dS row by row
            Vec dp(lim);
            double dot_pp = 0.0;
            for (std::size_t j = 0; j < lim; ++j) {
                dp[j] = dot(dOi, c.v.row(j) + off, dh);
                dot_pp += dp[j] * p.at(i, j);
            }
            for (std::size_t j = 0; j < lim; ++j) {
                double pij = p.at(i, j);
                double ds = pij * (dp[j] - dot_pp);
                if (rel) rel->grad.at(static_cast<std::size_t>(h), rel_bucket(i, j)) += ds;
                // dV
                double* dvj = dv.row(j) + off;
                const double* qi = c.q.row(i) + off;
                const double* kj = c.k.row(j) + off;
                double* dqi = dq.row(i) + off;
                double* dkj = dk.row(j) + off;
                for (std::size_t t = 0; t < dh; ++t) {
                    dvj[t] += pij * dOi[t];
                    dqi[t] += scale * ds * kj[t];
                    dkj[t] += scale * ds * qi[t];
                }
            }
        }
    }
    mm_nt(dq, wq.value, dxq, true);
    mm_tn(xq, dq, wq.grad, true);
    mm_nt(dk, wk.value, dxkv, true);
    mm_tn(xkv, dk, wk.grad, true);
    mm_nt(dv, wv.value, dxkv, true);
    mm_tn(xkv, dv, wv.grad, true);
}

Matrix ffn_fwd(const Matrix& x, const Param& w1, const Param& w2, Matrix* h1_cache) {
    Matrix h1(x.rows, w1.value.cols);
    mm_nn(x, w1.value, h1, false);
    for (auto& v : h1.data) v = v > 0.0 ? v : 0.0;
    Matrix out(x.rows, w2.value.cols);
    mm_nn(h1, w2.value, out, false);
    if (h1_cache) *h1_cache = std::move(h1);
    return out;
}

void ffn_bwd(const Matrix& dout, const Matrix& x, Param& w1, Param& w2, const Matrix& h1,
             Matrix& dx) {
    Matrix dh1(h1.rows, h1.cols);
    mm_nt(dout, w2.value, dh1, false);
    mm_tn(h1, dout, w2.grad, true);
    for (std::size_t i = 0; i < dh1.data.size(); ++i)
        if (h1.data[i] <= 0.0) dh1.data[i] = 0.0;
    mm_nt(dh1, w1.value, dx, true);
    mm_tn(x, dh1, w1.grad, true);
}

void init_uniform(Param& p, Rng& rng, double r) {
    for (auto& v : p.value.data) v = rng.uniform(-r, r);
}

}  // namespace

double cross_entropy_mean(const Matrix& logits, const std::vector<int>& gold) {
    if (gold.empty()) throw ValidationError("cross entropy: empty target");
    double total = 0.0;
    for (std::size_t t = 0; t < gold.size(); ++t) {
        const double* row = logits.row(t);
        double mx = row[0];
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(row[j] - mx);
        total += -(row[static_cast<std::size_t>(gold[t])] - mx - std::log(z));
    }
    return total / static_cast<double>(gold.size());
}

Seq2SeqModel::Seq2SeqModel(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.vocab < 2) throw ValidationError("backbone vocab must be >= 2");
    if (cfg.d_model % cfg.n_heads != 0)
        throw ValidationError("d_model must be divisible by n_heads");
    std::size_t d = static_cast<std::size_t>(cfg.d_model);
    std::size_t v = static_cast<std::size_t>(cfg.vocab);
    std::size_t ff = static_cast<std::size_t>(cfg.d_ff);

    auto make_ln = [&](Ln& ln, const std::string& name) {
        ln.g = Param(name + ".g", 1, d);
        ln.b = Param(name + ".b", 1, d);
        for (auto& x : ln.g.value.data) x = 1.0;
    };
    auto make_attn = [&](Attn& a, const std::string& name, bool self_attn) {
        a.wq = Param(name + ".wq", d, d);
        a.wk = Param(name + ".wk", d, d);
        a.wv = Param(name + ".wv", d, d);
        a.wo = Param(name + ".wo", d, d);
        if (self_attn)
            a.rel_bias = Param(name + ".rel_bias", static_cast<std::size_t>(cfg.n_heads),
                               kRelBuckets);
    };
    emb_ = Param("model.emb", v, d);
    make_ln(enc_ln1_, "model.enc.ln1");
    make_attn(enc_attn_, "model.enc.attn", true);
    make_ln(enc_ln2_, "model.enc.ln2");
    enc_w1_ = Param("model.enc.ffn.w1", d, ff);
    enc_w2_ = Param("model.enc.ffn.w2", ff, d);
    make_ln(enc_lnf_, "model.enc.lnf");
    make_ln(dec_ln1_, "model.dec.ln1");
    make_attn(dec_self_, "model.dec.self", true);
    make_ln(dec_ln2_, "model.dec.ln2");
    make_attn(dec_cross_, "model.dec.cross", false);
    make_ln(dec_ln3_, "model.dec.ln3");
    dec_w1_ = Param("model.dec.ffn.w1", d, ff);
    dec_w2_ = Param("model.dec.ffn.w2", ff, d);
    make_ln(dec_lnf_, "model.dec.lnf");

    Rng rng(seed);
    init_uniform(emb_, rng, 0.1);
    double rd = 1.0 / std::sqrt(static_cast<double>(d));
    double rf = 1.0 / std::sqrt(static_cast<double>(ff));
    for (Attn* a : {&enc_attn_, &dec_self_, &dec_cross_}) {
        init_uniform(a->wq, rng, rd);
        init_uniform(a->wk, rng, rd);
        init_uniform(a->wv, rng, rd);
        init_uniform(a->wo, rng, rd);
    }
    init_uniform(enc_w1_, rng, rd);
    init_uniform(enc_w2_, rng, rf);
    init_uniform(dec_w1_, rng, rd);
    init_uniform(dec_w2_, rng, rf);

    // Scaled down so content embeddings are not drowned by position terms
    // under the pre-attention layer norm.
    const double pe_scale = 0.25;
    pos_ = Matrix(static_cast<std::size_t>(cfg.max_seq), d);
    for (std::size_t p = 0; p < pos_.rows; ++p) {
        for (std::size_t i = 0; i * 2 < d; ++i) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(2 * i) /
                                   static_cast<double>(d));
            double ang = static_cast<double>(p) * freq;
            pos_.at(p, 2 * i) = pe_scale * std::sin(ang);
            if (2 * i + 1 < d) pos_.at(p, 2 * i + 1) = pe_scale * std::cos(ang);
        }
    }
}

std::vector<Param*> Seq2SeqModel::params() {
    std::vector<Param*> out;
    visit_params([&](Param& p) { out.push_back(&p); });
    return out;
}

void Seq2SeqModel::visit_params(const std::function<void(Param&)>& fn) {
    fn(emb_);
    for (Ln* ln : {&enc_ln1_, &enc_ln2_, &enc_lnf_, &dec_ln1_, &dec_ln2_, &dec_ln3_, &dec_lnf_}) {
        fn(ln->g);
        fn(ln->b);
    }
    for (Attn* a : {&enc_attn_, &dec_self_, &dec_cross_}) {
        fn(a->wq);
        fn(a->wk);
        fn(a->wv);
        fn(a->wo);
        if (a->rel_bias.value.rows) fn(a->rel_bias);
    }
    fn(enc_w1_);
    fn(enc_w2_);
    fn(dec_w1_);
    fn(dec_w2_);
}

QALoss Seq2SeqModel::forward_loss(const ComposedPrompt& prompt, const std::vector<int>& input,
                                  const std::vector<int>& target, double grad_scale) {
    return run(prompt, input, target, true, grad_scale);
}

QALoss Seq2SeqModel::eval_loss(const ComposedPrompt& prompt, const std::vector<int>& input,
                               const std::vector<int>& target) {
    return run(prompt, input, target, false, 0.0);
}

namespace {
void check_tokens(const std::vector<int>& ids, int vocab, const char* what) {
    for (int id : ids)
        if (id < 0 || id >= vocab)
            throw RuntimeFault(std::string(what) + ": token id " + std::to_string(id) +
                               " out of vocab " + std::to_string(vocab));
}
}  // namespace

QALoss Seq2SeqModel::run(const ComposedPrompt& prompt, const std::vector<int>& input,
                         const std::vector<int>& target, bool backward, double grad_scale) {
    if (target.empty()) throw ValidationError("forward_loss: target must be non-empty");
    check_tokens(input, cfg_.vocab, "input");
    check_tokens(target, cfg_.vocab, "target");
    std::size_t p = prompt.size();
    std::size_t n = input.size();
    std::size_t el = p + n;
    std::size_t tl = target.size();
    if (el > static_cast<std::size_t>(cfg_.max_seq) || tl > static_cast<std::size_t>(cfg_.max_seq))
        throw RuntimeFault("sequence length " + std::to_string(el) + "/" + std::to_string(tl) +
                           " exceeds max_seq " + std::to_string(cfg_.max_seq));
    std::size_t d = static_cast<std::size_t>(cfg_.d_model);

    // --- encoder forward
    Matrix x0(el, d);
    for (std::size_t r = 0; r < el; ++r) {
        const double* src = r < p ? prompt.rows[r]
                                  : emb_.value.row(static_cast<std::size_t>(input[r - p]));
        const double* pe = pos_.row(r);
        double* xr = x0.row(r);
        for (std::size_t j = 0; j < d; ++j) xr[j] = src[j] + pe[j];
    }
    LnCache eln1;
    Matrix ex1 = ln_fwd(x0, enc_ln1_.g, enc_ln1_.b, &eln1);
    AttnCache eatt;
    Matrix ao = attn_fwd(ex1, ex1, enc_attn_.wq, enc_attn_.wk, enc_attn_.wv, enc_attn_.wo,
                         &enc_attn_.rel_bias, false, cfg_.n_heads, &eatt);
    Matrix a(el, d);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = x0.data[i] + ao.data[i];
    LnCache eln2;
    Matrix ex2 = ln_fwd(a, enc_ln2_.g, enc_ln2_.b, &eln2);
    Matrix eh1;
    Matrix fo = ffn_fwd(ex2, enc_w1_, enc_w2_, &eh1);
    Matrix bsum(el, d);
    for (std::size_t i = 0; i < bsum.data.size(); ++i) bsum.data[i] = a.data[i] + fo.data[i];
    LnCache elnf;
    Matrix enc_h = ln_fwd(bsum, enc_lnf_.g, enc_lnf_.b, &elnf);

    // --- decoder forward
    std::vector<int> dec_in(tl);
    dec_in[0] = Vocab::kBos;
    for (std::size_t t = 1; t < tl; ++t) dec_in[t] = target[t - 1];
    Matrix y0(tl, d);
    for (std::size_t r = 0; r < tl; ++r) {
        const double* src = emb_.value.row(static_cast<std::size_t>(dec_in[r]));
        const double* pe = pos_.row(r);
        double* yr = y0.row(r);
        for (std::size_t j = 0; j < d; ++j) yr[j] = src[j] + pe[j];
    }
    LnCache dln1;
    Matrix dx1 = ln_fwd(y0, dec_ln1_.g, dec_ln1_.b, &dln1);
    AttnCache datt;
    Matrix so = attn_fwd(dx1, dx1, dec_self_.wq, dec_self_.wk, dec_self_.wv, dec_self_.wo,
                         &dec_self_.rel_bias, true, cfg_.n_heads, &datt);
    Matrix da(tl, d);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] = y0.data[i] + so.data[i];
    LnCache dln2;
    Matrix dx2 = ln_fwd(da, dec_ln2_.g, dec_ln2_.b, &dln2);
    AttnCache catt;
    Matrix co = attn_fwd(dx2, enc_h, dec_cross_.wq, dec_cross_.wk, dec_cross_.wv, dec_cross_.wo,
                         nullptr, false, cfg_.n_heads, &catt);
    Matrix db(tl, d);
    for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] = da.data[i] + co.data[i];
    LnCache dln3;
    Matrix dx3 = ln_fwd(db, dec_ln3_.g, dec_ln3_.b, &dln3);
    Matrix dh1;
    Matrix dfo = ffn_fwd(dx3, dec_w1_, dec_w2_, &dh1);
    Matrix dc(tl, d);
    for (std::size_t i = 0; i < dc.data.size(); ++i) dc.data[i] = db.data[i] + dfo.data[i];
    LnCache dlnf;
    Matrix dec_h = ln_fwd(dc, dec_lnf_.g, dec_lnf_.b, &dlnf);
    // output projection tied to the token embedding table
    Matrix logits(tl, static_cast<std::size_t>(cfg_.vocab));
    mm_nt(dec_h, emb_.value, logits, false);

    QALoss loss;
    Matrix dlogits(tl, logits.cols);
    for (std::size_t t = 0; t < tl; ++t) {
        const double* row = logits.row(t);
        double mx = row[0];
        for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(row[j] - mx);
        double logz = std::log(z) + mx;
        double nll = logz - row[static_cast<std::size_t>(target[t])];
        loss.token_nll.push_back(nll);
        loss.value += nll;
        if (backward) {
            double* dl = dlogits.row(t);
            double sc = grad_scale / static_cast<double>(tl);
            for (std::size_t j = 0; j < logits.cols; ++j)
                dl[j] = std::exp(row[j] - logz) * sc;
            dl[static_cast<std::size_t>(target[t])] -= sc;
        }
    }
    loss.value /= static_cast<double>(tl);
    if (!backward) return loss;

    // --- decoder backward
    Matrix ddec_h(tl, d);
    mm_nn(dlogits, emb_.value, ddec_h, false);
    mm_tn(dlogits, dec_h, emb_.grad, true);
    Matrix ddc = ln_bwd(ddec_h, dlnf, dec_lnf_.g, dec_lnf_.b);
    Matrix ddx3(tl, d);
    ffn_bwd(ddc, dx3, dec_w1_, dec_w2_, dh1, ddx3);
    Matrix ddb = ln_bwd(ddx3, dln3, dec_ln3_.g, dec_ln3_.b);
    for (std::size_t i = 0; i < ddb.data.size(); ++i) ddb.data[i] += ddc.data[i];
    Matrix ddx2(tl, d);
    Matrix denc_h(el, d);
    attn_bwd(ddb, dx2, enc_h, dec_cross_.wq, dec_cross_.wk, dec_cross_.wv, dec_cross_.wo, nullptr,
             false, cfg_.n_heads, catt, ddx2, denc_h);
    Matrix dda = ln_bwd(ddx2, dln2, dec_ln2_.g, dec_ln2_.b);
    for (std::size_t i = 0; i < dda.data.size(); ++i) dda.data[i] += ddb.data[i];
    Matrix ddx1(tl, d);
    Matrix ddx1_kv(tl, d);
    attn_bwd(dda, dx1, dx1, dec_self_.wq, dec_self_.wk, dec_self_.wv, dec_self_.wo,
             &dec_self_.rel_bias, true, cfg_.n_heads, datt, ddx1, ddx1_kv);
    for (std::size_t i = 0; i < ddx1.data.size(); ++i) ddx1.data[i] += ddx1_kv.data[i];
    Matrix dy0 = ln_bwd(ddx1, dln1, dec_ln1_.g, dec_ln1_.b);
    for (std::size_t i = 0; i < dy0.data.size(); ++i) dy0.data[i] += dda.data[i];
    for (std::size_t r = 0; r < tl; ++r) {
        double* dst = emb_.grad.row(static_cast<std::size_t>(dec_in[r]));
        const double* src = dy0.row(r);
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }

    // --- encoder backward (LN final feeds denc_h)
    Matrix dbsum = ln_bwd(denc_h, elnf, enc_lnf_.g, enc_lnf_.b);
    Matrix dex2(el, d);
    ffn_bwd(dbsum, ex2, enc_w1_, enc_w2_, eh1, dex2);
    Matrix dasum = ln_bwd(dex2, eln2, enc_ln2_.g, enc_ln2_.b);
    for (std::size_t i = 0; i < dasum.data.size(); ++i) dasum.data[i] += dbsum.data[i];
    Matrix dex1(el, d);
    Matrix dex1_kv(el, d);
    attn_bwd(dasum, ex1, ex1, enc_attn_.wq, enc_attn_.wk, enc_attn_.wv, enc_attn_.wo,
             &enc_attn_.rel_bias, false, cfg_.n_heads, eatt, dex1, dex1_kv);
    for (std::size_t i = 0; i < dex1.data.size(); ++i) dex1.data[i] += dex1_kv.data[i];
    Matrix dx0 = ln_bwd(dex1, eln1, enc_ln1_.g, enc_ln1_.b);
    for (std::size_t i = 0; i < dx0.data.size(); ++i) dx0.data[i] += dasum.data[i];
    for (std::size_t r = 0; r < el; ++r) {
        const double* src = dx0.row(r);
        double* dst = r < p ? prompt.grad_rows[r]
                            : emb_.grad.row(static_cast<std::size_t>(input[r - p]));
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    return loss;
}

Matrix Seq2SeqModel::encode(const ComposedPrompt& prompt, const std::vector<int>& input) const {
    check_tokens(input, cfg_.vocab, "input");
    std::size_t p = prompt.size();
    std::size_t el = p + input.size();
    if (el > static_cast<std::size_t>(cfg_.max_seq))
        throw RuntimeFault("sequence length exceeds max_seq");
    std::size_t d = static_cast<std::size_t>(cfg_.d_model);
    Matrix x0(el, d);
    for (std::size_t r = 0; r < el; ++r) {
        const double* src = r < p ? prompt.rows[r]
                                  : emb_.value.row(static_cast<std::size_t>(input[r - p]));
        const double* pe = pos_.row(r);
        double* xr = x0.row(r);
        for (std::size_t j = 0; j < d; ++j) xr[j] = src[j] + pe[j];
    }
    Matrix ex1 = ln_fwd(x0, enc_ln1_.g, enc_ln1_.b, nullptr);
    Matrix ao = attn_fwd(ex1, ex1, enc_attn_.wq, enc_attn_.wk, enc_attn_.wv, enc_attn_.wo,
                         &enc_attn_.rel_bias, false, cfg_.n_heads, nullptr);
    Matrix a(el, d);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = x0.data[i] + ao.data[i];
    Matrix ex2 = ln_fwd(a, enc_ln2_.g, enc_ln2_.b, nullptr);
    Matrix fo = ffn_fwd(ex2, enc_w1_, enc_w2_, nullptr);
    Matrix bsum(el, d);
    for (std::size_t i = 0; i < bsum.data.size(); ++i) bsum.data[i] = a.data[i] + fo.data[i];
    return ln_fwd(bsum, enc_lnf_.g, enc_lnf_.b, nullptr);
}

Matrix Seq2SeqModel::decoder_logits(const Matrix& enc_h, const std::vector<int>& dec_in) const {
    std::size_t tl = dec_in.size();
    std::size_t d = static_cast<std::size_t>(cfg_.d_model);
    Matrix y0(tl, d);
    for (std::size_t r = 0; r < tl; ++r) {
        const double* src = emb_.value.row(static_cast<std::size_t>(dec_in[r]));
        const double* pe = pos_.row(r);
        double* yr = y0.row(r);
        for (std::size_t j = 0; j < d; ++j) yr[j] = src[j] + pe[j];
    }
    Matrix dx1 = ln_fwd(y0, dec_ln1_.g, dec_ln1_.b, nullptr);
    Matrix so = attn_fwd(dx1, dx1, dec_self_.wq, dec_self_.wk, dec_self_.wv, dec_self_.wo,
                         &dec_self_.rel_bias, true, cfg_.n_heads, nullptr);
    Matrix da(tl, d);
    for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] = y0.data[i] + so.data[i];
    Matrix dx2 = ln_fwd(da, dec_ln2_.g, dec_ln2_.b, nullptr);
    Matrix co = attn_fwd(dx2, enc_h, dec_cross_.wq, dec_cross_.wk, dec_cross_.wv, dec_cross_.wo,
                         nullptr, false, cfg_.n_heads, nullptr);
    Matrix db(tl, d);
    for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] = da.data[i] + co.data[i];
    Matrix dx3 = ln_fwd(db, dec_ln3_.g, dec_ln3_.b, nullptr);
    Matrix dfo = ffn_fwd(dx3, dec_w1_, dec_w2_, nullptr);
    Matrix dc(tl, d);
    for (std::size_t i = 0; i < dc.data.size(); ++i) dc.data[i] = db.data[i] + dfo.data[i];
    Matrix dec_h = ln_fwd(dc, dec_lnf_.g, dec_lnf_.b, nullptr);
    Matrix logits(tl, static_cast<std::size_t>(cfg_.vocab));
    mm_nt(dec_h, emb_.value, logits, false);
    return logits;
}

std::vector<int> Seq2SeqModel::greedy_decode(const ComposedPrompt& prompt,
                                             const std::vector<int>& input, int max_len) const {
    if (max_len < 1) throw ValidationError("greedy_decode: max_len must be >= 1");
    Matrix enc_h = encode(prompt, input);
    std::vector<int> out;
    std::vector<int> dec_in{Vocab::kBos};
    while (static_cast<int>(out.size()) < max_len) {
        Matrix logits = decoder_logits(enc_h, dec_in);
        const double* row = logits.row(logits.rows - 1);
        int best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
        out.push_back(best);
        if (best == Vocab::kEos) break;
        dec_in.push_back(best);
    }
    return out;
}

}  // namespace hpqa
