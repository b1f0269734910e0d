#include "falldet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "falldet/ops.hpp"

namespace falldet::nn {

namespace op = falldet::ops;

Tensor init_xavier(Rng& rng, int rows, int cols) {
    const double limit = std::sqrt(6.0 / double(rows + cols));
    return Tensor::uniform(rows, cols, rng, limit);
}

Tensor init_uniform(Rng& rng, int rows, int cols, double lo, double hi) {
    std::vector<double> v(static_cast<size_t>(rows) * size_t(cols));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_vector(rows, cols, std::move(v));
}

Tensor init_const(int rows, int cols, double v) { return Tensor::full(rows, cols, v); }

Tensor init_orthonormal(Rng& rng, int rows, int cols) {
    if (rows < cols) throw ShapeMismatch("init_orthonormal: rows < cols");
    std::vector<std::vector<double>> q;
    q.reserve(static_cast<size_t>(cols));
    for (int j = 0; j < cols; ++j) {
        std::vector<double> v(static_cast<size_t>(rows));
        for (;;) {
            for (auto& x : v) x = rng.normal();
            for (const auto& prev : q) {
                double dot = 0.0;
                for (int r = 0; r < rows; ++r) dot += prev[size_t(r)] * v[size_t(r)];
                for (int r = 0; r < rows; ++r) v[size_t(r)] -= dot * prev[size_t(r)];
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (auto& x : v) x /= norm;
                break;
            }
        }
        q.push_back(v);
    }
    std::vector<double> m(static_cast<size_t>(rows) * size_t(cols));
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) m[size_t(r) * size_t(cols) + size_t(j)] = q[size_t(j)][size_t(r)];
    return Tensor::from_vector(rows, cols, std::move(m));
}

void LinearLayer::build(ParamStore& ps, const std::string& name, Rng& rng, int in, int out,
                        bool bias, bool zero_init) {
    w = ps.add(name + ".w", zero_init ? Tensor::zeros(in, out) : init_xavier(rng, in, out));
    if (bias) b = ps.add(name + ".b", Tensor::zeros(1, out));
}

Tensor LinearLayer::forward(const Tensor& x) const {
    return op::linear(x, w, b ? &*b : nullptr);
}

void LayerNormLayer::build(ParamStore& ps, const std::string& name, int width) {
    gain = ps.add(name + ".gain", Tensor::full(1, width, 1.0));
    bias = ps.add(name + ".bias", Tensor::zeros(1, width));
}

Tensor LayerNormLayer::forward(const Tensor& x) const { return op::layer_norm(x, gain, bias); }

void LskBlock::build(ParamStore& ps, const std::string& name, Rng& rng, int cin_, int cout_,
                     std::vector<std::pair<int, int>> taps, int stride_, int gate_hidden) {
    cin = cin_;
    cout = cout_;
    stride = stride_;
    kernels.clear();
    dilations.clear();
    branch_k.clear();
    for (size_t b = 0; b < taps.size(); ++b) {
        kernels.push_back(taps[b].first);
        dilations.push_back(taps[b].second);
        const double s = std::sqrt(1.0 / double(taps[b].first));
        branch_k.push_back(
            ps.add(name + ".k" + std::to_string(b), init_uniform(rng, cin, taps[b].first, -s, s)));
    }
    pointwise.build(ps, name + ".pw", rng, cin, cout, /*bias=*/false);
    gate1.build(ps, name + ".gate1", rng, cin, gate_hidden, /*bias=*/true);
    gate2.build(ps, name + ".gate2", rng, gate_hidden, int(taps.size()), /*bias=*/true);
}

Tensor LskBlock::forward(const Tensor& x) const {
    const Tensor avg = op::mean_over_rows(x);
    const Tensor gw = op::softmax_rows(gate2.forward(op::silu(gate1.forward(avg))));
    Tensor acc;
    for (size_t b = 0; b < branch_k.size(); ++b) {
        Tensor conv = op::dw_conv1d(x, branch_k[b], dilations[b], stride, op::ConvPad::same);
        Tensor term = op::scale_by_entry(pointwise.forward(conv), gw, int(b));
        acc = b == 0 ? term : op::add(acc, term);
    }
    return op::silu(acc);
}

void SsmMixerBlock::build(ParamStore& ps, const std::string& name, Rng& rng, int width_,
                          int d_state_) {
    width = width_;
    d_state = d_state_;
    const int cd = 2 * width;
    in_proj.build(ps, name + ".in", rng, width, cd, false);
    out_proj.build(ps, name + ".out", rng, cd, width, false);
    const double s = std::sqrt(1.0 / 5.0);
    conv_k = ps.add(name + ".conv", init_uniform(rng, cd, 5, -s, s));
    // Transition entries start in [0.9, 0.999]: long memory, spectral radius < 1.
    std::vector<double> ar(static_cast<size_t>(d_state));
    for (auto& v : ar) {
        double u = rng.uniform(0.9, 0.999);
        v = std::log(u / (1.0 - u));
    }
    a_raw = ps.add(name + ".a", Tensor::from_vector(1, d_state, std::move(ar)));
    b_in = ps.add(name + ".B", init_xavier(rng, d_state, cd));
    c_out = ps.add(name + ".C", init_xavier(rng, cd, d_state));
    d_skip = ps.add(name + ".D", Tensor::full(1, cd, 1.0));
    w_gate = ps.add(name + ".Wg", init_xavier(rng, d_state, cd));
    b_gate = ps.add(name + ".bg", Tensor::full(1, d_state, 2.0));
}

Tensor SsmMixerBlock::transition() const { return op::sigmoid(a_raw); }

Tensor SsmMixerBlock::forward(const Tensor& x) const {
    const Tensor e = in_proj.forward(x);
    const Tensor c = op::dw_conv1d(e, conv_k, 1, 1, op::ConvPad::causal);
    const Tensor path =
        op::ssm_scan(op::silu(c), transition(), b_in, c_out, d_skip, w_gate, b_gate);
    const Tensor gated = op::mul(path, op::sigmoid(e));
    return op::add(out_proj.forward(gated), x);
}

void SwitchMoeTemporal::build(ParamStore& ps, const std::string& name, Rng& rng, int width_,
                              int experts_, int radius_) {
    width = width_;
    experts = experts_;
    radius = radius_;
    wq.build(ps, name + ".wq", rng, width, width, false);
    wk.build(ps, name + ".wk", rng, width, width, false);
    wv.build(ps, name + ".wv", rng, width, width, false);
    router.build(ps, name + ".router", rng, width, experts, true);
    ffn.resize(static_cast<size_t>(experts));
    for (int e = 0; e < experts; ++e) {
        auto base = name + ".e" + std::to_string(e);
        ffn[size_t(e)].up.build(ps, base + ".up", rng, width, 2 * width, true);
        ffn[size_t(e)].down.build(ps, base + ".down", rng, 2 * width, width, true,
                                  /*zero_init=*/true);
    }
}

SwitchMoeTemporal::Out SwitchMoeTemporal::forward(const Tensor& x) const {
    const Tensor a =
        op::add(x, op::local_attention(wq.forward(x), wk.forward(x), wv.forward(x), radius));
    const Tensor probs = op::softmax_rows(router.forward(a));
    const int T = a.rows();

    std::vector<int> chosen(static_cast<size_t>(T), 0);
    std::vector<std::vector<int>> groups(static_cast<size_t>(experts));
    std::vector<int> counts(static_cast<size_t>(experts), 0);
    for (int t = 0; t < T; ++t) {
        int best = 0;
        for (int e = 1; e < experts; ++e)
            if (probs.value()[size_t(t) * size_t(experts) + size_t(e)] >
                probs.value()[size_t(t) * size_t(experts) + size_t(best)])
                best = e;  // strict > keeps the lowest index on ties
        chosen[size_t(t)] = best;
        groups[size_t(best)].push_back(t);
        counts[size_t(best)]++;
    }

    Tensor combined;
    bool first = true;
    for (int e = 0; e < experts; ++e) {
        if (groups[size_t(e)].empty()) continue;
        const auto& fe = ffn[size_t(e)];
        Tensor part = op::scatter_rows(
            fe.down.forward(op::silu(fe.up.forward(op::gather_rows(a, groups[size_t(e)])))),
            groups[size_t(e)], T);
        combined = first ? part : op::add(combined, part);
        first = false;
    }
    const Tensor psel = op::select_cols(probs, chosen);
    const Tensor y = op::add(a, op::mul_cols(combined, psel));

    std::vector<double> frac(static_cast<size_t>(experts));
    for (int e = 0; e < experts; ++e) frac[size_t(e)] = double(counts[size_t(e)]) / double(T);
    const Tensor aux =
        op::scale(op::dot_const(op::mean_over_rows(probs), frac), double(experts));
    return Out{y, aux, counts};
}

void GriffinBlock::build(ParamStore& ps, const std::string& name, Rng& rng, int width_) {
    width = width_;
    const double s = std::sqrt(1.0 / 9.0);
    dw_k = ps.add(name + ".dw", init_uniform(rng, width, 9, -s, s));
    pw_v.build(ps, name + ".pwv", rng, width, width, false);
    pw_res.build(ps, name + ".pwr", rng, width, width, false);
    glru_wh = ps.add(name + ".wh", init_xavier(rng, width, width));
    glru_uh = ps.add(name + ".uh", init_xavier(rng, width, width));
    glru_wg = ps.add(name + ".wg", init_xavier(rng, width, width));
    glru_ug = ps.add(name + ".ug", init_xavier(rng, width, width));
    glru_wa = ps.add(name + ".wa", init_xavier(rng, width, width));
    glru_ba = ps.add(name + ".ba", Tensor::full(1, width, -2.0));  // slow default update
    ln.build(ps, name + ".ln", width);
    aq.build(ps, name + ".aq", rng, width, width, false);
    ak.build(ps, name + ".ak", rng, width, width, false);
    av.build(ps, name + ".av", rng, width, width, false);
}

Tensor GriffinBlock::forward(const Tensor& x) const {
    const Tensor v = pw_v.forward(op::dw_conv1d(x, dw_k, 1, 1, op::ConvPad::same));
    const Tensor h = op::glru_scan(v, glru_wh, glru_uh, glru_wg, glru_ug, glru_wa, glru_ba);
    const Tensor x2 = op::add(x, ln.forward(pw_res.forward(h)));
    const Tensor attn =
        op::local_attention(aq.forward(x2), ak.forward(x2), av.forward(x2), 5);
    return op::add(x2, attn);
}

void ChannelReweight::build(ParamStore& ps, const std::string& name, Rng& rng, int width_,
                            int rank_) {
    width = width_;
    rank = rank_;
    const int hidden = std::max(1, width / 4);
    w1.build(ps, name + ".w1", rng, width, hidden, true);
    w2.build(ps, name + ".w2", rng, hidden, width, true);
}

ChannelReweight::Out ChannelReweight::forward(const Tensor& h) const {
    const Tensor d = op::cov_reweight_diag(h, rank);
    const Tensor s = op::sigmoid(w2.forward(op::silu(w1.forward(d))));
    return Out{op::mul_rows(h, s), s};
}

void AttnPool::build(ParamStore& ps, const std::string& name, Rng& rng, int width,
                     bool final_proj) {
    q = ps.add(name + ".q", init_uniform(rng, 1, width, -1.0 / std::sqrt(double(width)),
                                         1.0 / std::sqrt(double(width))));
    wk.build(ps, name + ".wk", rng, width, width, false);
    wv.build(ps, name + ".wv", rng, width, width, false);
    if (final_proj) {
        wo.emplace();
        wo->build(ps, name + ".wo", rng, width, width, false);
    }
}

Tensor AttnPool::forward(const Tensor& x) const {
    Tensor token = op::attention(q, wk.forward(x), wv.forward(x), nullptr);
    if (wo) token = wo->forward(token);
    return token;
}

void CrossCondition::build(ParamStore& ps, const std::string& name, Rng& rng, int width_,
                           int radius_) {
    width = width_;
    radius = radius_;
    rq.build(ps, name + ".rq", rng, width, width, false);
    rk.build(ps, name + ".rk", rng, width, width, false);
    vq.build(ps, name + ".vq", rng, width, width, false);
    vk.build(ps, name + ".vk", rng, width, width, false);
}

CrossCondition::Out CrossCondition::forward(const Tensor& y, const Tensor& h) const {
    // Values are the raw opposite-stream rows: no value projection.
    const Tensor y_star = op::local_attention(rq.forward(y), rk.forward(h), h, radius);
    const Tensor h_star = op::local_attention(vq.forward(h), vk.forward(y), y, radius);
    return Out{y_star, h_star};
}

void LowRankBilinear::build(ParamStore& ps, const std::string& name, Rng& rng, int width_,
                            int rank_, int gates_) {
    width = width_;
    rank = rank_;
    gates = gates_;
    u = ps.add(name + ".u", init_orthonormal(rng, width, rank));
    v = ps.add(name + ".v", init_orthonormal(rng, width, rank));
    dk.clear();
    for (int k = 0; k < gates; ++k)
        dk.push_back(ps.add(name + ".d" + std::to_string(k),
                            Tensor::full(1, rank, 1.0 / double(gates))));
    wo.build(ps, name + ".wo", rng, rank, width, false);
}

Tensor LowRankBilinear::forward(const Tensor& m, const Tensor& i) const {
    const Tensor prod = op::mul(op::matmul(m, u), op::matmul(i, v));
    Tensor gated;
    for (int k = 0; k < gates; ++k) {
        Tensor term = op::mul(prod, dk[size_t(k)]);
        gated = k == 0 ? term : op::add(gated, term);
    }
    return wo.forward(op::silu(gated));
}

void FusionMoe::build(ParamStore& ps, const std::string& name, Rng& rng, int width_,
                      int experts_) {
    width = width_;
    experts = experts_;
    router1.build(ps, name + ".r1", rng, 3 * width, width, true);
    router2.build(ps, name + ".r2", rng, width, experts, true);
    ffn.resize(static_cast<size_t>(experts));
    for (int e = 0; e < experts; ++e) {
        auto base = name + ".e" + std::to_string(e);
        ffn[size_t(e)].up.build(ps, base + ".up", rng, width, 2 * width, true);
        ffn[size_t(e)].down.build(ps, base + ".down", rng, 2 * width, width, true,
                                  /*zero_init=*/true);
    }
}

FusionMoe::Out FusionMoe::forward(const Tensor& m, const Tensor& i, const Tensor& z) const {
    const Tensor cat = op::concat_cols({m, i, z});
    const Tensor probs = op::softmax_rows(router2.forward(op::silu(router1.forward(cat))));
    int best = 0;
    for (int e = 1; e < experts; ++e)
        if (probs.value()[size_t(e)] > probs.value()[size_t(best)]) best = e;
    const auto& fe = ffn[size_t(best)];
    const Tensor ex = fe.down.forward(op::silu(fe.up.forward(z)));
    const Tensor token = op::add(z, op::scale_by_entry(ex, probs, best));
    const Tensor aux = op::scale(op::select_cols(probs, {best}), double(experts));
    return Out{token, aux, best};
}

void AblationToggles::validate() const {
    const bool single = modality != Modality::both;
    if (single && (cross_condition || mlb || fusion_moe))
        throw SpecError("single-modality variant cannot keep fusion components");
    if (single && fusion != FusionMode::full)
        throw SpecError("early-concat / late-average require both modalities");
    if (fusion == FusionMode::early_concat &&
        (cross_condition || mlb || fusion_moe || stream_moe || temporal_mixer || reweight))
        throw SpecError("early concatenation replaces both branches and the fusion head");
    if (fusion == FusionMode::late_average && (cross_condition || mlb || fusion_moe))
        throw SpecError("late score averaging keeps branches independent");
}

std::string AblationToggles::describe() const {
    std::string s;
    switch (fusion) {
        case FusionMode::early_concat: return "early_concat";
        case FusionMode::late_average: return "late_average";
        case FusionMode::full: break;
    }
    switch (modality) {
        case Modality::radar_only: return "radar_only";
        case Modality::vibration_only: return "vibration_only";
        case Modality::both: break;
    }
    s = "full";
    if (!lsk) s += "-lsk";
    if (!temporal_mixer) s += "-temporal";
    if (!stream_moe) s += "-stream_moe";
    if (!reweight) s += "-reweight";
    if (!cross_condition) s += "-crosscond";
    if (!mlb) s += "-mlb";
    if (!fusion_moe) s += "-fusion_moe";
    return s;
}

double ForwardOut::prob() const {
    const double p1 = 1.0 / (1.0 + std::exp(-logit.value()[0]));
    if (!logit2) return p1;
    const double p2 = 1.0 / (1.0 + std::exp(-logit2->value()[0]));
    return 0.5 * (p1 + p2);
}

namespace {

Tensor decimate2(const Tensor& x) {
    std::vector<int> idx;
    for (int t = 0; t < x.rows(); t += 2) idx.push_back(t);
    return op::gather_rows(x, idx);
}

Tensor zero_scalar() { return Tensor::zeros(1, 1); }

}  // namespace

void FallModel::build(uint64_t seed) {
    cfg.toggles.validate();
    params.items.clear();
    Rng root(seed);
    // Independent stream per component: shared parts initialize identically
    // across ablation variants with the same seed.
    auto sub = [&root](uint64_t salt) { return root.child(salt); };
    const auto& tg = cfg.toggles;
    const int C = cfg.channels;

    if (tg.fusion == FusionMode::early_concat) {
        const int cin = cfg.vib_in + cfg.radar_in;
        Rng r1 = sub(101), r2 = sub(102), r3 = sub(103);
        ec_lsk1.build(params, "ec.lsk1", r1, cin, C, {{3, 1}, {7, 2}, {11, 3}}, 1, C / 4);
        ec_lsk2.build(params, "ec.lsk2", r2, C, C, {{3, 1}, {7, 2}, {11, 3}}, 2, C / 4);
        ec_classifier.build(params, "ec.head", r3, C, 1, true);
        return;
    }

    const bool radar_on = tg.modality != Modality::vibration_only;
    const bool vib_on = tg.modality != Modality::radar_only;
    const bool fused = radar_on && vib_on;

    if (radar_on) {
        if (tg.lsk) {
            Rng r1 = sub(1), r2 = sub(2);
            r_lsk1.build(params, "radar.lsk1", r1, cfg.radar_in, C, {{3, 1}, {7, 2}, {11, 3}},
                         1, C / 4);
            r_lsk2.build(params, "radar.lsk2", r2, C, C, {{3, 1}, {7, 2}, {11, 3}}, 2, C / 4);
        } else {
            Rng r = sub(3);
            r_plain.build(params, "radar.plain", r, cfg.radar_in, C, false);
        }
        if (tg.temporal_mixer) {
            Rng r1 = sub(4), r2 = sub(5);
            r_mix1.build(params, "radar.mix1", r1, C, cfg.d_state);
            r_mix2.build(params, "radar.mix2", r2, C, cfg.d_state);
        }
        if (tg.stream_moe) {
            Rng r = sub(6);
            r_moe.build(params, "radar.moe", r, C, cfg.moe_experts, cfg.moe_radius);
        }
        Rng rp = sub(7);
        pool_motion.build(params, "pool.motion", rp, C, /*final_proj=*/false);
    }
    if (vib_on) {
        if (tg.lsk) {
            Rng r = sub(11);
            v_lsk.build(params, "vib.lsk", r, cfg.vib_in, C, {{3, 1}, {5, 2}, {7, 3}}, 2,
                        C / 4);
        } else {
            Rng r = sub(12);
            v_plain.build(params, "vib.plain", r, cfg.vib_in, C, false);
        }
        Rng rg = sub(13);
        v_griffin.build(params, "vib.griffin", rg, C);
        if (tg.reweight) {
            Rng r = sub(14);
            v_reweight.build(params, "vib.reweight", r, C, cfg.reweight_rank);
        }
        Rng rp = sub(15);
        pool_impact.build(params, "pool.impact", rp, C, /*final_proj=*/true);
    }
    if (fused && tg.cross_condition) {
        Rng r = sub(21);
        cross.build(params, "fusion.cross", r, C, cfg.cross_radius);
    }
    if (fused && tg.fusion == FusionMode::full) {
        if (tg.mlb) {
            Rng r = sub(22);
            mlb.build(params, "fusion.mlb", r, C, cfg.mlb_rank, cfg.mlb_gates);
        }
        if (tg.fusion_moe) {
            Rng r = sub(23);
            f_moe.build(params, "fusion.moe", r, C, cfg.moe_experts);
        }
    }
    {
        Rng r = sub(31);
        classifier.build(params, "head.main", r, C, 1, true);
    }
    if (fused && tg.fusion == FusionMode::late_average) {
        Rng r = sub(32);
        classifier_radar.build(params, "head.radar", r, C, 1, true);
    }
}

Tensor FallModel::encode_radar(const Tensor& radar, Tensor* aux_accum,
                               std::vector<int>* counts) const {
    const auto& tg = cfg.toggles;
    Tensor x = tg.lsk ? r_lsk2.forward(r_lsk1.forward(radar))
                      : decimate2(r_plain.forward(radar));
    if (tg.temporal_mixer) x = r_mix2.forward(r_mix1.forward(x));
    if (tg.stream_moe) {
        auto out = r_moe.forward(x);
        if (aux_accum) *aux_accum = op::add(*aux_accum, out.aux);
        if (counts) *counts = out.expert_counts;
        return out.y;
    }
    return x;
}

Tensor FallModel::encode_vibration(const Tensor& vib) const {
    const auto& tg = cfg.toggles;
    Tensor h = tg.lsk ? v_lsk.forward(vib) : decimate2(v_plain.forward(vib));
    h = v_griffin.forward(h);
    if (tg.reweight) h = v_reweight.forward(h).h;
    return h;
}

ForwardOut FallModel::forward(const Tensor& vib, const Tensor& radar) const {
    const auto& tg = cfg.toggles;
    ForwardOut out;
    out.aux = zero_scalar();

    if (tg.fusion == FusionMode::early_concat) {
        const Tensor x = op::concat_cols({vib, radar});
        const Tensor enc = ec_lsk2.forward(ec_lsk1.forward(x));
        out.logit = ec_classifier.forward(op::mean_over_rows(enc));
        return out;
    }

    const bool radar_on = tg.modality != Modality::vibration_only;
    const bool vib_on = tg.modality != Modality::radar_only;

    Tensor y, h;
    if (radar_on) y = encode_radar(radar, &out.aux, &out.temporal_counts);
    if (vib_on) h = encode_vibration(vib);

    if (!vib_on) {
        out.logit = classifier.forward(pool_motion.forward(y));
        return out;
    }
    if (!radar_on) {
        out.logit = classifier.forward(pool_impact.forward(h));
        return out;
    }

    if (tg.fusion == FusionMode::late_average) {
        out.logit = classifier.forward(pool_impact.forward(h));
        out.logit2 = classifier_radar.forward(pool_motion.forward(y));
        return out;
    }

    Tensor ys = y, hs = h;
    if (tg.cross_condition) {
        auto cc = cross.forward(y, h);
        ys = cc.y;
        hs = cc.h;
    }
    const Tensor m = pool_motion.forward(ys);
    const Tensor i = pool_impact.forward(hs);
    const Tensor z = tg.mlb ? mlb.forward(m, i) : op::scale(op::add(m, i), 0.5);
    Tensor token = z;
    if (tg.fusion_moe) {
        auto fo = f_moe.forward(m, i, z);
        token = fo.token;
        out.aux = op::add(out.aux, fo.aux);
        out.fusion_expert = fo.expert_id;
    }
    out.logit = classifier.forward(token);
    return out;
}

uint64_t FallModel::mac_count(int t_in) const {
    const auto& tg = cfg.toggles;
    const int C = cfg.channels;
    const uint64_t T = uint64_t(t_in);
    const uint64_t Th = T / 2;

    auto lin = [](uint64_t t, uint64_t in, uint64_t out) { return t * in * out; };
    auto lsk = [&](uint64_t t_out, uint64_t cin, uint64_t cout) {
        uint64_t m = 0;
        for (int k : {3, 7, 11}) m += t_out * cin * uint64_t(k);          // branches
        m += 3 * lin(t_out, cin, cout);                                   // shared pointwise
        m += cin * (cin / 4 + 1) + (cin / 4) * 3;                         // gate MLP
        return m;
    };
    auto local_attn = [&](uint64_t t, uint64_t w, uint64_t c, uint64_t cv) {
        return t * w * (c + cv);
    };
    auto mixer = [&](uint64_t t) {
        const uint64_t cd = 2 * uint64_t(C), S = uint64_t(cfg.d_state);
        uint64_t m = lin(t, C, cd) + t * cd * 5 + lin(t, cd, C);
        m += t * S * (2 * cd) + t * cd * S + t * cd;  // B/gate, C readout, D skip
        return m;
    };

    uint64_t macs = 0;
    if (tg.fusion == FusionMode::early_concat) {
        const uint64_t cin = uint64_t(cfg.vib_in + cfg.radar_in);
        macs += lsk(T, cin, uint64_t(C)) + lsk(Th, uint64_t(C), uint64_t(C));
        macs += lin(1, uint64_t(C), 1);
        return macs;
    }
    const bool radar_on = tg.modality != Modality::vibration_only;
    const bool vib_on = tg.modality != Modality::radar_only;

    if (radar_on) {
        macs += tg.lsk ? lsk(T, uint64_t(cfg.radar_in), uint64_t(C)) +
                             lsk(Th, uint64_t(C), uint64_t(C))
                       : lin(T, uint64_t(cfg.radar_in), uint64_t(C));
        if (tg.temporal_mixer) macs += 2 * mixer(Th);
        if (tg.stream_moe) {
            macs += 3 * lin(Th, C, C) + local_attn(Th, 7, uint64_t(C), uint64_t(C));
            macs += lin(Th, C, cfg.moe_experts);
            macs += Th * uint64_t(C) * uint64_t(2 * C) * 2;  // one expert per step
        }
        macs += 2 * lin(Th, C, C) + Th * uint64_t(C);  // motion pooling
    }
    if (vib_on) {
        macs += tg.lsk ? [&] {
            uint64_t m = 0;
            for (int k : {3, 5, 7}) m += Th * uint64_t(cfg.vib_in) * uint64_t(k);
            m += 3 * lin(Th, cfg.vib_in, C) + uint64_t(cfg.vib_in) * (C / 4 + 1);
            return m;
        }()
                       : lin(T, uint64_t(cfg.vib_in), uint64_t(C));
        macs += Th * uint64_t(C) * 9 + 2 * lin(Th, C, C);        // conv + projections
        macs += Th * uint64_t(C) * uint64_t(C) * 5;              // recurrence matvecs
        macs += 3 * lin(Th, C, C) + local_attn(Th, 11, C, C);    // local attention
        if (tg.reweight) macs += Th * uint64_t(C) * uint64_t(C) + uint64_t(C) * (C / 4) * 2;
        macs += 3 * lin(Th, C, C) + Th * uint64_t(C);            // impact pooling
    }
    if (radar_on && vib_on) {
        if (tg.cross_condition)
            macs += 4 * lin(Th, C, C) + 2 * local_attn(Th, 13, C, C);
        if (tg.fusion == FusionMode::full) {
            if (tg.mlb)
                macs += 2 * uint64_t(C) * uint64_t(cfg.mlb_rank) +
                        uint64_t(cfg.mlb_gates + 1) * uint64_t(cfg.mlb_rank) +
                        uint64_t(cfg.mlb_rank) * uint64_t(C);
            if (tg.fusion_moe)
                macs += uint64_t(3 * C) * uint64_t(C) + uint64_t(C) * cfg.moe_experts +
                        2 * uint64_t(C) * uint64_t(2 * C);
        }
    }
    macs += uint64_t(C);  // classifier
    return macs;
}

Tensor total_loss(const Tensor& logits, const std::vector<double>& labels,
                  const std::vector<double>& gamma, const Tensor& aux_mean,
                  const FallModel& model, const LossConfig& cfg) {
    if (static_cast<size_t>(logits.rows()) != labels.size() || labels.size() != gamma.size())
        throw ShapeMismatch("total_loss: batch size mismatch");
    for (double l : labels)
        if (l != 0.0 && l != 1.0) throw InvalidLabel("total_loss: labels must be 0 or 1");
    for (double g : gamma)
        if (!(g >= 0.0 && g <= 1.0))
            throw DegenerateInput("total_loss: consistency weights must lie in [0,1]");

    std::vector<double> w(gamma.size());
    double wn = 0.0;
    for (size_t b = 0; b < gamma.size(); ++b) {
        w[b] = std::max(gamma[b], cfg.gamma_min);
        wn += w[b];
    }
    Tensor loss = op::bce_with_logits(logits, labels, w, wn);
    loss = op::add(loss, op::scale(aux_mean, cfg.lambda_lb));
    const auto& tg = model.cfg.toggles;
    if (tg.modality == Modality::both && tg.fusion == FusionMode::full && tg.mlb) {
        Tensor orth = op::add(op::orth_penalty(model.mlb.u), op::orth_penalty(model.mlb.v));
        loss = op::add(loss, op::scale(orth, cfg.lambda_orth));
    }
    return loss;
}

}  // namespace falldet::nn
