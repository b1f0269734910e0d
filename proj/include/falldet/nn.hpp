#pragma once

// Model layers for the two-stream detector. Every layer owns its parameters
// as Tensor leaves and exposes a pure forward over the autograd ops, so one
// definition serves training, evaluation, and the service path.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "falldet/common.hpp"
#include "falldet/tensor.hpp"

namespace falldet::nn {

using falldet::Tensor;

// Ordered parameter registry: deterministic iteration drives the optimizer
// and the checkpoint layout.
struct ParamStore {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor add(const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        items.emplace_back(name, t);
        return t;
    }
    size_t count_values() const {
        size_t n = 0;
        for (const auto& [_, t] : items) n += t.value().size();
        return n;
    }
    void zero_grad() {
        for (auto& [_, t] : items) t.zero_grad();
    }
    const Tensor* find(const std::string& name) const {
        for (const auto& [k, t] : items)
            if (k == name) return &t;
        return nullptr;
    }
};

// Weight initializers. All draw from the supplied stream so a run seed fully
// determines the model.
Tensor init_xavier(Rng& rng, int rows, int cols);
Tensor init_uniform(Rng& rng, int rows, int cols, double lo, double hi);
Tensor init_const(int rows, int cols, double v);
// Orthonormal columns via Gram-Schmidt on a random matrix (rows >= cols).
Tensor init_orthonormal(Rng& rng, int rows, int cols);

struct LinearLayer {
    Tensor w;  // [in,out]
    std::optional<Tensor> b;
    void build(ParamStore& ps, const std::string& name, Rng& rng, int in, int out,
               bool bias, bool zero_init = false);
    Tensor forward(const Tensor& x) const;
};

struct LayerNormLayer {
    Tensor gain, bias;
    void build(ParamStore& ps, const std::string& name, int width);
    Tensor forward(const Tensor& x) const;
};

// Parallel dilated depthwise branches over the input channels, one shared
// bias-free pointwise lift, branch mix by a softmax gate computed from the
// channelwise global average, SiLU on the combination. Stride applies in the
// depthwise stage.
struct LskBlock {
    int cin = 0, cout = 0, stride = 1;
    std::vector<int> kernels, dilations;
    std::vector<Tensor> branch_k;  // each [cin, k]
    LinearLayer pointwise;         // cin -> cout, bias-free
    LinearLayer gate1, gate2;      // cin -> hidden -> n_branches
    void build(ParamStore& ps, const std::string& name, Rng& rng, int cin, int cout,
               std::vector<std::pair<int, int>> taps, int stride, int gate_hidden);
    Tensor forward(const Tensor& x) const;
};

// Gated state-space mixer: pointwise expansion to 2C, causal depthwise conv
// (k=5), SiLU, gated scan on the expanded width, multiplicative sigmoid gate
// from the expanded input, pointwise back to C, residual.
struct SsmMixerBlock {
    int width = 0, d_state = 0;
    LinearLayer in_proj, out_proj;  // C->2C, 2C->C, bias-free
    Tensor conv_k;                  // [2C,5]
    Tensor a_raw;                   // [1,S]; transition = sigmoid(a_raw)
    Tensor b_in, c_out, d_skip, w_gate, b_gate;
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width, int d_state);
    Tensor forward(const Tensor& x) const;
    Tensor transition() const;  // sigmoid(a_raw), entries in (0,1)
};

// Windowed self-attention refinement followed by hard top-1 expert dispatch
// with a load-balance auxiliary.
struct SwitchMoeTemporal {
    int width = 0, experts = 0, radius = 3;
    LinearLayer wq, wk, wv;  // bias-free
    LinearLayer router;      // C -> E
    struct Expert {
        LinearLayer up, down;  // C->2C, 2C->C (down zero-init)
    };
    std::vector<Expert> ffn;
    struct Out {
        Tensor y;
        Tensor aux;  // scalar, >= 1 at balance
        std::vector<int> expert_counts;
    };
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width, int experts,
               int radius);
    Out forward(const Tensor& x) const;
};

// Conv + gated linear recurrence + local attention block for the vibration
// stream.
struct GriffinBlock {
    int width = 0;
    Tensor dw_k;  // [C,9]
    LinearLayer pw_v, pw_res;
    Tensor glru_wh, glru_uh, glru_wg, glru_ug, glru_wa, glru_ba;
    LayerNormLayer ln;
    LinearLayer aq, ak, av;  // local attention projections, bias-free
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width);
    Tensor forward(const Tensor& x) const;
};

// Rank-r covariance energy per channel drives a sigmoid gate over channels.
struct ChannelReweight {
    int width = 0, rank = 8;
    LinearLayer w1, w2;  // C -> C/4 -> C
    struct Out {
        Tensor h;  // reweighted features
        Tensor s;  // [1,C] gate
    };
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width, int rank);
    Out forward(const Tensor& h) const;
};

// Single learned query pooled over time; optional final projection.
struct AttnPool {
    Tensor q;            // [1,C]
    LinearLayer wk, wv;  // bias-free
    std::optional<LinearLayer> wo;
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width,
               bool final_proj);
    Tensor forward(const Tensor& x) const;  // [1,C]
};

// Windowed cross-stream attention; values are the raw opposite-stream rows.
struct CrossCondition {
    int width = 0, radius = 6;
    LinearLayer rq, rk;  // radar-queries-vibration projections
    LinearLayer vq, vk;  // vibration-queries-radar projections
    struct Out {
        Tensor y;  // radar stream conditioned on vibration
        Tensor h;  // vibration stream conditioned on radar
    };
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width, int radius);
    Out forward(const Tensor& y, const Tensor& h) const;
};

// z = Wo SiLU(sum_k Dk (U^T m o V^T i)); bias-free throughout so a zero token
// annihilates the output exactly.
struct LowRankBilinear {
    int width = 0, rank = 32, gates = 4;
    Tensor u, v;              // [C,d]
    std::vector<Tensor> dk;   // each [1,d]
    LinearLayer wo;           // d -> C, bias-free
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width, int rank,
               int gates);
    Tensor forward(const Tensor& m, const Tensor& i) const;
};

// Per-window top-1 expert adapter on the fused vector; router sees [m|i|z].
struct FusionMoe {
    int width = 0, experts = 0;
    LinearLayer router1, router2;  // 3C -> C -> E
    struct Expert {
        LinearLayer up, down;
    };
    std::vector<Expert> ffn;
    struct Out {
        Tensor token;
        Tensor aux;  // scalar: E * p_chosen, equals 1 at uniform routing
        int expert_id = -1;
    };
    void build(ParamStore& ps, const std::string& name, Rng& rng, int width, int experts);
    Out forward(const Tensor& m, const Tensor& i, const Tensor& z) const;
};

enum class Modality { both, radar_only, vibration_only };
enum class FusionMode { full, early_concat, late_average };

// Component switches for the ablation matrix. Disabled pieces are replaced by
// identity (temporal mixers, MoEs, reweight, cross-conditioning) or averaging
// (bilinear coupling -> token mean; late_average -> per-branch heads).
struct AblationToggles {
    bool lsk = true;
    bool temporal_mixer = true;
    bool stream_moe = true;
    bool reweight = true;
    bool cross_condition = true;
    bool mlb = true;
    bool fusion_moe = true;
    Modality modality = Modality::both;
    FusionMode fusion = FusionMode::full;

    void validate() const;  // SpecError on contradictory combinations
    std::string describe() const;
};

struct ModelConfig {
    int channels = 64;       // feature width C
    int radar_in = 5;        // kinematic components
    int vib_in = 3;          // accelerometer axes
    int d_state = 64;
    int moe_experts = 4;
    int moe_radius = 3;      // 7-frame centered window
    int cross_radius = 6;
    int mlb_rank = 32;
    int mlb_gates = 4;
    int reweight_rank = 8;
    AblationToggles toggles;
};

struct ForwardOut {
    Tensor logit;                   // [1,1]
    std::optional<Tensor> logit2;   // second head under late score averaging
    Tensor aux;                     // [1,1] router balance term (unscaled)
    int fusion_expert = -1;
    std::vector<int> temporal_counts;
    double prob() const;            // mean sigmoid over present heads
};

// The full detector. Forward maps one preprocessed window pair
// (vibration [T,3], radar features [T,5]) to a fall logit.
struct FallModel {
    ModelConfig cfg;
    ParamStore params;

    // radar stream
    LskBlock r_lsk1, r_lsk2;
    LinearLayer r_plain;  // LSK-off replacement: pointwise lift + decimation
    SsmMixerBlock r_mix1, r_mix2;
    SwitchMoeTemporal r_moe;
    // vibration stream
    LskBlock v_lsk;
    LinearLayer v_plain;
    GriffinBlock v_griffin;
    ChannelReweight v_reweight;
    // fusion
    CrossCondition cross;
    AttnPool pool_motion, pool_impact;
    LowRankBilinear mlb;
    FusionMoe f_moe;
    LinearLayer classifier;          // C -> 1, bias
    LinearLayer classifier_radar;    // late-average / radar-only head
    // early-concat baseline: small conv net on the stacked 8-channel input
    LskBlock ec_lsk1, ec_lsk2;
    LinearLayer ec_classifier;

    void build(uint64_t seed);
    ForwardOut forward(const Tensor& vib, const Tensor& radar) const;

    // Radar/vibration encoders up to the fused sequence inputs.
    Tensor encode_radar(const Tensor& radar, Tensor* aux_accum,
                        std::vector<int>* counts) const;
    Tensor encode_vibration(const Tensor& vib) const;

    size_t param_count() const { return params.count_values(); }
    // Analytic multiply-accumulate count of one forward at window length T.
    uint64_t mac_count(int t_in) const;
};

struct LossConfig {
    double lambda_lb = 0.01;
    double lambda_orth = 1e-4;
    double gamma_min = 0.1;
};

// Weighted stable BCE + lambda_lb * aux + lambda_orth * (orthogonality of the
// bilinear projections). `aux` is the mean router balance term of the batch.
// Labels outside {0,1} raise InvalidLabel.
Tensor total_loss(const Tensor& logits, const std::vector<double>& labels,
                  const std::vector<double>& gamma, const Tensor& aux_mean,
                  const FallModel& model, const LossConfig& cfg);

}  // namespace falldet::nn
