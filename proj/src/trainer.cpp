#include "falldet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "falldet/ops.hpp"

namespace falldet::tr {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint64_t mix_seed(uint64_t seed, uint64_t epoch, uint64_t slot) {
    return Rng(seed).child(epoch + 1).child(slot + 1).seed();
}

struct PreparedBatch {
    std::vector<Tensor> vib, radar;
    std::vector<double> labels, gammas;
};

// Augment (training only) and normalize one batch. Parallel across windows
// when workers > 1; outputs land in slot order either way.
PreparedBatch prepare_batch(const std::vector<ds::WindowRecord>& set,
                            const std::vector<size_t>& idx, size_t lo, size_t hi,
                            const ds::NormStats& stats, const TrainConfig& cfg, int epoch,
                            bool training) {
    PreparedBatch b;
    const size_t n = hi - lo;
    b.vib.resize(n);
    b.radar.resize(n);
    b.labels.resize(n);
    b.gammas.resize(n);
#pragma omp parallel for schedule(static) if (cfg.workers > 1)
    for (int64_t k = 0; k < int64_t(n); ++k) {
        const size_t slot = lo + size_t(k);
        const ds::WindowRecord& src = set[idx[slot]];
        b.labels[size_t(k)] = src.label ? 1.0 : 0.0;
        b.gammas[size_t(k)] = std::clamp(double(src.weight), 0.0, 1.0);
        if (training && cfg.augment) {
            ds::WindowRecord w = ds::augment(src, mix_seed(cfg.seed, uint64_t(epoch), slot),
                                             cfg.aug);
            ds::window_tensors(w, stats, b.vib[size_t(k)], b.radar[size_t(k)]);
        } else {
            ds::window_tensors(src, stats, b.vib[size_t(k)], b.radar[size_t(k)]);
        }
    }
    return b;
}

// Forward the batch in slot order and assemble the scalar training loss.
Tensor batch_loss(const nn::FallModel& model, const PreparedBatch& b,
                  const nn::LossConfig& lc) {
    std::vector<Tensor> l1, l2, aux;
    bool two_heads = false;
    for (size_t k = 0; k < b.vib.size(); ++k) {
        nn::ForwardOut out = model.forward(b.vib[k], b.radar[k]);
        l1.push_back(out.logit);
        aux.push_back(out.aux);
        if (out.logit2) {
            two_heads = true;
            l2.push_back(*out.logit2);
        }
    }
    Tensor aux_mean = ops::mean_over_rows(ops::concat_rows(aux));
    Tensor loss = nn::total_loss(ops::concat_rows(l1), b.labels, b.gammas, aux_mean, model, lc);
    if (two_heads) {
        if (l2.size() != l1.size())
            throw ShapeMismatch("batch_loss: second head present for part of the batch");
        Tensor loss2 =
            nn::total_loss(ops::concat_rows(l2), b.labels, b.gammas, aux_mean, model, lc);
        loss = ops::add(ops::scale(loss, 0.5), ops::scale(loss2, 0.5));
    }
    return loss;
}

double dataset_loss(const nn::FallModel& model, const std::vector<ds::WindowRecord>& set,
                    const ds::NormStats& stats, const TrainConfig& cfg) {
    if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
    NoGradGuard ng;
    std::vector<size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), size_t(0));
    double acc = 0.0;
    size_t done = 0;
    while (done < idx.size()) {
        size_t hi = std::min(done + size_t(cfg.batch_size), idx.size());
        PreparedBatch b = prepare_batch(set, idx, done, hi, stats, cfg, 0, false);
        acc += batch_loss(model, b, cfg.loss).item() * double(hi - done);
        done = hi;
    }
    return acc / double(idx.size());
}

// Epoch ordering: full shuffle, or a class-balanced subsample (minority
// oversampled with replacement) when a per-epoch budget is set.
std::vector<size_t> epoch_indices(const std::vector<ds::WindowRecord>& set,
                                  const TrainConfig& cfg, int epoch) {
    Rng r = Rng(cfg.seed).child(0x5eedull + uint64_t(epoch));
    std::vector<size_t> all(set.size());
    std::iota(all.begin(), all.end(), size_t(0));
    if (cfg.max_windows_per_epoch <= 0 || size_t(cfg.max_windows_per_epoch) >= all.size()) {
        r.shuffle(all);
        return all;
    }
    std::vector<size_t> falls, rest;
    for (size_t i : all) (set[i].label ? falls : rest).push_back(i);
    r.shuffle(falls);
    r.shuffle(rest);
    const size_t want = size_t(cfg.max_windows_per_epoch);
    std::vector<size_t> out;
    out.reserve(want);
    if (falls.empty() || rest.empty()) {
        const auto& pool = falls.empty() ? rest : falls;
        for (size_t i = 0; i < want; ++i) out.push_back(pool[i % pool.size()]);
    } else {
        const size_t nf = want / 2, nr = want - nf;
        for (size_t i = 0; i < nf; ++i) out.push_back(falls[i % falls.size()]);
        for (size_t i = 0; i < nr; ++i) out.push_back(rest[i % rest.size()]);
    }
    r.shuffle(out);
    return out;
}

std::vector<std::pair<std::string, std::vector<double>>> snapshot(const nn::ParamStore& ps) {
    std::vector<std::pair<std::string, std::vector<double>>> s;
    for (const auto& [name, t] : ps.items)
        s.emplace_back(name, std::vector<double>(t.value().begin(), t.value().end()));
    return s;
}

void restore(nn::ParamStore& ps, const std::vector<std::pair<std::string, std::vector<double>>>& s) {
    for (size_t i = 0; i < ps.items.size(); ++i) {
        auto dst = ps.items[i].second.value_mut();
        std::copy(s[i].second.begin(), s[i].second.end(), dst.begin());
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs <= 0 || batch_size <= 0) throw SpecError("TrainConfig: non-positive schedule");
    if (!(lr > 0.0)) throw SpecError("TrainConfig: non-positive learning rate");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw SpecError("TrainConfig: Adam betas outside [0,1)");
    if (!(adam_eps > 0.0) || !(weight_decay >= 0.0))
        throw SpecError("TrainConfig: bad optimizer constants");
    if (workers <= 0) throw SpecError("TrainConfig: non-positive worker count");
}

void AdamW::init(const nn::ParamStore& ps) {
    t = 0;
    m.assign(ps.items.size(), {});
    v.assign(ps.items.size(), {});
    for (size_t i = 0; i < ps.items.size(); ++i) {
        m[i].assign(ps.items[i].second.value().size(), 0.0);
        v[i].assign(ps.items[i].second.value().size(), 0.0);
    }
}

void AdamW::step(nn::ParamStore& ps, double lr_now) {
    if (m.size() != ps.items.size()) throw ShapeMismatch("AdamW: step before init");
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < ps.items.size(); ++i) {
        Tensor& p = ps.items[i].second;
        auto val = p.value_mut();
        auto g = p.grad();
        if (g.size() != val.size()) continue;  // never touched by any graph
        // decay acts on matrices only; bias-like [1,N] rows are exempt
        const double wd = p.rows() > 1 ? weight_decay : 0.0;
        for (size_t j = 0; j < val.size(); ++j) {
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g[j];
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g[j] * g[j];
            double mh = m[i][j] / c1;
            double vh = v[i][j] / c2;
            val[j] -= lr_now * (mh / (std::sqrt(vh) + eps) + wd * val[j]);
        }
    }
}

double cosine_lr(double base, int epoch, int total_epochs) {
    if (total_epochs <= 1) return base;
    return base * 0.5 * (1.0 + std::cos(kPi * double(epoch) / double(total_epochs)));
}

TrainResult train(nn::FallModel& model, const std::vector<ds::WindowRecord>& train_set,
                  const std::vector<ds::WindowRecord>& val_set, const ds::NormStats& stats,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty()) throw DegenerateInput("train: empty training split");

    AdamW opt;
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.adam_eps;
    opt.weight_decay = cfg.weight_decay;
    opt.init(model.params);

    TrainResult res;
    std::vector<std::pair<std::string, std::vector<double>>> best;
    for (int e = 0; e < cfg.epochs; ++e) {
        const double lr_e = cosine_lr(cfg.lr, e, cfg.epochs);
        std::vector<size_t> idx = epoch_indices(train_set, cfg, e);
        double ep_loss = 0.0;
        size_t done = 0;
        while (done < idx.size()) {
            size_t hi = std::min(done + size_t(cfg.batch_size), idx.size());
            PreparedBatch b = prepare_batch(train_set, idx, done, hi, stats, cfg, e, true);
            Tensor loss = batch_loss(model, b, cfg.loss);
            const double lv = loss.item();
            if (!std::isfinite(lv)) throw DivergenceError("train: loss is not finite");
            model.params.zero_grad();
            loss.backward();
            opt.step(model.params, lr_e);
            ep_loss += lv * double(hi - done);
            done = hi;
        }
        ep_loss /= double(idx.size());

        // An empty validation split falls back to the training loss so best
        // tracking still has a signal.
        double vl = val_set.empty() ? ep_loss : dataset_loss(model, val_set, stats, cfg);
        if (!std::isfinite(vl)) throw DivergenceError("train: validation loss is not finite");
        res.history.push_back({e, lr_e, ep_loss, vl});
        if (vl < res.best_val_loss) {
            res.best_val_loss = vl;
            res.best_epoch = e;
            best = snapshot(model.params);
        }
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d lr %.2e train %.4f val %.4f\n", e, lr_e, ep_loss, vl);
    }
    if (!best.empty()) restore(model.params, best);
    return res;
}

std::vector<double> predict(const nn::FallModel& model, const std::vector<ds::WindowRecord>& set,
                            const ds::NormStats& stats) {
    std::vector<double> probs(set.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(set.size()); ++i) {
        NoGradGuard ng;
        // same scoring path as the streaming service: residual micro-shift
        // gate, then normalization; keeps online and offline scores identical
        ds::PreparedWindow pw = ds::prepare_window(set[size_t(i)], stats);
        probs[size_t(i)] = model.forward(pw.vib, pw.radar).prob();
    }
    return probs;
}

ev::MetricsReport evaluate(const nn::FallModel& model, const std::vector<ds::WindowRecord>& set,
                           const ds::NormStats& stats, double threshold) {
    std::vector<double> probs = predict(model, set, stats);
    std::vector<uint8_t> labels, scenarios;
    labels.reserve(set.size());
    scenarios.reserve(set.size());
    for (const auto& w : set) {
        labels.push_back(w.label);
        scenarios.push_back(w.scenario);
    }
    return ev::compute_metrics(probs, labels, scenarios, threshold);
}

AblationOutcome run_ablation(const nn::AblationToggles& toggles,
                             const std::vector<ds::WindowRecord>& train_set,
                             const std::vector<ds::WindowRecord>& val_set,
                             const std::vector<ds::WindowRecord>& test_set,
                             const TrainConfig& cfg, const std::vector<uint64_t>& seeds) {
    toggles.validate();
    if (seeds.empty()) throw SpecError("run_ablation: no seeds");
    const ds::NormStats stats = ds::compute_stats(train_set);
    AblationOutcome out;
    out.toggles = toggles;
    bool auc_all = true;
    double auc_sum = 0.0;
    for (uint64_t s : seeds) {
        nn::FallModel model;
        model.cfg.toggles = toggles;
        model.build(s);
        TrainConfig c = cfg;
        c.seed = s;
        train(model, train_set, val_set, stats, c);
        ev::MetricsReport rep = evaluate(model, test_set, stats);
        out.accuracy += rep.accuracy;
        out.balanced_accuracy += rep.balanced_accuracy;
        out.macro_f1 += rep.macro_f1;
        out.fall_precision += rep.fall.precision;
        out.fall_recall += rep.fall.recall;
        if (rep.auc) auc_sum += *rep.auc;
        else auc_all = false;
        out.per_seed.push_back(std::move(rep));
    }
    const double n = double(seeds.size());
    out.accuracy /= n;
    out.balanced_accuracy /= n;
    out.macro_f1 /= n;
    out.fall_precision /= n;
    out.fall_recall /= n;
    if (auc_all) out.auc = auc_sum / n;
    return out;
}

std::vector<RobustnessRow> robustness_suite(const nn::FallModel& model,
                                            const std::vector<ds::WindowRecord>& test_set,
                                            const ds::NormStats& stats, uint64_t seed) {
    std::vector<RobustnessRow> rows;
    rows.push_back({"clean", evaluate(model, test_set, stats)});
    auto shifted = ds::perturb_windows(test_set, ds::Perturbation::time_shift_ms, 150.0, seed);
    rows.push_back({"shift_150ms", evaluate(model, shifted, stats)});
    auto rdrop = ds::perturb_windows(test_set, ds::Perturbation::radar_dropout_frac, 0.30,
                                     seed + 1);
    rows.push_back({"radar_dropout_30", evaluate(model, rdrop, stats)});
    auto vdrop = ds::perturb_windows(test_set, ds::Perturbation::vib_dropout_frac, 0.30,
                                     seed + 2);
    rows.push_back({"vib_dropout_30", evaluate(model, vdrop, stats)});
    return rows;
}

LatencyReport latency_bench(const nn::FallModel& model, const synth::Recording& rec,
                            const ds::NormStats& stats, int n_windows) {
    if (n_windows < 50) throw DegenerateInput("latency_bench: needs at least 50 windows");
    using clock = std::chrono::steady_clock;

    // carve raw 2.56 s chunks first so slicing cost stays outside the timers
    const double span = 2.56, hop = 1.28;
    std::vector<SampleSeries> vib_chunks;
    std::vector<RadarFrameSet> radar_chunks;
    const double t_end = rec.vib.t0_s + rec.vib.duration_s();
    for (double t0 = rec.vib.t0_s; t0 + span <= t_end; t0 += hop) {
        int64_t s0 = int64_t(std::llround((t0 - rec.vib.t0_s) * rec.vib.rate_hz));
        int64_t len = int64_t(std::llround(span * rec.vib.rate_hz));
        if (s0 + len > rec.vib.frames()) break;
        SampleSeries chunk(rec.vib.rate_hz, t0, rec.vib.channels);
        chunk.data.assign(rec.vib.data.begin() + s0 * rec.vib.channels,
                          rec.vib.data.begin() + (s0 + len) * rec.vib.channels);
        RadarFrameSet fs;
        for (const auto& f : rec.radar.frames)
            if (f.t_s >= t0 && f.t_s < t0 + span) fs.frames.push_back(f);
        vib_chunks.push_back(std::move(chunk));
        radar_chunks.push_back(std::move(fs));
    }
    if (vib_chunks.empty()) throw DegenerateInput("latency_bench: recording shorter than one window");

    std::vector<double> pre, inf, end;
    for (int i = 0; i < n_windows; ++i) {
        size_t k = size_t(i) % vib_chunks.size();
        auto a = clock::now();
        ds::PreparedWindow pw = ds::prepare_window(vib_chunks[k], radar_chunks[k], stats);
        auto b = clock::now();
        double p;
        {
            NoGradGuard ng;
            p = model.forward(pw.vib, pw.radar).prob();
        }
        auto c = clock::now();
        (void)p;
        double pre_ms = std::chrono::duration<double, std::milli>(b - a).count();
        double inf_ms = std::chrono::duration<double, std::milli>(c - b).count();
        pre.push_back(pre_ms);
        inf.push_back(inf_ms);
        end.push_back(pre_ms + inf_ms);
    }
    auto q = [](std::vector<double> v, double p) {
        return quantile(std::move(v), p);
    };
    LatencyReport r;
    r.pre_ms_median = q(pre, 0.5);
    r.pre_ms_p95 = q(pre, 0.95);
    r.inf_ms_median = q(inf, 0.5);
    r.inf_ms_p95 = q(inf, 0.95);
    r.end_ms_median = q(end, 0.5);
    r.end_ms_p95 = q(end, 0.95);
    r.macs = model.mac_count(ds::kWindowLen);
    r.params = model.param_count();
    r.windows = n_windows;
    return r;
}

}  // namespace falldet::tr
