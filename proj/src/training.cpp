#include "pinrod/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "pinrod/config_json.hpp"
#include "pinrod/metrics.hpp"
#include "pinrod/rng.hpp"

namespace pinrod {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string latent_path(std::int64_t traj, std::int64_t snap) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "lat/t%04lld/s%04lld",
                  static_cast<long long>(traj), static_cast<long long>(snap));
    return buf;
}

std::vector<std::int64_t> sample_indices(Rng& rng, std::int64_t n, std::int64_t want) {
    std::vector<std::int64_t> idx(n);
    for (std::int64_t i = 0; i < n; ++i) idx[i] = i;
    if (want >= n) return idx;
    // partial Fisher-Yates
    for (std::int64_t i = 0; i < want; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(want);
    return idx;
}

Tensor gather_rows(const Tensor& src, const std::vector<std::int64_t>& rows) {
    const std::int64_t c = src.cols();
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(rows.size()), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(src.data.begin() + rows[i] * c, src.data.begin() + (rows[i] + 1) * c,
                  out.data.begin() + static_cast<std::int64_t>(i) * c);
    }
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (decoder_lr <= 0 || latent_lr <= 0 || pnode_lr <= 0 || ar_lr <= 0) {
        throw ContractError("train config: learning rates must be > 0");
    }
    if (window < 2) throw ContractError("train config: window must be >= 2");
    if (stage1_epochs < 0 || stage2_epochs < 0 || finetune_epochs < 0 || ar_epochs < 0) {
        throw ContractError("train config: epoch counts must be >= 0");
    }
    if (coord_batch < 1 || snapshot_batch < 1 || rollout_batch < 1) {
        throw ContractError("train config: batch sizes must be >= 1");
    }
}

Tensor LatentTable::row_tensor(std::int64_t traj, std::int64_t time_idx) const {
    const double* r = row(traj, time_idx);
    return Tensor(Shape{1, latent_dim}, std::vector<double>(r, r + latent_dim));
}

std::uint64_t LatentTable::checksum() const {
    return fnv1a64(codes.data(), codes.size() * sizeof(double));
}

void LatentTable::save(const std::string& prefix) const {
    ParamStore store;
    Tensor all(Shape{n_traj, n_times, latent_dim}, codes);
    store.add("latents", std::move(all));
    json header;
    header["kind"] = "latents";
    header["n_traj"] = n_traj;
    header["n_times"] = n_times;
    header["latent_dim"] = latent_dim;
    header["times"] = times;
    header["traj_ids"] = traj_ids;
    store.save(prefix + ".json", prefix + ".bin", header.dump());
}

LatentTable LatentTable::load(const std::string& prefix) {
    auto [store, header_str] = ParamStore::load(prefix + ".json", prefix + ".bin");
    if (header_str.empty()) throw IoError("latent table " + prefix + " has no header");
    json header = json::parse(header_str);
    if (header.value("kind", "") != "latents") {
        throw IoError(prefix + " is not a latent table checkpoint");
    }
    LatentTable t;
    t.n_traj = header.at("n_traj").get<std::int64_t>();
    t.n_times = header.at("n_times").get<std::int64_t>();
    t.latent_dim = header.at("latent_dim").get<std::int64_t>();
    t.times = header.at("times").get<std::vector<double>>();
    t.traj_ids = header.at("traj_ids").get<std::vector<std::int64_t>>();
    const Tensor& all = store.at("latents");
    if (all.size() != t.n_traj * t.n_times * t.latent_dim) {
        throw IoError("latent table " + prefix + ": size mismatch");
    }
    t.codes = all.data;
    return t;
}

void write_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    for (const auto& e : log) {
        json j{{"stage", e.stage}, {"epoch", e.epoch}, {"loss", e.loss}, {"wall_ms", e.wall_ms}};
        f << j.dump() << "\n";
    }
    if (!f.good()) throw IoError("failed writing " + path);
}

PretrainResult pretrain(const Dataset& ds, const SirenConfig& cfg, const TrainConfig& tc) {
    cfg.validate();
    tc.validate();
    if (ds.split_train.empty()) throw ContractError("pretrain: dataset has no training trajectories");
    if (ds.n_times() < 1) throw ContractError("pretrain: dataset has no snapshots");
    if (cfg.in_dim != ds.mesh.in_dim()) throw ContractError("pretrain: decoder in_dim != mesh dimension");
    if (cfg.out_dim != ds.n_fields()) throw ContractError("pretrain: decoder out_dim != field count");

    const std::int64_t n_traj = static_cast<std::int64_t>(ds.split_train.size());
    const std::int64_t T = ds.n_times();
    const std::int64_t N = ds.mesh.n_points();
    const std::int64_t F = ds.n_fields();
    const std::int64_t k = cfg.latent_dim;

    PretrainResult result;
    result.decoder = init_decoder(cfg, derive_seed(tc.seed, "decoder"));

    ParamStore latent_store;
    for (std::int64_t ti = 0; ti < n_traj; ++ti) {
        for (std::int64_t si = 0; si < T; ++si) {
            latent_store.add(latent_path(ti, si), Tensor::zeros({1, k}));
        }
    }

    const Tensor coords = ds.normalized_coords();
    std::vector<Tensor> targets;  // (ti * T + si) -> N x F normalized
    targets.reserve(n_traj * T);
    for (std::int64_t ti = 0; ti < n_traj; ++ti) {
        for (std::int64_t si = 0; si < T; ++si) {
            targets.push_back(ds.normalized_snapshot(ds.split_train[ti], si));
        }
    }

    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    for (std::int64_t ti = 0; ti < n_traj; ++ti)
        for (std::int64_t si = 0; si < T; ++si) pairs.emplace_back(ti, si);

    Rng rng(derive_seed(tc.seed, "stage1"));
    AdamState dec_state, lat_state;

    for (std::int64_t epoch = 0; epoch < tc.stage1_epochs; ++epoch) {
        const auto t0 = Clock::now();
        rng.shuffle(pairs);
        double loss_sum = 0.0;
        std::int64_t steps = 0;
        for (std::size_t base = 0; base < pairs.size(); base += tc.snapshot_batch) {
            const std::size_t count = std::min<std::size_t>(tc.snapshot_batch, pairs.size() - base);
            const auto cidx = sample_indices(rng, N, tc.coord_batch);
            const auto C = static_cast<std::int64_t>(cidx.size());
            Tensor coords_sub = gather_rows(coords, cidx);

            Tensor target_st = Tensor::zeros({static_cast<std::int64_t>(count) * C, F});
            for (std::size_t s = 0; s < count; ++s) {
                const auto& [ti, si] = pairs[base + s];
                const Tensor& snap = targets[ti * T + si];
                for (std::int64_t c = 0; c < C; ++c) {
                    for (std::int64_t f = 0; f < F; ++f) {
                        target_st.data[(static_cast<std::int64_t>(s) * C + c) * F + f] =
                            snap.data[cidx[c] * F + f];
                    }
                }
            }

            Tape tape;
            std::vector<Var> lat_vars;
            std::vector<std::string> batch_paths;
            lat_vars.reserve(count);
            for (std::size_t s = 0; s < count; ++s) {
                const auto& [ti, si] = pairs[base + s];
                batch_paths.push_back(latent_path(ti, si));
                lat_vars.push_back(tape.leaf(latent_store.at(batch_paths.back())));
            }
            Var lats = count == 1 ? lat_vars[0] : tape.stack_rows(lat_vars);
            Var out = decode_on_tape(tape, result.decoder, cfg, lats, coords_sub);
            Var loss = tape.mse(out, tape.constant(std::move(target_st)));
            if (tc.latent_l2 > 0.0) {
                Var reg = tape.scale(tape.sum(tape.mul(lats, lats)),
                                     tc.latent_l2 / static_cast<double>(count));
                loss = tape.add(loss, reg);
            }
            const double lv = tape.val(loss).data[0];
            if (!std::isfinite(lv)) {
                throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch));
            }
            tape.backward(loss);

            adam_step(result.decoder, dec_state, tc.decoder_lr);
            ParamStore batch_latents = latent_store.subset(batch_paths);
            adam_step(batch_latents, lat_state, tc.latent_lr);

            loss_sum += lv;
            ++steps;
        }
        result.log.push_back({"stage1", epoch, loss_sum / static_cast<double>(steps), ms_since(t0)});
    }

    result.latents.n_traj = n_traj;
    result.latents.n_times = T;
    result.latents.latent_dim = k;
    result.latents.times = ds.times;
    result.latents.traj_ids = ds.split_train;
    result.latents.codes.resize(n_traj * T * k);
    for (std::int64_t ti = 0; ti < n_traj; ++ti) {
        for (std::int64_t si = 0; si < T; ++si) {
            const Tensor& code = latent_store.at(latent_path(ti, si));
            std::copy(code.data.begin(), code.data.end(),
                      result.latents.codes.begin() + (ti * T + si) * k);
        }
    }

    // final training reconstruction error, physical units
    double rel_sum = 0.0;
    for (std::int64_t ti = 0; ti < n_traj; ++ti) {
        Tensor codes(Shape{T, k},
                     std::vector<double>(result.latents.codes.begin() + ti * T * k,
                                         result.latents.codes.begin() + (ti + 1) * T * k));
        Tensor pred = decode_batch(result.decoder, cfg, codes, coords);  // T x N x F normalized
        pred = denormalize_values(pred, ds.stats);
        const Tensor& truth = ds.fields[ds.split_train[ti]];
        for (std::int64_t si = 0; si < T; ++si) {
            Tensor p(Shape{N, F}, std::vector<double>(pred.data.begin() + si * N * F,
                                                      pred.data.begin() + (si + 1) * N * F));
            Tensor u(Shape{N, F}, std::vector<double>(truth.data.begin() + si * N * F,
                                                      truth.data.begin() + (si + 1) * N * F));
            rel_sum += metric_rel_l2(p, u);
        }
    }
    result.train_rel_l2 = rel_sum / static_cast<double>(n_traj * T);
    return result;
}

namespace {

struct LatentTargets {
    // per window start: alpha0 rows and target rows for each later snapshot
    Tensor mu_rows;  // B x d
    std::vector<Tensor> rows_at;  // per snapshot index: B x k
};

LatentTargets latent_rows(const LatentTable& lat, const Tensor& mus) {
    LatentTargets t;
    t.mu_rows = mus;
    t.rows_at.reserve(lat.n_times);
    for (std::int64_t si = 0; si < lat.n_times; ++si) {
        Tensor rows = Tensor::zeros({lat.n_traj, lat.latent_dim});
        for (std::int64_t ti = 0; ti < lat.n_traj; ++ti) {
            std::copy(lat.row(ti, si), lat.row(ti, si) + lat.latent_dim,
                      rows.data.begin() + ti * lat.latent_dim);
        }
        t.rows_at.push_back(std::move(rows));
    }
    return t;
}

}  // namespace

PnodeTrainResult train_pnode(const LatentTable& lat, const Tensor& mus,
                             const PnodeConfig& pcfg, const TrainConfig& tc) {
    pcfg.validate();
    tc.validate();
    if (lat.n_traj < 1 || lat.n_times < 2) throw ContractError("train_pnode: need >= 1 trajectory and >= 2 snapshots");
    if (lat.latent_dim != pcfg.latent_dim) throw ContractError("train_pnode: latent_dim mismatch");
    if (mus.rows() != lat.n_traj || mus.cols() != pcfg.mu_dim) {
        throw ContractError("train_pnode: mu table must be n_traj x mu_dim");
    }

    PnodeTrainResult result;
    result.params = init_pnode(pcfg, derive_seed(tc.seed, "pnode"));

    const std::int64_t T = lat.n_times;
    const std::int64_t w = std::min<std::int64_t>(tc.window, T);
    LatentTargets targets = latent_rows(lat, mus);
    Rng rng(derive_seed(tc.seed, "stage2"));
    AdamState state;

    // Windowed phase: one batch per window start, all trajectories as rows.
    std::vector<std::int64_t> starts;
    for (std::int64_t s = 0; s + w <= T; ++s) starts.push_back(s);

    auto run_rollout_batch = [&](std::int64_t start, std::int64_t len,
                                 const std::vector<std::int64_t>& traj_rows, double lr) {
        Tape tape;
        const auto B = static_cast<std::int64_t>(traj_rows.size());
        PnodeBinding bind = bind_pnode(tape, result.params, pcfg, B);
        Var mu = tape.constant(gather_rows(targets.mu_rows, traj_rows));
        Var e = embed_on_tape(tape, bind, mu);
        Var alpha0 = tape.constant(gather_rows(targets.rows_at[start], traj_rows));
        std::vector<double> times(lat.times.begin() + start, lat.times.begin() + start + len);
        auto f = [&](Tape& tp, Var a) { return dynamics_on_tape(tp, bind, a, e); };
        auto states = integrate_on_tape(tape, f, alpha0, times, pcfg.substeps);

        Var loss = -1;
        for (std::int64_t j = 1; j < len; ++j) {
            Var target = tape.constant(gather_rows(targets.rows_at[start + j], traj_rows));
            Var term = tape.mse(states[j], target);
            loss = (loss < 0) ? term : tape.add(loss, term);
        }
        loss = tape.scale(loss, 1.0 / static_cast<double>(len - 1));
        const double lv = tape.val(loss).data[0];
        if (!std::isfinite(lv)) throw NumericError("train_pnode: non-finite loss");
        tape.backward(loss);
        adam_step(result.params, state, lr);
        return lv;
    };

    std::vector<std::int64_t> all_traj(lat.n_traj);
    for (std::int64_t i = 0; i < lat.n_traj; ++i) all_traj[i] = i;

    for (std::int64_t epoch = 0; epoch < tc.stage2_epochs; ++epoch) {
        const auto t0 = Clock::now();
        rng.shuffle(starts);
        double loss_sum = 0.0;
        for (auto s : starts) loss_sum += run_rollout_batch(s, w, all_traj, tc.pnode_lr);
        result.log.push_back({"stage2_window", epoch,
                              loss_sum / static_cast<double>(starts.size()), ms_since(t0)});
    }

    // Full-rollout fine-tune from t = 0, matching the inference regime.
    for (std::int64_t epoch = 0; epoch < tc.finetune_epochs; ++epoch) {
        const auto t0 = Clock::now();
        rng.shuffle(all_traj);
        double loss_sum = 0.0;
        std::int64_t batches = 0;
        for (std::size_t base = 0; base < all_traj.size(); base += tc.rollout_batch) {
            const std::size_t count = std::min<std::size_t>(tc.rollout_batch, all_traj.size() - base);
            std::vector<std::int64_t> rows(all_traj.begin() + base, all_traj.begin() + base + count);
            loss_sum += run_rollout_batch(0, T, rows, tc.pnode_lr);
            ++batches;
        }
        result.log.push_back({"stage2_rollout", epoch,
                              loss_sum / static_cast<double>(batches), ms_since(t0)});
    }
    return result;
}

PnodeTrainResult train_ar_baseline(const LatentTable& lat, const Tensor& mus,
                                   const PnodeConfig& pcfg, const TrainConfig& tc) {
    pcfg.validate();
    tc.validate();
    if (lat.n_traj < 1 || lat.n_times < 2) throw ContractError("train_ar_baseline: need >= 1 trajectory and >= 2 snapshots");
    if (lat.latent_dim != pcfg.latent_dim) throw ContractError("train_ar_baseline: latent_dim mismatch");

    PnodeTrainResult result;
    result.params = init_ar_baseline(pcfg, derive_seed(tc.seed, "ar"));

    LatentTargets targets = latent_rows(lat, mus);
    Rng rng(derive_seed(tc.seed, "ar_train"));
    AdamState state;

    std::vector<std::int64_t> starts;
    for (std::int64_t s = 0; s + 1 < lat.n_times; ++s) starts.push_back(s);
    std::vector<std::int64_t> all_traj(lat.n_traj);
    for (std::int64_t i = 0; i < lat.n_traj; ++i) all_traj[i] = i;

    for (std::int64_t epoch = 0; epoch < tc.ar_epochs; ++epoch) {
        const auto t0 = Clock::now();
        rng.shuffle(starts);
        double loss_sum = 0.0;
        for (auto s : starts) {
            Tape tape;
            PnodeBinding bind = bind_pnode(tape, result.params, pcfg, lat.n_traj);
            Var mu = tape.constant(targets.mu_rows);
            Var e = embed_on_tape(tape, bind, mu);
            Var a = tape.constant(targets.rows_at[s]);
            Var pred = ar_step_on_tape(tape, bind, a, e);
            Var loss = tape.mse(pred, tape.constant(targets.rows_at[s + 1]));
            const double lv = tape.val(loss).data[0];
            if (!std::isfinite(lv)) throw NumericError("train_ar_baseline: non-finite loss");
            tape.backward(loss);
            adam_step(result.params, state, tc.ar_lr);
            loss_sum += lv;
        }
        result.log.push_back({"ar", epoch, loss_sum / static_cast<double>(starts.size()),
                              ms_since(t0)});
    }
    return result;
}

Tensor fit_latent(ParamStore& decoder, const SirenConfig& cfg, const Tensor& coords_norm,
                  const Tensor& values_norm, const LatentFitConfig& fc) {
    cfg.validate();
    if (fc.steps < 0) throw ContractError("fit_latent: steps must be >= 0");
    if (!(fc.lr > 0)) throw ContractError("fit_latent: lr must be > 0");

    Tensor alpha = Tensor::zeros({1, cfg.latent_dim});
    alpha.requires_grad = true;

    std::vector<double> best = alpha.data;
    double best_loss = std::numeric_limits<double>::infinity();
    double init_loss = 0.0;

    ParamStore alpha_store;
    Tensor& a = alpha_store.add("alpha", std::move(alpha));
    AdamState state;

    auto eval_loss = [&](bool with_grad) {
        Tape tape;
        Var av = tape.leaf(a);
        Var out = decode_on_tape(tape, decoder, cfg, av, coords_norm);
        Var loss = tape.mse(out, tape.constant(values_norm));
        if (fc.l2 > 0.0) loss = tape.add(loss, tape.scale(tape.sum(tape.mul(av, av)), fc.l2));
        const double lv = tape.val(loss).data[0];
        if (with_grad) tape.backward(loss);
        return lv;
    };

    for (std::int64_t step = 0; step < fc.steps; ++step) {
        const double lv = eval_loss(true);
        if (step == 0) init_loss = lv;
        if (!std::isfinite(lv) || lv > 10.0 * std::max(init_loss, 1e-300)) {
            throw NumericError("fit_latent: diverged at step " + std::to_string(step) +
                               " (loss " + std::to_string(lv) + ", init " +
                               std::to_string(init_loss) + ")");
        }
        if (lv < best_loss) {
            best_loss = lv;
            best = a.data;
        }
        adam_step(alpha_store, state, fc.lr);
    }
    if (fc.steps > 0) {
        const double lv = eval_loss(false);
        if (std::isfinite(lv) && lv < best_loss) best = a.data;
    }
    return Tensor(Shape{cfg.latent_dim}, std::move(best));
}

Tensor forecast(const Dataset& ds, ParamStore& decoder, const SirenConfig& dcfg,
                ParamStore& pnode, const PnodeConfig& pcfg,
                const Tensor& u0_coords_phys, const Tensor& u0_values_phys,
                const std::vector<double>& mu_phys,
                const std::vector<double>& query_times_norm,
                const Tensor& query_coords_phys, const LatentFitConfig& fc) {
    if (query_times_norm.empty()) throw ContractError("forecast: no query times");
    for (std::size_t j = 0; j < query_times_norm.size(); ++j) {
        if (query_times_norm[j] < 0.0) throw ContractError("forecast: query times must be >= 0");
        if (j > 0 && !(query_times_norm[j] > query_times_norm[j - 1])) {
            throw ContractError("forecast: query times must be strictly increasing");
        }
    }

    const Tensor coords0 = ds.normalize_coords(u0_coords_phys);
    const Tensor values0 = normalize_values(u0_values_phys, ds.stats);
    Tensor alpha0 = fit_latent(decoder, dcfg, coords0, values0, fc);

    std::vector<double> mu_norm = ds.normalize_mu_row(mu_phys);
    Tensor mu_row = Tensor::row(mu_norm);

    std::vector<double> times_full = query_times_norm;
    bool prepended = false;
    if (times_full.front() > 0.0) {
        times_full.insert(times_full.begin(), 0.0);
        prepended = true;
    }
    Tensor traj = integrate(pnode, pcfg, alpha0, mu_row, times_full);

    const auto Tq = static_cast<std::int64_t>(query_times_norm.size());
    Tensor lat_rows = Tensor::zeros({Tq, pcfg.latent_dim});
    const std::int64_t skip = prepended ? 1 : 0;
    std::copy(traj.data.begin() + skip * pcfg.latent_dim, traj.data.end(), lat_rows.data.begin());

    Tensor pred = decode_batch(decoder, dcfg, lat_rows, ds.normalize_coords(query_coords_phys));
    return denormalize_values(pred, ds.stats);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"stage1_epochs", c.stage1_epochs}, {"decoder_lr", c.decoder_lr},
             {"latent_lr", c.latent_lr},         {"coord_batch", c.coord_batch},
             {"snapshot_batch", c.snapshot_batch}, {"latent_l2", c.latent_l2},
             {"stage2_epochs", c.stage2_epochs}, {"pnode_lr", c.pnode_lr},
             {"window", c.window},               {"finetune_epochs", c.finetune_epochs},
             {"rollout_batch", c.rollout_batch}, {"ar_epochs", c.ar_epochs},
             {"ar_lr", c.ar_lr},                 {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.decoder_lr = j.value("decoder_lr", c.decoder_lr);
    c.latent_lr = j.value("latent_lr", c.latent_lr);
    c.coord_batch = j.value("coord_batch", c.coord_batch);
    c.snapshot_batch = j.value("snapshot_batch", c.snapshot_batch);
    c.latent_l2 = j.value("latent_l2", c.latent_l2);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.pnode_lr = j.value("pnode_lr", c.pnode_lr);
    c.window = j.value("window", c.window);
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.rollout_batch = j.value("rollout_batch", c.rollout_batch);
    c.ar_epochs = j.value("ar_epochs", c.ar_epochs);
    c.ar_lr = j.value("ar_lr", c.ar_lr);
    c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const LatentFitConfig& c) {
    j = json{{"steps", c.steps}, {"lr", c.lr}, {"l2", c.l2}};
}

void from_json(const json& j, LatentFitConfig& c) {
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.l2 = j.value("l2", c.l2);
}

}  // namespace pinrod
