#include "pinrod/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "pinrod/config_json.hpp"

namespace pinrod {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double metric_mse(const Tensor& pred, const Tensor& truth) {
    if (!same_shape(pred, truth)) {
        throw ContractError("metric_mse: shapes disagree: " + shape_str(pred.shape) + " vs " +
                            shape_str(truth.shape));
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - truth.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double metric_rel_l2(const Tensor& pred, const Tensor& truth) {
    if (!same_shape(pred, truth)) {
        throw ContractError("metric_rel_l2: shapes disagree: " + shape_str(pred.shape) + " vs " +
                            shape_str(truth.shape));
    }
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - truth.data[i];
        num += d * d;
        den += truth.data[i] * truth.data[i];
    }
    den = std::sqrt(den);
    if (den < 1e-12) {
        throw ContractError("metric_rel_l2: |truth| < 1e-12, metric undefined");
    }
    return std::sqrt(num) / den;
}

double time_inference(const std::function<void()>& pipeline, std::int64_t repeats) {
    if (repeats < 1) throw ContractError("time_inference: repeats must be >= 1");
    pipeline();  // warm-up, excluded
    std::vector<double> samples;
    samples.reserve(repeats);
    for (std::int64_t r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        pipeline();
        samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

namespace {

// (steps x N) values of one field from a {T, N, F} block
Tensor block_slice(const Tensor& t, std::int64_t j0, std::int64_t j1, std::int64_t field,
                   std::int64_t N, std::int64_t F) {
    Tensor out = Tensor::zeros({(j1 - j0) * N});
    std::int64_t w = 0;
    for (std::int64_t j = j0; j < j1; ++j) {
        for (std::int64_t i = 0; i < N; ++i) out.data[w++] = t.data[(j * N + i) * F + field];
    }
    return out;
}

struct Accum {
    std::vector<double> mse, rel;
    std::int64_t count = 0;
    void init(std::size_t n) {
        if (mse.empty()) {
            mse.assign(n, 0.0);
            rel.assign(n, 0.0);
        }
    }
};

}  // namespace

EvalResult evaluate(const Dataset& ds, ParamStore& decoder, const SirenConfig& dcfg,
                    ParamStore& pnode, const PnodeConfig& pcfg,
                    ParamStore* ar_params, const PnodeConfig* ar_cfg,
                    const EvalOptions& opts) {
    if (ds.split_test.empty()) throw ContractError("evaluate: dataset has no test trajectories");
    const std::int64_t T = ds.n_times();
    const std::int64_t N = ds.mesh.n_points();
    const std::int64_t F = ds.n_fields();
    const Tensor coordsN = ds.normalized_coords();
    const bool with_ar = ar_params != nullptr && ar_cfg != nullptr;

    EvalResult result;
    result.horizon = T - 1;

    // per (model, step, field) curve accumulators and per (model, field) aggregates
    const std::vector<std::string> models = with_ar
        ? std::vector<std::string>{"pnode", "persistence", "ar"}
        : std::vector<std::string>{"pnode", "persistence"};
    std::vector<Accum> curve_acc(models.size());   // length T*F each
    std::vector<Accum> agg_acc(models.size());     // length F each
    for (auto& a : curve_acc) a.init(static_cast<std::size_t>(T * F));
    for (auto& a : agg_acc) a.init(static_cast<std::size_t>(F));

    for (std::size_t tix = 0; tix < ds.split_test.size(); ++tix) {
        const std::int64_t id = ds.split_test[tix];
        const Tensor& truth = ds.fields[id];
        Tensor u0(Shape{N, F}, std::vector<double>(truth.data.begin(), truth.data.begin() + N * F));

        const Tensor coords0 = ds.normalize_coords(ds.mesh.points);
        const Tensor values0 = normalize_values(u0, ds.stats);
        const std::vector<double> mu_norm = ds.normalized_mu(id);
        const Tensor mu_row = Tensor::row(mu_norm);

        Tensor alpha0 = fit_latent(decoder, dcfg, coords0, values0, opts.fit);
        Tensor lat_traj = integrate(pnode, pcfg, alpha0, mu_row, ds.times);

        std::vector<Tensor> preds;  // indexed like models
        Tensor pred_pnode = denormalize_values(decode_batch(decoder, dcfg, lat_traj, coordsN), ds.stats);
        preds.push_back(std::move(pred_pnode));

        Tensor alpha0_2d(Shape{1, pcfg.latent_dim}, alpha0.data);
        Tensor dec0 = denormalize_values(decode_batch(decoder, dcfg, alpha0_2d, coordsN), ds.stats);
        Tensor pred_persist = Tensor::zeros({T, N, F});
        for (std::int64_t j = 0; j < T; ++j) {
            std::copy(dec0.data.begin(), dec0.data.end(), pred_persist.data.begin() + j * N * F);
        }
        preds.push_back(std::move(pred_persist));

        if (with_ar) {
            Tensor ar_traj = ar_rollout(*ar_params, *ar_cfg, alpha0, mu_row, T - 1);
            preds.push_back(denormalize_values(decode_batch(decoder, dcfg, ar_traj, coordsN), ds.stats));
        }

        for (std::size_t mi = 0; mi < models.size(); ++mi) {
            for (std::int64_t f = 0; f < F; ++f) {
                for (std::int64_t j = 0; j < T; ++j) {
                    Tensor p = block_slice(preds[mi], j, j + 1, f, N, F);
                    Tensor u = block_slice(truth, j, j + 1, f, N, F);
                    curve_acc[mi].mse[j * F + f] += metric_mse(p, u);
                    curve_acc[mi].rel[j * F + f] += metric_rel_l2(p, u);
                }
                Tensor p = block_slice(preds[mi], 1, T, f, N, F);
                Tensor u = block_slice(truth, 1, T, f, N, F);
                agg_acc[mi].mse[f] += metric_mse(p, u);
                agg_acc[mi].rel[f] += metric_rel_l2(p, u);
            }
        }

        if (tix == 0 && opts.timing_repeats > 0) {
            auto pipeline = [&]() {
                Tensor a0 = fit_latent(decoder, dcfg, coords0, values0, opts.fit);
                Tensor lt = integrate(pnode, pcfg, a0, mu_row, ds.times);
                decode_batch(decoder, dcfg, lt, coordsN);
            };
            result.inference_seconds = time_inference(pipeline, opts.timing_repeats);
        }
    }

    const double inv = 1.0 / static_cast<double>(ds.split_test.size());
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        std::vector<FieldMetric>* agg = nullptr;
        if (models[mi] == "pnode") agg = &result.pnode;
        else if (models[mi] == "persistence") agg = &result.persistence;
        else agg = &result.ar;
        for (std::int64_t f = 0; f < F; ++f) {
            agg->push_back({ds.field_names[f], agg_acc[mi].mse[f] * inv, agg_acc[mi].rel[f] * inv});
        }
        for (std::int64_t j = 0; j < T; ++j) {
            for (std::int64_t f = 0; f < F; ++f) {
                result.curve.push_back({j, models[mi], ds.field_names[f],
                                        curve_acc[mi].mse[j * F + f] * inv,
                                        curve_acc[mi].rel[j * F + f] * inv});
            }
        }
    }
    return result;
}

std::vector<CurveRow> error_over_time(const Dataset& ds, ParamStore& decoder,
                                      const SirenConfig& dcfg, ParamStore& pnode,
                                      const PnodeConfig& pcfg, ParamStore* ar_params,
                                      const PnodeConfig* ar_cfg, const LatentFitConfig& fit) {
    EvalOptions opts;
    opts.timing_repeats = 0;
    opts.fit = fit;
    return evaluate(ds, decoder, dcfg, pnode, pcfg, ar_params, ar_cfg, opts).curve;
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "step,model,field,mse,rel_l2\n";
    char buf[160];
    for (const auto& row : curve) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%.17g,%.17g\n",
                      static_cast<long long>(row.step), row.model.c_str(), row.field.c_str(),
                      row.mse, row.rel_l2);
        f << buf;
    }
    if (!f.good()) throw IoError("failed writing " + path);
}

void write_report_json(const std::string& path, const EvalResult& result, const ReportMeta& meta) {
    json j;
    j["aggregation"] =
        "per-trajectory metrics over forecast steps 1..T-1 in physical units, "
        "averaged over test trajectories; curve step 0 is the auto-decoding "
        "reconstruction of the initial state";
    auto fields_json = [](const std::vector<FieldMetric>& v) {
        json arr = json::array();
        for (const auto& m : v) arr.push_back({{"field", m.field}, {"mse", m.mse}, {"rel_l2", m.rel_l2}});
        return arr;
    };
    j["pnode"] = fields_json(result.pnode);
    j["persistence"] = fields_json(result.persistence);
    if (!result.ar.empty()) j["ar"] = fields_json(result.ar);
    j["horizon"] = result.horizon;
    j["inference_seconds_per_trajectory"] = result.inference_seconds;
    j["dataset_dir"] = meta.dataset_dir;
    j["dataset_hash"] = meta.dataset_hash;
    j["decoder_hash"] = meta.decoder_hash;
    j["pnode_hash"] = meta.pnode_hash;
    if (!meta.ar_hash.empty()) j["ar_hash"] = meta.ar_hash;
    if (!meta.config_json.empty()) j["config"] = json::parse(meta.config_json);
    j["version"] = meta.version;

    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << j.dump(2) << "\n";
    if (!f.good()) throw IoError("failed writing " + path);
}

}  // namespace pinrod
