// Command-line surface: dataset generation, two-stage training, forecasting,
// evaluation and gradient checking, all driven by a JSON config overridable
// with flags. Every output directory gets a run manifest for reproducibility.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "pinrod/config_json.hpp"
#include "pinrod/dataset_io.hpp"
#include "pinrod/grad_check.hpp"
#include "pinrod/metrics.hpp"
#include "pinrod/rng.hpp"
#include "pinrod/training.hpp"
#include "pinrod/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pinrod;

namespace {

struct AppConfig {
    GeneratorConfig dataset;
    SirenConfig decoder;
    PnodeConfig pnode;
    TrainConfig train;
    LatentFitConfig fit;
};

AppConfig load_app_config(const std::string& path) {
    AppConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw IoError("invalid config file " + path + ": " + e.what());
    }
    if (j.contains("dataset")) cfg.dataset = j["dataset"].get<GeneratorConfig>();
    if (j.contains("decoder")) cfg.decoder = j["decoder"].get<SirenConfig>();
    if (j.contains("pnode")) cfg.pnode = j["pnode"].get<PnodeConfig>();
    if (j.contains("train")) cfg.train = j["train"].get<TrainConfig>();
    if (j.contains("fit_latent")) cfg.fit = j["fit_latent"].get<LatentFitConfig>();
    return cfg;
}

json config_echo(const AppConfig& cfg) {
    return json{{"dataset", cfg.dataset}, {"decoder", cfg.decoder}, {"pnode", cfg.pnode},
                {"train", cfg.train},     {"fit_latent", cfg.fit}};
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const AppConfig& cfg, const json& inputs, const json& outputs) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = cfg.train.seed;
    m["dataset_seed"] = cfg.dataset.seed;
    m["config"] = config_echo(cfg);
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    std::ofstream f(fs::path(out_dir) / "run_manifest.json");
    if (!f) throw IoError("cannot write run manifest in " + out_dir);
    f << m.dump(2) << "\n";
}

std::vector<double> parse_csv_doubles(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        out.push_back(std::stod(s.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

int cmd_gen_data(const AppConfig& cfg, const std::string& out) {
    Dataset ds = generate_dataset(cfg.dataset);
    fs::create_directories(out);
    save_dataset(out, ds);
    AppConfig resolved = cfg;
    resolved.dataset = ds.config;
    write_run_manifest(out, "gen-data", resolved, json::object(),
                       json{{"dataset", out}, {"content_hash", dataset_content_hash(out)}});
    std::cout << "wrote dataset to " << out << "\n" << manifest_summary(out);
    return 0;
}

int cmd_pretrain(const AppConfig& cfg, const std::string& dataset_dir, const std::string& out) {
    Dataset ds = load_dataset(dataset_dir);
    SirenConfig dcfg = cfg.decoder;
    dcfg.in_dim = ds.mesh.in_dim();
    dcfg.out_dim = ds.n_fields();

    PretrainResult r = pretrain(ds, dcfg, cfg.train);
    fs::create_directories(out);
    save_decoder((fs::path(out) / "decoder").string(), r.decoder, dcfg);
    r.latents.save((fs::path(out) / "latents").string());
    write_train_log((fs::path(out) / "train_log.jsonl").string(), r.log);
    write_run_manifest(out, "pretrain", cfg,
                       json{{"dataset", dataset_dir}, {"dataset_hash", dataset_content_hash(dataset_dir)}},
                       json{{"decoder", "decoder.{json,bin}"}, {"latents", "latents.{json,bin}"},
                            {"train_rel_l2", r.train_rel_l2}});
    if (!r.log.empty()) {
        std::cout << "stage1 final loss " << r.log.back().loss << "\n";
    }
    std::cout << "train reconstruction rel_l2 " << r.train_rel_l2 << "\n";
    return 0;
}

Tensor normalized_mu_rows(const Dataset& ds, const LatentTable& lat) {
    Tensor mus = Tensor::zeros({lat.n_traj, static_cast<std::int64_t>(ds.stats.mu_min.size())});
    for (std::int64_t i = 0; i < lat.n_traj; ++i) {
        const auto row = ds.normalized_mu(lat.traj_ids[i]);
        std::copy(row.begin(), row.end(), mus.data.begin() + i * mus.cols());
    }
    return mus;
}

int cmd_train_dynamics(const AppConfig& cfg, const std::string& dataset_dir,
                       const std::string& stage1_dir, const std::string& out, bool ar) {
    Dataset ds = load_dataset(dataset_dir);
    LatentTable lat = LatentTable::load((fs::path(stage1_dir) / "latents").string());
    PnodeConfig pcfg = cfg.pnode;
    pcfg.latent_dim = lat.latent_dim;
    pcfg.mu_dim = static_cast<std::int64_t>(ds.stats.mu_min.size());
    Tensor mus = normalized_mu_rows(ds, lat);

    PnodeTrainResult r = ar ? train_ar_baseline(lat, mus, pcfg, cfg.train)
                            : train_pnode(lat, mus, pcfg, cfg.train);
    fs::create_directories(out);
    const std::string kind = ar ? "ar" : "pnode";
    save_pnode((fs::path(out) / kind).string(), r.params, pcfg, kind);
    write_train_log((fs::path(out) / (kind + "_train_log.jsonl")).string(), r.log);
    write_run_manifest(out, ar ? "train-ar-baseline" : "train-dynamics", cfg,
                       json{{"dataset", dataset_dir},
                            {"dataset_hash", dataset_content_hash(dataset_dir)},
                            {"latents", stage1_dir}},
                       json{{kind, kind + ".{json,bin}"}});
    if (!r.log.empty()) std::cout << kind << " final loss " << r.log.back().loss << "\n";
    return 0;
}

int cmd_forecast(const AppConfig& cfg, const std::string& dataset_dir,
                 const std::string& decoder_prefix, const std::string& pnode_prefix,
                 const std::string& out, std::int64_t traj, const std::string& times_str,
                 const std::string& mu_str) {
    Dataset ds = load_dataset(dataset_dir);
    auto [dec, dcfg] = load_decoder(decoder_prefix);
    auto [pn, pcfg] = load_pnode(pnode_prefix);

    if (traj < 0) traj = ds.split_test.empty() ? 0 : ds.split_test.front();
    if (traj >= ds.n_traj()) throw ContractError("forecast: trajectory id out of range");

    const std::int64_t N = ds.mesh.n_points(), F = ds.n_fields();
    Tensor u0(Shape{N, F}, std::vector<double>(ds.fields[traj].data.begin(),
                                               ds.fields[traj].data.begin() + N * F));
    std::vector<double> mu(ds.mu.cols());
    for (std::int64_t k = 0; k < ds.mu.cols(); ++k) mu[k] = ds.mu.at(traj, k);
    if (!mu_str.empty()) {
        mu = parse_csv_doubles(mu_str);
        if (mu.size() != static_cast<std::size_t>(ds.mu.cols())) {
            throw ContractError("forecast: --mu needs " + std::to_string(ds.mu.cols()) + " values");
        }
    }
    std::vector<double> times = times_str.empty() ? ds.times : parse_csv_doubles(times_str);

    Tensor pred = forecast(ds, dec, dcfg, pn, pcfg, ds.mesh.points, u0, mu, times,
                           ds.mesh.points, cfg.fit);

    fs::create_directories(out);
    {
        std::ofstream f(fs::path(out) / "forecast.bin", std::ios::binary);
        if (!f) throw IoError("cannot write forecast.bin");
        f.write(reinterpret_cast<const char*>(pred.data.data()),
                static_cast<std::streamsize>(pred.data.size() * sizeof(double)));
    }
    json info{{"trajectory", traj}, {"mu", mu}, {"times", times},
              {"shape", pred.shape}, {"file", "forecast.bin"}};
    std::ofstream jf(fs::path(out) / "forecast.json");
    jf << info.dump(2) << "\n";
    write_run_manifest(out, "forecast", cfg,
                       json{{"dataset", dataset_dir},
                            {"dataset_hash", dataset_content_hash(dataset_dir)},
                            {"decoder_hash", file_hash(decoder_prefix + ".bin")},
                            {"pnode_hash", file_hash(pnode_prefix + ".bin")}},
                       info);
    std::cout << "forecast " << shape_str(pred.shape) << " written to " << out << "\n";
    return 0;
}

int cmd_eval(const AppConfig& cfg, const std::string& dataset_dir,
             const std::string& decoder_prefix, const std::string& pnode_prefix,
             const std::string& ar_prefix, const std::string& out, std::int64_t repeats) {
    Dataset ds = load_dataset(dataset_dir);
    auto [dec, dcfg] = load_decoder(decoder_prefix);
    auto [pn, pcfg] = load_pnode(pnode_prefix);

    ParamStore ar_store;
    PnodeConfig ar_cfg;
    bool with_ar = !ar_prefix.empty();
    if (with_ar) {
        auto loaded = load_pnode(ar_prefix, "ar");
        ar_store = std::move(loaded.first);
        ar_cfg = loaded.second;
    }

    EvalOptions opts;
    opts.fit = cfg.fit;
    opts.timing_repeats = repeats;
    EvalResult r = evaluate(ds, dec, dcfg, pn, pcfg, with_ar ? &ar_store : nullptr,
                            with_ar ? &ar_cfg : nullptr, opts);

    fs::create_directories(out);
    ReportMeta meta;
    meta.dataset_dir = dataset_dir;
    meta.dataset_hash = dataset_content_hash(dataset_dir);
    meta.decoder_hash = file_hash(decoder_prefix + ".bin");
    meta.pnode_hash = file_hash(pnode_prefix + ".bin");
    if (with_ar) meta.ar_hash = file_hash(ar_prefix + ".bin");
    meta.config_json = config_echo(cfg).dump();
    meta.version = kVersion;
    write_report_json((fs::path(out) / "report.json").string(), r, meta);
    write_curve_csv((fs::path(out) / "curve.csv").string(), r.curve);
    write_run_manifest(out, "eval", cfg,
                       json{{"dataset", dataset_dir}, {"dataset_hash", meta.dataset_hash},
                            {"decoder_hash", meta.decoder_hash}, {"pnode_hash", meta.pnode_hash}},
                       json{{"report", "report.json"}, {"curve", "curve.csv"}});

    for (const auto& m : r.pnode) {
        std::cout << "pnode       " << m.field << ": mse " << m.mse << "  rel_l2 " << m.rel_l2 << "\n";
    }
    for (const auto& m : r.persistence) {
        std::cout << "persistence " << m.field << ": mse " << m.mse << "  rel_l2 " << m.rel_l2 << "\n";
    }
    for (const auto& m : r.ar) {
        std::cout << "ar          " << m.field << ": mse " << m.mse << "  rel_l2 " << m.rel_l2 << "\n";
    }
    if (r.inference_seconds > 0) {
        std::cout << "inference seconds/trajectory: " << r.inference_seconds << "\n";
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    // decode loss w.r.t. decoder parameters and latent
    SirenConfig dcfg;
    dcfg.in_dim = 2;
    dcfg.out_dim = 2;
    dcfg.width = 16;
    dcfg.depth = 3;
    dcfg.latent_dim = 6;
    ParamStore dec = init_decoder(dcfg, derive_seed(seed, "dec"));
    Rng rng(derive_seed(seed, "data"));
    for (auto& [path, t] : dec) {
        if (path.find("Wmod") != std::string::npos) {
            for (auto& x : t->data) x = rng.uniform(-0.3, 0.3);
        }
    }
    Tensor coords = Tensor::zeros({8, 2});
    for (auto& x : coords.data) x = rng.uniform(-1.0, 1.0);
    Tensor target = Tensor::zeros({8, 2});
    for (auto& x : target.data) x = rng.uniform(-1.0, 1.0);
    Tensor latent = Tensor::zeros({1, 6});
    for (auto& x : latent.data) x = rng.uniform(-0.5, 0.5);
    latent.requires_grad = true;

    ParamStore checked = dec.subset(dec.paths());
    checked.add("latent", latent);
    auto decode_loss = [&](Tape& tape) {
        Var lat = tape.leaf(checked.at("latent"));
        Var out = decode_on_tape(tape, dec, dcfg, lat, coords);
        return tape.mse(out, tape.constant(target));
    };
    GradCheckReport r1 = grad_check(decode_loss, checked, 1e-5, 1e-4);
    std::cout << "decode loss:  " << (r1.pass ? "PASS" : "FAIL")
              << " (max rel err " << r1.max_rel_err << ")\n";

    // rollout loss w.r.t. dynamics parameters, alpha0 and mu
    PnodeConfig pcfg;
    pcfg.latent_dim = 5;
    pcfg.mu_dim = 2;
    pcfg.embed_width = 8;
    pcfg.embed_dim = 4;
    pcfg.dyn_width = 12;
    pcfg.dyn_depth = 3;
    pcfg.substeps = 2;
    ParamStore pn = init_pnode(pcfg, derive_seed(seed, "pnode"));
    for (auto& x : pn.at("dyn/l2/W").data) x = rng.uniform(-0.4, 0.4);
    for (auto& x : pn.at("dyn/l2/b").data) x = rng.uniform(-0.1, 0.1);

    Tensor alpha0 = Tensor::zeros({1, 5});
    for (auto& x : alpha0.data) x = rng.uniform(-1.0, 1.0);
    alpha0.requires_grad = true;
    Tensor mu = Tensor::zeros({1, 2});
    for (auto& x : mu.data) x = rng.uniform(-1.0, 1.0);
    mu.requires_grad = true;
    Tensor targets = Tensor::zeros({3, 5});
    for (auto& x : targets.data) x = rng.uniform(-1.0, 1.0);
    const std::vector<double> times{0.0, 0.35, 0.6, 1.0};

    ParamStore checked2 = pn.subset(pn.paths());
    checked2.add("alpha0", alpha0);
    checked2.add("mu", mu);
    auto rollout_loss = [&](Tape& tape) {
        PnodeBinding bind = bind_pnode(tape, pn, pcfg, 1);
        Var m = tape.leaf(checked2.at("mu"));
        Var e = embed_on_tape(tape, bind, m);
        Var a0 = tape.leaf(checked2.at("alpha0"));
        auto f = [&](Tape& tp, Var a) { return dynamics_on_tape(tp, bind, a, e); };
        auto states = integrate_on_tape(tape, f, a0, times, pcfg.substeps);
        Var loss = -1;
        for (std::size_t j = 1; j < states.size(); ++j) {
            Tensor row(Shape{1, 5}, std::vector<double>(targets.data.begin() + (j - 1) * 5,
                                                        targets.data.begin() + j * 5));
            Var term = tape.mse(states[j], tape.constant(std::move(row)));
            loss = loss < 0 ? term : tape.add(loss, term);
        }
        return tape.scale(loss, 1.0 / 3.0);
    };
    GradCheckReport r2 = grad_check(rollout_loss, checked2, 1e-5, 1e-4);
    std::cout << "rollout loss: " << (r2.pass ? "PASS" : "FAIL")
              << " (max rel err " << r2.max_rel_err << ")\n";

    return (r1.pass && r2.pass) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reduced-order forecasting of parameterized fields on unstructured point sets"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset_dir, stage1_dir;
    std::string decoder_prefix, pnode_prefix, ar_prefix;
    std::string times_str, mu_str, generator;
    std::int64_t traj = -1, repeats = 3;
    std::int64_t threads = 0;
    bool have_seed = false;
    std::uint64_t seed = 7;

    app.add_option("--threads", threads, "matmul thread count (0 = library default)");

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) { have_seed = true; });
        if (needs_out) sub->add_option("--out", out_dir, "output directory")->required();
    };

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, true);
    gen->add_option("--generator", generator, "diffusion | gyre");
    std::int64_t n_points = -1, n_times = -1, n_train = -1, n_val = -1, n_test = -1;
    gen->add_option("--n-points", n_points);
    gen->add_option("--n-times", n_times);
    gen->add_option("--n-train", n_train);
    gen->add_option("--n-val", n_val);
    gen->add_option("--n-test", n_test);

    auto* pre = app.add_subcommand("pretrain", "stage 1: decoder + latent codes");
    add_common(pre, true);
    pre->add_option("--dataset", dataset_dir, "dataset directory")->required();
    std::int64_t epochs_override = -1;
    pre->add_option("--epochs", epochs_override, "stage-1 epochs");

    auto* dyn = app.add_subcommand("train-dynamics", "stage 2: latent ODE on frozen latents");
    add_common(dyn, true);
    dyn->add_option("--dataset", dataset_dir)->required();
    dyn->add_option("--stage1", stage1_dir, "directory with latents.{json,bin}")->required();
    std::int64_t s2_epochs = -1, ft_epochs = -1;
    dyn->add_option("--epochs", s2_epochs, "windowed epochs");
    dyn->add_option("--finetune-epochs", ft_epochs);

    auto* arb = app.add_subcommand("train-ar-baseline", "one-step autoregressive latent baseline");
    add_common(arb, true);
    arb->add_option("--dataset", dataset_dir)->required();
    arb->add_option("--stage1", stage1_dir)->required();
    std::int64_t ar_epochs = -1;
    arb->add_option("--epochs", ar_epochs);

    auto* fc = app.add_subcommand("forecast", "forecast from an initial snapshot");
    add_common(fc, true);
    fc->add_option("--dataset", dataset_dir)->required();
    fc->add_option("--decoder", decoder_prefix, "decoder checkpoint prefix")->required();
    fc->add_option("--pnode", pnode_prefix, "dynamics checkpoint prefix")->required();
    fc->add_option("--traj", traj, "trajectory id for u0/mu (default: first test)");
    fc->add_option("--times", times_str, "comma-separated normalized times");
    fc->add_option("--mu", mu_str, "comma-separated physical parameters");

    auto* ev = app.add_subcommand("eval", "test-set metrics, error curve, timing");
    add_common(ev, true);
    ev->add_option("--dataset", dataset_dir)->required();
    ev->add_option("--decoder", decoder_prefix)->required();
    ev->add_option("--pnode", pnode_prefix)->required();
    ev->add_option("--ar", ar_prefix, "AR baseline checkpoint prefix (optional)");
    ev->add_option("--repeats", repeats, "timing repeats (0 disables)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--seed", seed);

    auto* info = app.add_subcommand("info", "print dataset manifest summary");
    info->add_option("dir", dataset_dir, "dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    set_num_threads(static_cast<int>(threads));

    try {
        AppConfig cfg = load_app_config(config_path);
        if (have_seed) {
            cfg.train.seed = seed;
            cfg.dataset.seed = seed;
        }

        if (gen->parsed()) {
            if (!generator.empty()) cfg.dataset.generator = generator;
            if (n_points > 0) cfg.dataset.n_points = n_points;
            if (n_times > 0) cfg.dataset.n_times = n_times;
            if (n_train > 0) cfg.dataset.n_train = n_train;
            if (n_val >= 0) cfg.dataset.n_val = n_val;
            if (n_test >= 0) cfg.dataset.n_test = n_test;
            return cmd_gen_data(cfg, out_dir);
        }
        if (pre->parsed()) {
            if (epochs_override >= 0) cfg.train.stage1_epochs = epochs_override;
            return cmd_pretrain(cfg, dataset_dir, out_dir);
        }
        if (dyn->parsed()) {
            if (s2_epochs >= 0) cfg.train.stage2_epochs = s2_epochs;
            if (ft_epochs >= 0) cfg.train.finetune_epochs = ft_epochs;
            return cmd_train_dynamics(cfg, dataset_dir, stage1_dir, out_dir, false);
        }
        if (arb->parsed()) {
            if (ar_epochs >= 0) cfg.train.ar_epochs = ar_epochs;
            return cmd_train_dynamics(cfg, dataset_dir, stage1_dir, out_dir, true);
        }
        if (fc->parsed()) {
            return cmd_forecast(cfg, dataset_dir, decoder_prefix, pnode_prefix, out_dir, traj,
                                times_str, mu_str);
        }
        if (ev->parsed()) {
            return cmd_eval(cfg, dataset_dir, decoder_prefix, pnode_prefix, ar_prefix, out_dir,
                            repeats);
        }
        if (gc->parsed()) {
            return cmd_gradcheck(seed);
        }
        if (info->parsed()) {
            std::cout << manifest_summary(dataset_dir);
            return 0;
        }
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
