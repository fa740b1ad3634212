#include "pinrod/pnode.hpp"

#include <cmath>

#include "json.hpp"

#include "pinrod/config_json.hpp"
#include "pinrod/rng.hpp"

namespace pinrod {

using nlohmann::json;

void PnodeConfig::validate() const {
    if (latent_dim < 1) throw ContractError("pnode: latent_dim must be >= 1");
    if (mu_dim < 1) throw ContractError("pnode: mu_dim must be >= 1");
    if (embed_width < 1 || embed_dim < 1) throw ContractError("pnode: embed sizes must be >= 1");
    if (dyn_width < 1) throw ContractError("pnode: dyn_width must be >= 1");
    if (dyn_depth < 2) throw ContractError("pnode: dyn_depth must be >= 2");
    if (substeps < 1) throw ContractError("pnode: substeps must be >= 1");
}

namespace {

Tensor xavier(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    const double b = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    for (auto& x : t.data) x = rng.uniform(-b, b);
    return t;
}

ParamStore init_net(const PnodeConfig& cfg, std::uint64_t seed, const std::string& net_prefix) {
    cfg.validate();
    Rng rng(seed);
    ParamStore store;
    store.add("emb/l0/W", xavier({cfg.mu_dim, cfg.embed_width}, rng));
    store.add("emb/l0/b", Tensor::zeros({1, cfg.embed_width}));
    store.add("emb/l1/W", xavier({cfg.embed_width, cfg.embed_dim}, rng));
    store.add("emb/l1/b", Tensor::zeros({1, cfg.embed_dim}));
    for (std::int64_t l = 0; l < cfg.dyn_depth; ++l) {
        const std::int64_t fan_in = (l == 0) ? cfg.latent_dim + cfg.embed_dim : cfg.dyn_width;
        const std::int64_t fan_out = (l == cfg.dyn_depth - 1) ? cfg.latent_dim : cfg.dyn_width;
        const std::string base = net_prefix + "/l" + std::to_string(l) + "/";
        if (l == cfg.dyn_depth - 1) {
            // zero output layer: stationary dynamics / identity step at init
            store.add(base + "W", Tensor::zeros({fan_in, fan_out}));
        } else {
            store.add(base + "W", xavier({fan_in, fan_out}, rng));
        }
        store.add(base + "b", Tensor::zeros({1, fan_out}));
    }
    return store;
}

}  // namespace

ParamStore init_pnode(const PnodeConfig& cfg, std::uint64_t seed) {
    return init_net(cfg, seed, "dyn");
}

ParamStore init_ar_baseline(const PnodeConfig& cfg, std::uint64_t seed) {
    return init_net(cfg, seed, "dyn");
}

PnodeBinding bind_pnode(Tape& tape, ParamStore& params, const PnodeConfig& cfg,
                        std::int64_t batch) {
    PnodeBinding b;
    b.batch = batch;
    b.emb_w.push_back(tape.leaf(params.at("emb/l0/W")));
    b.emb_b.push_back(tape.repeat_rows(tape.leaf(params.at("emb/l0/b")), batch));
    b.emb_w.push_back(tape.leaf(params.at("emb/l1/W")));
    b.emb_b.push_back(tape.repeat_rows(tape.leaf(params.at("emb/l1/b")), batch));
    for (std::int64_t l = 0;; ++l) {
        const std::string base = "dyn/l" + std::to_string(l) + "/";
        if (!params.contains(base + "W")) break;
        b.dyn_w.push_back(tape.leaf(params.at(base + "W")));
        b.dyn_b.push_back(tape.repeat_rows(tape.leaf(params.at(base + "b")), batch));
    }
    if (b.dyn_w.empty()) throw ContractError("pnode: no dynamics layers in parameter store");
    return b;
}

Var embed_on_tape(Tape& tape, const PnodeBinding& bind, Var mu) {
    Var h = tape.tanh(tape.add(tape.matmul(mu, bind.emb_w[0]), bind.emb_b[0]));
    return tape.tanh(tape.add(tape.matmul(h, bind.emb_w[1]), bind.emb_b[1]));
}

Var dynamics_on_tape(Tape& tape, const PnodeBinding& bind, Var alpha, Var embedded) {
    Var h = tape.concat(alpha, embedded);
    const std::size_t last = bind.dyn_w.size() - 1;
    for (std::size_t l = 0; l < bind.dyn_w.size(); ++l) {
        h = tape.add(tape.matmul(h, bind.dyn_w[l]), bind.dyn_b[l]);
        if (l != last) h = tape.tanh(h);
    }
    return h;
}

std::vector<Var> integrate_on_tape(Tape& tape, const DynFn& f, Var alpha0,
                                   const std::vector<double>& times, std::int64_t substeps) {
    if (times.empty()) throw ContractError("integrate: empty time grid");
    if (substeps < 1) throw ContractError("integrate: substeps must be >= 1");
    for (std::size_t j = 1; j < times.size(); ++j) {
        if (!(times[j] > times[j - 1])) {
            throw ContractError("integrate: times must be strictly increasing (times[" +
                                std::to_string(j) + "] = " + std::to_string(times[j]) + ")");
        }
    }
    std::vector<Var> out;
    out.reserve(times.size());
    out.push_back(alpha0);
    Var state = alpha0;
    for (std::size_t j = 1; j < times.size(); ++j) {
        const double h = (times[j] - times[j - 1]) / static_cast<double>(substeps);
        for (std::int64_t q = 0; q < substeps; ++q) {
            Var k1 = f(tape, state);
            Var k2 = f(tape, tape.add(state, tape.scale(k1, h / 2.0)));
            Var k3 = f(tape, tape.add(state, tape.scale(k2, h / 2.0)));
            Var k4 = f(tape, tape.add(state, tape.scale(k3, h)));
            Var incr = tape.add(tape.add(k1, tape.scale(tape.add(k2, k3), 2.0)), k4);
            state = tape.add(state, tape.scale(incr, h / 6.0));
            for (double x : tape.val(state).data) {
                if (!std::isfinite(x)) {
                    throw NumericError("integrate: non-finite state at interval " +
                                       std::to_string(j) + ", substep " + std::to_string(q));
                }
            }
        }
        out.push_back(state);
    }
    return out;
}

namespace {

Tensor as_row(const Tensor& t, std::int64_t want, const char* name) {
    if (t.size() != want) {
        throw ContractError(std::string(name) + " length " + std::to_string(t.size()) +
                            " != expected " + std::to_string(want));
    }
    return Tensor(Shape{1, want}, t.data);
}

}  // namespace

Tensor dynamics(ParamStore& params, const PnodeConfig& cfg,
                const Tensor& alpha, const Tensor& mu) {
    cfg.validate();
    Tape tape;
    PnodeBinding bind = bind_pnode(tape, params, cfg, 1);
    Var a = tape.constant(as_row(alpha, cfg.latent_dim, "alpha"));
    Var m = tape.constant(as_row(mu, cfg.mu_dim, "mu"));
    Var e = embed_on_tape(tape, bind, m);
    Var d = dynamics_on_tape(tape, bind, a, e);
    Tensor out = tape.val(d);
    out.shape = {cfg.latent_dim};
    return out;
}

Tensor integrate(ParamStore& params, const PnodeConfig& cfg, const Tensor& alpha0,
                 const Tensor& mu, const std::vector<double>& times) {
    cfg.validate();
    Tape tape;
    PnodeBinding bind = bind_pnode(tape, params, cfg, 1);
    Var a0 = tape.constant(as_row(alpha0, cfg.latent_dim, "alpha0"));
    Var m = tape.constant(as_row(mu, cfg.mu_dim, "mu"));
    Var e = embed_on_tape(tape, bind, m);
    auto f = [&](Tape& t, Var a) { return dynamics_on_tape(t, bind, a, e); };
    auto states = integrate_on_tape(tape, f, a0, times, cfg.substeps);
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(times.size()), cfg.latent_dim});
    for (std::size_t j = 0; j < states.size(); ++j) {
        const Tensor& row = tape.val(states[j]);
        std::copy(row.data.begin(), row.data.end(), out.data.begin() + j * cfg.latent_dim);
    }
    return out;
}

Tensor query_time(ParamStore& params, const PnodeConfig& cfg, const Tensor& alpha0,
                  const Tensor& mu, double t_query, double t0) {
    if (t_query < t0) {
        throw ContractError("query_time: t_query " + std::to_string(t_query) +
                            " precedes t0 " + std::to_string(t0));
    }
    if (t_query == t0) {
        Tensor out = as_row(alpha0, cfg.latent_dim, "alpha0");
        out.shape = {cfg.latent_dim};
        return out;
    }
    Tensor traj = integrate(params, cfg, alpha0, mu, {t0, t_query});
    Tensor out(Shape{cfg.latent_dim},
               std::vector<double>(traj.data.end() - cfg.latent_dim, traj.data.end()));
    return out;
}

Var ar_step_on_tape(Tape& tape, const PnodeBinding& bind, Var alpha, Var embedded) {
    return tape.add(alpha, dynamics_on_tape(tape, bind, alpha, embedded));
}

Tensor ar_rollout(ParamStore& params, const PnodeConfig& cfg, const Tensor& alpha0,
                  const Tensor& mu, std::int64_t n_steps) {
    cfg.validate();
    if (n_steps < 0) throw ContractError("ar_rollout: n_steps must be >= 0");
    Tape tape;
    PnodeBinding bind = bind_pnode(tape, params, cfg, 1);
    Var a = tape.constant(as_row(alpha0, cfg.latent_dim, "alpha0"));
    Var m = tape.constant(as_row(mu, cfg.mu_dim, "mu"));
    Var e = embed_on_tape(tape, bind, m);
    Tensor out = Tensor::zeros({n_steps + 1, cfg.latent_dim});
    std::copy(alpha0.data.begin(), alpha0.data.end(), out.data.begin());
    for (std::int64_t s = 1; s <= n_steps; ++s) {
        a = ar_step_on_tape(tape, bind, a, e);
        const Tensor& row = tape.val(a);
        for (double x : row.data) {
            if (!std::isfinite(x)) {
                throw NumericError("ar_rollout: non-finite state at step " + std::to_string(s));
            }
        }
        std::copy(row.data.begin(), row.data.end(), out.data.begin() + s * cfg.latent_dim);
    }
    return out;
}

void save_pnode(const std::string& prefix, const ParamStore& params, const PnodeConfig& cfg,
                const std::string& kind) {
    json header;
    header["kind"] = kind;
    header["config"] = cfg;
    params.save(prefix + ".json", prefix + ".bin", header.dump());
}

std::pair<ParamStore, PnodeConfig> load_pnode(const std::string& prefix, const std::string& kind) {
    auto [store, header_str] = ParamStore::load(prefix + ".json", prefix + ".bin");
    if (header_str.empty()) throw IoError("checkpoint " + prefix + " has no header");
    json header = json::parse(header_str);
    if (header.value("kind", "") != kind) {
        throw IoError("checkpoint " + prefix + " is not a '" + kind + "' checkpoint");
    }
    PnodeConfig cfg = header.at("config").get<PnodeConfig>();
    cfg.validate();
    ParamStore expected = init_pnode(cfg, 0);
    if (expected.size() != store.size()) {
        throw IoError("checkpoint " + prefix + ": unexpected parameter count");
    }
    for (const auto& [path, t] : expected) {
        if (!store.contains(path) || store.at(path).shape != t->shape) {
            throw IoError("checkpoint " + prefix + ": bad shape for " + path);
        }
    }
    return {std::move(store), cfg};
}

void to_json(json& j, const PnodeConfig& c) {
    j = json{{"latent_dim", c.latent_dim}, {"mu_dim", c.mu_dim},
             {"embed_width", c.embed_width}, {"embed_dim", c.embed_dim},
             {"dyn_width", c.dyn_width},   {"dyn_depth", c.dyn_depth},
             {"substeps", c.substeps}};
}

void from_json(const json& j, PnodeConfig& c) {
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.mu_dim = j.value("mu_dim", c.mu_dim);
    c.embed_width = j.value("embed_width", c.embed_width);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.dyn_width = j.value("dyn_width", c.dyn_width);
    c.dyn_depth = j.value("dyn_depth", c.dyn_depth);
    c.substeps = j.value("substeps", c.substeps);
}

}  // namespace pinrod
