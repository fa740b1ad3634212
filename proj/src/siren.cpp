#include "pinrod/siren.hpp"

#include <cmath>

#include "json.hpp"

#include "pinrod/config_json.hpp"
#include "pinrod/rng.hpp"

namespace pinrod {

using nlohmann::json;

void SirenConfig::validate() const {
    if (in_dim < 1 || in_dim > 3) throw ContractError("siren: in_dim must be 1..3");
    if (out_dim < 1) throw ContractError("siren: out_dim must be >= 1");
    if (width < 1) throw ContractError("siren: width must be >= 1");
    if (depth < 1) throw ContractError("siren: depth must be >= 1");
    if (latent_dim < 1) throw ContractError("siren: latent_dim must be >= 1");
    if (!(omega0 > 0.0)) throw ContractError("siren: omega0 must be > 0");
}

namespace {

std::string layer_path(std::int64_t l, const char* which) {
    return "dec/l" + std::to_string(l) + "/" + which;
}

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace

ParamStore init_decoder(const SirenConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamStore store;
    for (std::int64_t l = 0; l < cfg.depth; ++l) {
        const std::int64_t fan_in = (l == 0) ? cfg.in_dim : cfg.width;
        // First layer bound 1/in_dim; later layers the sqrt(6/fan_in) scheme.
        // The omega0 factor lives only in the first-layer forward pass here,
        // so the init bound is not divided by it.
        const double wb = (l == 0) ? 1.0 / static_cast<double>(fan_in)
                                   : std::sqrt(6.0 / static_cast<double>(fan_in));
        const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
        store.add(layer_path(l, "W"), uniform_tensor({fan_in, cfg.width}, -wb, wb, rng));
        store.add(layer_path(l, "b"), uniform_tensor({1, cfg.width}, -bb, bb, rng));
        store.add(layer_path(l, "Wmod"), Tensor::zeros({cfg.latent_dim, cfg.width}));
    }
    const double wb = std::sqrt(6.0 / static_cast<double>(cfg.width));
    store.add("dec/out/W", uniform_tensor({cfg.width, cfg.out_dim}, -wb, wb, rng));
    store.add("dec/out/b", uniform_tensor({1, cfg.out_dim}, -1.0 / std::sqrt(static_cast<double>(cfg.width)),
                                          1.0 / std::sqrt(static_cast<double>(cfg.width)), rng));
    return store;
}

Var decode_on_tape(Tape& tape, ParamStore& params, const SirenConfig& cfg,
                   Var latents, const Tensor& coords) {
    cfg.validate();
    if (coords.shape.size() != 2 || coords.shape[1] != cfg.in_dim) {
        throw ContractError("decode: coords must be N x " + std::to_string(cfg.in_dim) +
                            ", got " + shape_str(coords.shape));
    }
    for (double x : coords.data) {
        if (!(x >= -1.5 && x <= 1.5)) {
            throw ContractError("decode: coordinate " + std::to_string(x) +
                                " outside the [-1.5, 1.5] sanity bound; "
                                "coords must be normalized to [-1, 1]");
        }
    }
    const Tensor& lat_val = tape.val(latents);
    if (lat_val.cols() != cfg.latent_dim) {
        throw ContractError("decode: latent width " + std::to_string(lat_val.cols()) +
                            " != latent_dim " + std::to_string(cfg.latent_dim));
    }
    const std::int64_t S = lat_val.rows();
    const std::int64_t C = coords.rows();

    Var x = tape.constant(coords);
    Var h = (S == 1) ? x : tape.stack_rows(std::vector<Var>(static_cast<std::size_t>(S), x));
    const std::int64_t M = S * C;

    for (std::int64_t l = 0; l < cfg.depth; ++l) {
        Var z = tape.matmul(h, tape.leaf(params.at(layer_path(l, "W"))));
        z = tape.add(z, tape.repeat_rows(tape.leaf(params.at(layer_path(l, "b"))), M));
        Var shift = tape.matmul(latents, tape.leaf(params.at(layer_path(l, "Wmod"))));
        z = tape.add(z, tape.repeat_rows(shift, C));
        if (l == 0 && cfg.omega0 != 1.0) z = tape.scale(z, cfg.omega0);
        h = tape.sin(z);
    }
    Var out = tape.matmul(h, tape.leaf(params.at("dec/out/W")));
    out = tape.add(out, tape.repeat_rows(tape.leaf(params.at("dec/out/b")), M));
    return out;
}

Tensor decode_batch(ParamStore& params, const SirenConfig& cfg,
                    const Tensor& latents, const Tensor& coords) {
    if (latents.shape.size() != 2) {
        throw ContractError("decode_batch: latents must be B x k, got " + shape_str(latents.shape));
    }
    Tape tape;
    Var lat = tape.constant(latents);
    Var out = decode_on_tape(tape, params, cfg, lat, coords);
    Tensor result = tape.val(out);
    result.shape = {latents.rows(), coords.rows(), cfg.out_dim};
    return result;
}

Tensor decode(ParamStore& params, const SirenConfig& cfg,
              const Tensor& latent, const Tensor& coords) {
    if (latent.size() != cfg.latent_dim) {
        throw ContractError("decode: latent length " + std::to_string(latent.size()) +
                            " != latent_dim " + std::to_string(cfg.latent_dim));
    }
    Tensor lat2d(Shape{1, cfg.latent_dim}, latent.data);
    Tensor out = decode_batch(params, cfg, lat2d, coords);
    out.shape = {coords.rows(), cfg.out_dim};
    return out;
}

void save_decoder(const std::string& prefix, const ParamStore& params, const SirenConfig& cfg) {
    json header;
    header["kind"] = "decoder";
    header["config"] = cfg;
    params.save(prefix + ".json", prefix + ".bin", header.dump());
}

std::pair<ParamStore, SirenConfig> load_decoder(const std::string& prefix) {
    auto [store, header_str] = ParamStore::load(prefix + ".json", prefix + ".bin");
    if (header_str.empty()) throw IoError("decoder checkpoint " + prefix + " has no header");
    json header = json::parse(header_str);
    if (header.value("kind", "") != "decoder") {
        throw IoError("checkpoint " + prefix + " is not a decoder checkpoint");
    }
    SirenConfig cfg = header.at("config").get<SirenConfig>();
    cfg.validate();

    // shape consistency against the config
    ParamStore expected = init_decoder(cfg, 0);
    if (expected.size() != store.size()) {
        throw IoError("decoder checkpoint " + prefix + ": unexpected parameter count");
    }
    for (const auto& [path, t] : expected) {
        if (!store.contains(path) || store.at(path).shape != t->shape) {
            throw IoError("decoder checkpoint " + prefix + ": bad shape for " + path);
        }
    }
    return {std::move(store), cfg};
}

void to_json(json& j, const SirenConfig& c) {
    j = json{{"in_dim", c.in_dim},   {"out_dim", c.out_dim},       {"width", c.width},
             {"depth", c.depth},     {"latent_dim", c.latent_dim}, {"omega0", c.omega0}};
}

void from_json(const json& j, SirenConfig& c) {
    c.in_dim = j.value("in_dim", c.in_dim);
    c.out_dim = j.value("out_dim", c.out_dim);
    c.width = j.value("width", c.width);
    c.depth = j.value("depth", c.depth);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.omega0 = j.value("omega0", c.omega0);
}

}  // namespace pinrod
