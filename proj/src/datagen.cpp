#include "pinrod/datagen.hpp"

#include <cmath>
#include <numbers>

#include "pinrod/rng.hpp"

namespace pinrod {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

Mesh gen_mesh(std::int64_t n_points, const std::vector<double>& lo,
              const std::vector<double>& hi, std::uint64_t seed) {
    if (n_points < 1) throw ContractError("gen_mesh: n_points must be >= 1");
    if (lo.size() != hi.size() || lo.empty()) throw ContractError("gen_mesh: bad bounds");
    const auto dim = static_cast<std::int64_t>(lo.size());
    double area = 1.0;
    for (std::size_t d = 0; d < lo.size(); ++d) {
        if (!(hi[d] > lo[d])) throw ContractError("gen_mesh: bounds must satisfy lo < hi");
        area *= hi[d] - lo[d];
    }
    const double floor = 0.2 * std::sqrt(area / static_cast<double>(n_points));
    const double floor2 = floor * floor;

    Rng rng(seed);
    Mesh mesh;
    mesh.lo = lo;
    mesh.hi = hi;
    mesh.seed = seed;
    mesh.points = Tensor::zeros({n_points, dim});

    const std::int64_t max_attempts = 10000 * n_points;
    std::int64_t attempts = 0;
    std::int64_t placed = 0;
    std::vector<double> cand(lo.size());
    while (placed < n_points) {
        if (attempts++ >= max_attempts) {
            throw ContractError("gen_mesh: cannot satisfy the minimum distance floor after " +
                                std::to_string(max_attempts) +
                                " attempts; use fewer points or a larger domain");
        }
        for (std::size_t d = 0; d < lo.size(); ++d) cand[d] = rng.uniform(lo[d], hi[d]);
        bool ok = true;
        for (std::int64_t i = 0; i < placed && ok; ++i) {
            double dist2 = 0.0;
            for (std::int64_t d = 0; d < dim; ++d) {
                const double dx = cand[d] - mesh.points.at(i, d);
                dist2 += dx * dx;
            }
            ok = dist2 >= floor2;
        }
        if (!ok) continue;
        for (std::int64_t d = 0; d < dim; ++d) mesh.points.at(placed, d) = cand[d];
        ++placed;
    }
    return mesh;
}

DiffusionInit DiffusionInit::draw(std::uint64_t seed) {
    Rng rng(seed);
    DiffusionInit init;
    for (int m = 1; m <= kMaxMode; ++m) {
        for (int n = 1; n <= kMaxMode; ++n) {
            const int i = (m - 1) * kMaxMode + (n - 1);
            // decaying spectrum keeps the field smooth but multiscale
            init.amp[i] = rng.uniform(-1.0, 1.0) * 1.5 / static_cast<double>(m * m + n * n);
            init.phase_x[i] = rng.uniform(0.0, kTwoPi);
            init.phase_y[i] = rng.uniform(0.0, kTwoPi);
        }
    }
    return init;
}

Tensor eval_diffusion_truth(const DiffusionInit& init, double kappa, double cx, double cy,
                            double t, const Tensor& coords) {
    if (coords.shape.size() != 2 || coords.shape[1] != 2) {
        throw ContractError("diffusion oracle: coords must be N x 2, got " + shape_str(coords.shape));
    }
    const std::int64_t n = coords.rows();
    Tensor out = Tensor::zeros({n, 1});
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = coords.at(i, 0) - cx * t;
        const double y = coords.at(i, 1) - cy * t;
        double u = 0.0;
        for (int m = 1; m <= DiffusionInit::kMaxMode; ++m) {
            for (int nn = 1; nn <= DiffusionInit::kMaxMode; ++nn) {
                const int idx = (m - 1) * DiffusionInit::kMaxMode + (nn - 1);
                const double decay = std::exp(-4.0 * kPi * kPi * kappa *
                                              static_cast<double>(m * m + nn * nn) * t);
                u += init.amp[idx] * decay *
                     std::sin(kTwoPi * m * x + init.phase_x[idx]) *
                     std::sin(kTwoPi * nn * y + init.phase_y[idx]);
            }
        }
        out.data[i] = u;
    }
    return out;
}

Tensor eval_gyre_truth(double amplitude, double eps, double omega, double t,
                       const Tensor& coords) {
    if (!(eps >= 0.0 && eps <= 0.5)) {
        throw ContractError("gyre oracle: eps must lie in [0, 0.5], got " + std::to_string(eps));
    }
    if (coords.shape.size() != 2 || coords.shape[1] != 2) {
        throw ContractError("gyre oracle: coords must be N x 2, got " + shape_str(coords.shape));
    }
    const std::int64_t n = coords.rows();
    const double a = eps * std::sin(omega * t);
    const double b = 1.0 - 2.0 * a;
    Tensor out = Tensor::zeros({n, 2});
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = coords.at(i, 0);
        const double y = coords.at(i, 1);
        const double f = a * x * x + b * x;
        const double dfdx = 2.0 * a * x + b;
        out.at(i, 0) = -kPi * amplitude * std::sin(kPi * f) * std::cos(kPi * y);
        out.at(i, 1) = kPi * amplitude * std::cos(kPi * f) * std::sin(kPi * y) * dfdx;
    }
    return out;
}

void GeneratorConfig::apply_generator_defaults() {
    if (generator == "diffusion") {
        if (mu_names.empty()) mu_names = {"kappa", "c_x", "c_y"};
        if (mu_lo.empty()) mu_lo = {5e-4, -0.3, -0.3};
        if (mu_hi.empty()) mu_hi = {5e-3, 0.3, 0.3};
    } else if (generator == "gyre") {
        if (mu_names.empty()) mu_names = {"amplitude", "eps", "omega"};
        if (mu_lo.empty()) mu_lo = {0.05, 0.1, kPi / 10.0};
        if (mu_hi.empty()) mu_hi = {0.2, 0.3, kPi / 2.0};
    }
}

void GeneratorConfig::validate() const {
    if (generator != "diffusion" && generator != "gyre") {
        throw ContractError("unknown generator '" + generator + "' (expected diffusion or gyre)");
    }
    if (n_points < 1 || n_times < 2) throw ContractError("generator: need n_points >= 1, n_times >= 2");
    if (n_train < 1 || n_val < 0 || n_test < 0) throw ContractError("generator: bad split sizes");
    if (!(t_end > 0.0)) throw ContractError("generator: t_end must be > 0");
    if (mu_lo.size() != mu_hi.size() || mu_lo.size() != mu_names.size() || mu_lo.empty()) {
        throw ContractError("generator: mu ranges and names must agree and be non-empty");
    }
    for (std::size_t d = 0; d < mu_lo.size(); ++d) {
        if (!(mu_hi[d] >= mu_lo[d])) throw ContractError("generator: mu range inverted for " + mu_names[d]);
    }
}

std::vector<double> GeneratorConfig::domain_lo() const { return {0.0, 0.0}; }
std::vector<double> GeneratorConfig::domain_hi() const {
    return generator == "gyre" ? std::vector<double>{2.0, 1.0} : std::vector<double>{1.0, 1.0};
}

std::vector<std::string> GeneratorConfig::field_names() const {
    return generator == "gyre" ? std::vector<std::string>{"u", "v"} : std::vector<std::string>{"u"};
}

namespace {

NormStats compute_stats(const GeneratorConfig& cfg, const Tensor& mu,
                        const std::vector<Tensor>& fields,
                        const std::vector<std::int64_t>& train_ids) {
    const std::int64_t n_fields = cfg.n_fields();
    NormStats stats;
    stats.field_mean.assign(n_fields, 0.0);
    stats.field_std.assign(n_fields, 0.0);

    std::vector<double> count(n_fields, 0.0);
    for (auto id : train_ids) {
        const Tensor& f = fields[id];
        for (std::int64_t i = 0; i < f.size(); ++i) {
            stats.field_mean[i % n_fields] += f.data[i];
            count[i % n_fields] += 1.0;
        }
    }
    for (std::int64_t k = 0; k < n_fields; ++k) stats.field_mean[k] /= count[k];
    for (auto id : train_ids) {
        const Tensor& f = fields[id];
        for (std::int64_t i = 0; i < f.size(); ++i) {
            const double d = f.data[i] - stats.field_mean[i % n_fields];
            stats.field_std[i % n_fields] += d * d;
        }
    }
    for (std::int64_t k = 0; k < n_fields; ++k) {
        stats.field_std[k] = std::sqrt(stats.field_std[k] / count[k]);
        if (stats.field_std[k] < 1e-12) {
            throw ContractError("normalize: field '" + cfg.field_names()[k] +
                                "' has zero standard deviation on the training split");
        }
    }

    const auto d = static_cast<std::int64_t>(cfg.mu_lo.size());
    stats.mu_min.assign(d, 0.0);
    stats.mu_max.assign(d, 0.0);
    for (std::int64_t k = 0; k < d; ++k) {
        double mn = mu.at(train_ids[0], k), mx = mn;
        for (auto id : train_ids) {
            mn = std::min(mn, mu.at(id, k));
            mx = std::max(mx, mu.at(id, k));
        }
        stats.mu_min[k] = mn;
        stats.mu_max[k] = mx;
    }
    return stats;
}

}  // namespace

Dataset generate_dataset(const GeneratorConfig& raw_cfg) {
    GeneratorConfig cfg = raw_cfg;
    cfg.apply_generator_defaults();
    cfg.validate();

    Dataset ds;
    ds.config = cfg;
    ds.field_names = cfg.field_names();
    ds.mesh = gen_mesh(cfg.n_points, cfg.domain_lo(), cfg.domain_hi(),
                       derive_seed(cfg.seed, "mesh"));
    ds.diffusion_init = DiffusionInit::draw(derive_seed(cfg.seed, "init"));

    ds.times.resize(cfg.n_times);
    for (std::int64_t j = 0; j < cfg.n_times; ++j) {
        ds.times[j] = static_cast<double>(j) / static_cast<double>(cfg.n_times - 1);
    }

    const std::int64_t n_traj = cfg.n_train + cfg.n_val + cfg.n_test;
    const auto d = static_cast<std::int64_t>(cfg.mu_lo.size());
    Rng mu_rng(derive_seed(cfg.seed, "mu"));
    ds.mu = Tensor::zeros({n_traj, d});
    for (std::int64_t i = 0; i < n_traj; ++i) {
        for (std::int64_t k = 0; k < d; ++k) {
            ds.mu.at(i, k) = mu_rng.uniform(cfg.mu_lo[k], cfg.mu_hi[k]);
        }
    }

    for (std::int64_t i = 0; i < n_traj; ++i) {
        std::vector<double> mu_row(d);
        for (std::int64_t k = 0; k < d; ++k) mu_row[k] = ds.mu.at(i, k);
        Tensor traj = Tensor::zeros({cfg.n_times, cfg.n_points, cfg.n_fields()});
        for (std::int64_t j = 0; j < cfg.n_times; ++j) {
            Tensor snap = ds.eval_truth(mu_row, ds.times[j], ds.mesh.points);
            std::copy(snap.data.begin(), snap.data.end(),
                      traj.data.begin() + j * cfg.n_points * cfg.n_fields());
        }
        ds.fields.push_back(std::move(traj));
    }

    for (std::int64_t i = 0; i < cfg.n_train; ++i) ds.split_train.push_back(i);
    for (std::int64_t i = 0; i < cfg.n_val; ++i) ds.split_val.push_back(cfg.n_train + i);
    for (std::int64_t i = 0; i < cfg.n_test; ++i) ds.split_test.push_back(cfg.n_train + cfg.n_val + i);

    ds.stats = compute_stats(cfg, ds.mu, ds.fields, ds.split_train);
    return ds;
}

Tensor Dataset::eval_truth(const std::vector<double>& mu_row, double t_norm,
                           const Tensor& coords_phys) const {
    if (mu_row.size() != config.mu_lo.size()) {
        throw ContractError("eval_truth: mu has length " + std::to_string(mu_row.size()) +
                            ", expected " + std::to_string(config.mu_lo.size()));
    }
    const double t = t_norm * config.t_end;
    if (config.generator == "diffusion") {
        return eval_diffusion_truth(diffusion_init, mu_row[0], mu_row[1], mu_row[2], t, coords_phys);
    }
    return eval_gyre_truth(mu_row[0], mu_row[1], mu_row[2], t, coords_phys);
}

Tensor Dataset::normalized_coords() const { return normalize_coords(mesh.points); }

Tensor Dataset::normalize_coords(const Tensor& coords_phys) const {
    if (coords_phys.shape.size() != 2 || coords_phys.cols() != mesh.in_dim()) {
        throw ContractError("normalize_coords: expected N x " + std::to_string(mesh.in_dim()));
    }
    Tensor out = coords_phys;
    for (std::int64_t i = 0; i < out.rows(); ++i) {
        for (std::int64_t d = 0; d < out.cols(); ++d) {
            out.at(i, d) = 2.0 * (coords_phys.at(i, d) - mesh.lo[d]) / (mesh.hi[d] - mesh.lo[d]) - 1.0;
        }
    }
    return out;
}

Tensor Dataset::normalized_snapshot(std::int64_t traj, std::int64_t time_idx) const {
    const std::int64_t N = config.n_points, F = n_fields();
    const Tensor& all = fields.at(traj);
    Tensor snap(Shape{N, F},
                std::vector<double>(all.data.begin() + time_idx * N * F,
                                    all.data.begin() + (time_idx + 1) * N * F));
    return normalize_values(snap, stats);
}

std::vector<double> Dataset::normalized_mu(std::int64_t traj) const {
    std::vector<double> row(mu.cols());
    for (std::int64_t k = 0; k < mu.cols(); ++k) row[k] = mu.at(traj, k);
    return normalize_mu_row(row);
}

std::vector<double> Dataset::normalize_mu_row(const std::vector<double>& mu_row) const {
    if (mu_row.size() != stats.mu_min.size()) {
        throw ContractError("normalize_mu: bad length");
    }
    std::vector<double> out(mu_row.size());
    for (std::size_t k = 0; k < mu_row.size(); ++k) {
        const double span = stats.mu_max[k] - stats.mu_min[k];
        out[k] = span < 1e-12 ? 0.0 : 2.0 * (mu_row[k] - stats.mu_min[k]) / span - 1.0;
    }
    return out;
}

Tensor normalize_values(const Tensor& values, const NormStats& stats) {
    const auto F = static_cast<std::int64_t>(stats.field_mean.size());
    if (values.size() % F != 0) throw ContractError("normalize: value count not divisible by field count");
    Tensor out = values;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const std::int64_t k = i % F;
        if (stats.field_std[k] < 1e-12) throw ContractError("normalize: zero std for field " + std::to_string(k));
        out.data[i] = (values.data[i] - stats.field_mean[k]) / stats.field_std[k];
    }
    return out;
}

Tensor denormalize_values(const Tensor& values, const NormStats& stats) {
    const auto F = static_cast<std::int64_t>(stats.field_mean.size());
    if (values.size() % F != 0) throw ContractError("denormalize: value count not divisible by field count");
    Tensor out = values;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const std::int64_t k = i % F;
        out.data[i] = values.data[i] * stats.field_std[k] + stats.field_mean[k];
    }
    return out;
}

}  // namespace pinrod
