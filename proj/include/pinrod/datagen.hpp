#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pinrod/tensor.hpp"

namespace pinrod {

// Fixed unstructured point set shared by all snapshots of a dataset.
struct Mesh {
    Tensor points;  // N x in_dim, physical coordinates
    std::vector<double> lo, hi;
    std::uint64_t seed = 0;

    std::int64_t n_points() const { return points.rows(); }
    std::int64_t in_dim() const { return points.cols(); }
};

// Seeded random points with a minimum pairwise distance floor of
// 0.2 * sqrt(area / N). Rejection sampling; errors out after 1e4 * N attempts.
Mesh gen_mesh(std::int64_t n_points, const std::vector<double>& lo,
              const std::vector<double>& hi, std::uint64_t seed);

// Initial condition of the diffusion-advection family: a seeded superposition
// of product sine modes with wavenumbers 1..3 in each direction.
struct DiffusionInit {
    static constexpr int kMaxMode = 3;
    std::array<double, 9> amp{}, phase_x{}, phase_y{};

    static DiffusionInit draw(std::uint64_t seed);
};

// Exact solution of du/dt = kappa * lap(u) - c . grad(u) on the periodic unit
// square: every mode decays by exp(-4 pi^2 kappa (m^2+n^2) t) and translates
// by c*t. Valid at any (t, x) — the continuous-query oracle. Output N x 1.
Tensor eval_diffusion_truth(const DiffusionInit& init, double kappa, double cx, double cy,
                            double t, const Tensor& coords);

// Time-periodic double-gyre velocity field on [0,2] x [0,1] from the
// streamfunction psi = A sin(pi f(x,t)) sin(pi y) with
// f = eps sin(omega t) x^2 + (1 - 2 eps sin(omega t)) x. Output N x 2 = (u, v).
Tensor eval_gyre_truth(double amplitude, double eps, double omega, double t,
                       const Tensor& coords);

struct GeneratorConfig {
    std::string generator = "diffusion";  // "diffusion" | "gyre"
    std::int64_t n_points = 512;
    std::int64_t n_times = 30;
    std::int64_t n_train = 24, n_val = 4, n_test = 4;
    double t_end = 1.0;
    std::vector<std::string> mu_names;
    std::vector<double> mu_lo, mu_hi;
    std::uint64_t seed = 1;

    // Fills generator-specific defaults (mu ranges, names) for empty fields.
    void apply_generator_defaults();
    void validate() const;
    std::vector<double> domain_lo() const;
    std::vector<double> domain_hi() const;
    std::int64_t n_fields() const { return generator == "gyre" ? 2 : 1; }
    std::vector<std::string> field_names() const;
};

// Per-field z-score stats and per-mu-dimension min/max, training split only.
struct NormStats {
    std::vector<double> field_mean, field_std;
    std::vector<double> mu_min, mu_max;
};

struct Dataset {
    GeneratorConfig config;
    Mesh mesh;
    std::vector<double> times;          // n_times stamps, normalized to [0, 1]
    Tensor mu;                          // n_traj x d, physical values
    std::vector<Tensor> fields;         // per trajectory, {T, N, F}, physical
    std::vector<std::string> field_names;
    std::vector<std::int64_t> split_train, split_val, split_test;
    NormStats stats;
    DiffusionInit diffusion_init;       // meaningful for the diffusion family

    std::int64_t n_traj() const { return mu.rows(); }
    std::int64_t n_times() const { return static_cast<std::int64_t>(times.size()); }
    std::int64_t n_fields() const { return static_cast<std::int64_t>(field_names.size()); }

    // Oracle re-evaluation for a trajectory's mu at a normalized time and
    // arbitrary physical coordinates.
    Tensor eval_truth(const std::vector<double>& mu_row, double t_norm,
                      const Tensor& coords_phys) const;

    // Normalization pipeline: coords affinely into [-1,1]^d, fields z-scored,
    // mu min-max mapped into [-1,1] per dimension.
    Tensor normalized_coords() const;
    Tensor normalize_coords(const Tensor& coords_phys) const;
    Tensor normalized_snapshot(std::int64_t traj, std::int64_t time_idx) const;  // N x F
    std::vector<double> normalized_mu(std::int64_t traj) const;
    std::vector<double> normalize_mu_row(const std::vector<double>& mu_row) const;
};

// mu drawn uniformly per trajectory from the configured ranges; fields filled
// by the exact oracle at mesh x times; stats computed on the training split.
Dataset generate_dataset(const GeneratorConfig& cfg);

Tensor normalize_values(const Tensor& values, const NormStats& stats);
Tensor denormalize_values(const Tensor& values, const NormStats& stats);

}  // namespace pinrod
