#include "pinrod/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "pinrod/config_json.hpp"
#include "pinrod/param_store.hpp"

namespace pinrod {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::string field_file(std::int64_t traj) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fields_%04lld.bin", static_cast<long long>(traj));
    return buf;
}

void write_blob(const fs::path& path, const std::vector<double>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!f.good()) throw IoError("failed writing " + path.string());
}

std::vector<double> read_blob(const fs::path& path, std::int64_t expected_count) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    f.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(f.tellg());
    if (bytes != static_cast<std::uint64_t>(expected_count) * sizeof(double)) {
        throw IoError(path.string() + ": size " + std::to_string(bytes) +
                      " bytes does not match manifest (" +
                      std::to_string(expected_count * sizeof(double)) + " expected)");
    }
    f.seekg(0);
    std::vector<double> data(static_cast<std::size_t>(expected_count));
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!f.good()) throw IoError("failed reading " + path.string());
    return data;
}

std::uint64_t hash_file_into(const fs::path& path, std::uint64_t h) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
    }
    return h;
}

json diffusion_init_json(const DiffusionInit& init) {
    return json{{"amp", init.amp}, {"phase_x", init.phase_x}, {"phase_y", init.phase_y}};
}

DiffusionInit diffusion_init_from_json(const json& j) {
    DiffusionInit init;
    init.amp = j.at("amp").get<std::array<double, 9>>();
    init.phase_x = j.at("phase_x").get<std::array<double, 9>>();
    init.phase_y = j.at("phase_y").get<std::array<double, 9>>();
    return init;
}

}  // namespace

std::string dataset_content_hash(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot read manifest in " + dir);
    json manifest;
    mf >> manifest;
    const std::int64_t n_traj = manifest.at("n_traj").get<std::int64_t>();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = hash_file_into(fs::path(dir) / "coords.bin", h);
    h = hash_file_into(fs::path(dir) / "times.bin", h);
    for (std::int64_t i = 0; i < n_traj; ++i) {
        h = hash_file_into(fs::path(dir) / field_file(i), h);
    }
    return "fnv1a64:" + hash_hex(h);
}

std::string file_hash(const std::string& path) {
    return "fnv1a64:" + hash_hex(hash_file_into(path, 0xcbf29ce484222325ULL));
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);
    write_blob(fs::path(dir) / "coords.bin", ds.mesh.points.data);
    write_blob(fs::path(dir) / "times.bin", ds.times);
    for (std::int64_t i = 0; i < ds.n_traj(); ++i) {
        write_blob(fs::path(dir) / field_file(i), ds.fields[i].data);
    }

    json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["generator"] = ds.config.generator;
    manifest["config"] = ds.config;
    manifest["n_traj"] = ds.n_traj();
    manifest["n_times"] = ds.n_times();
    manifest["n_points"] = ds.mesh.n_points();
    manifest["in_dim"] = ds.mesh.in_dim();
    manifest["n_fields"] = ds.n_fields();
    manifest["field_names"] = ds.field_names;
    manifest["mu_names"] = ds.config.mu_names;
    manifest["domain"] = {{"lo", ds.mesh.lo}, {"hi", ds.mesh.hi}};
    manifest["t_end"] = ds.config.t_end;
    manifest["mesh_seed"] = ds.mesh.seed;
    manifest["splits"] = {{"train", ds.split_train}, {"val", ds.split_val}, {"test", ds.split_test}};
    json mu_table = json::array();
    for (std::int64_t i = 0; i < ds.n_traj(); ++i) {
        json row = json::array();
        for (std::int64_t k = 0; k < ds.mu.cols(); ++k) row.push_back(ds.mu.at(i, k));
        mu_table.push_back(row);
    }
    manifest["mu"] = mu_table;
    manifest["normalization"] = ds.stats;
    if (ds.config.generator == "diffusion") {
        manifest["diffusion_init"] = diffusion_init_json(ds.diffusion_init);
    }
    manifest["content_hash"] = dataset_content_hash(dir);

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    if (!mf.good()) throw IoError("failed writing manifest in " + dir);
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot read manifest in " + dir);
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw IoError("invalid manifest in " + dir + ": " + e.what());
    }
    if (manifest.value("schema_version", -1) != kSchemaVersion) {
        throw IoError("unsupported dataset schema in " + dir);
    }

    Dataset ds;
    ds.config = manifest.at("config").get<GeneratorConfig>();
    ds.config.validate();
    const std::int64_t n_traj = manifest.at("n_traj").get<std::int64_t>();
    const std::int64_t n_times = manifest.at("n_times").get<std::int64_t>();
    const std::int64_t n_points = manifest.at("n_points").get<std::int64_t>();
    const std::int64_t in_dim = manifest.at("in_dim").get<std::int64_t>();
    const std::int64_t n_fields = manifest.at("n_fields").get<std::int64_t>();

    ds.field_names = manifest.at("field_names").get<std::vector<std::string>>();
    ds.mesh.lo = manifest.at("domain").at("lo").get<std::vector<double>>();
    ds.mesh.hi = manifest.at("domain").at("hi").get<std::vector<double>>();
    ds.mesh.seed = manifest.value("mesh_seed", std::uint64_t{0});
    ds.mesh.points = Tensor({n_points, in_dim},
                            read_blob(fs::path(dir) / "coords.bin", n_points * in_dim));
    ds.times = read_blob(fs::path(dir) / "times.bin", n_times);

    ds.mu = Tensor::zeros({n_traj, static_cast<std::int64_t>(ds.config.mu_lo.size())});
    const auto& mu_table = manifest.at("mu");
    for (std::int64_t i = 0; i < n_traj; ++i) {
        for (std::int64_t k = 0; k < ds.mu.cols(); ++k) {
            ds.mu.at(i, k) = mu_table.at(i).at(k).get<double>();
        }
    }
    for (std::int64_t i = 0; i < n_traj; ++i) {
        ds.fields.emplace_back(Shape{n_times, n_points, n_fields},
                               read_blob(fs::path(dir) / field_file(i),
                                         n_times * n_points * n_fields));
    }
    ds.split_train = manifest.at("splits").at("train").get<std::vector<std::int64_t>>();
    ds.split_val = manifest.at("splits").at("val").get<std::vector<std::int64_t>>();
    ds.split_test = manifest.at("splits").at("test").get<std::vector<std::int64_t>>();
    ds.stats = manifest.at("normalization").get<NormStats>();
    if (manifest.contains("diffusion_init")) {
        ds.diffusion_init = diffusion_init_from_json(manifest.at("diffusion_init"));
    }

    const std::string stored = manifest.value("content_hash", "");
    const std::string actual = dataset_content_hash(dir);
    if (!stored.empty() && stored != actual) {
        throw IoError("dataset " + dir + ": content hash mismatch (stored " + stored +
                      ", actual " + actual + ")");
    }
    return ds;
}

std::string manifest_summary(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot read manifest in " + dir);
    json m;
    mf >> m;
    std::ostringstream os;
    os << "dataset: " << dir << "\n"
       << "  generator:  " << m.value("generator", "?") << "\n"
       << "  trajectories: " << m.value("n_traj", -1)
       << " (train " << m.at("splits").at("train").size()
       << ", val " << m.at("splits").at("val").size()
       << ", test " << m.at("splits").at("test").size() << ")\n"
       << "  snapshots:  " << m.value("n_times", -1) << "\n"
       << "  points:     " << m.value("n_points", -1) << " in " << m.value("in_dim", -1) << "-d\n"
       << "  fields:     ";
    for (const auto& f : m.at("field_names")) os << f.get<std::string>() << " ";
    os << "\n  mu:         ";
    for (const auto& f : m.at("mu_names")) os << f.get<std::string>() << " ";
    os << "\n  t_end:      " << m.value("t_end", 0.0) << "\n"
       << "  hash:       " << m.value("content_hash", "?") << "\n";
    return os.str();
}

void to_json(json& j, const GeneratorConfig& c) {
    j = json{{"generator", c.generator}, {"n_points", c.n_points}, {"n_times", c.n_times},
             {"n_train", c.n_train},     {"n_val", c.n_val},       {"n_test", c.n_test},
             {"t_end", c.t_end},         {"mu_names", c.mu_names}, {"mu_lo", c.mu_lo},
             {"mu_hi", c.mu_hi},         {"seed", c.seed}};
}

void from_json(const json& j, GeneratorConfig& c) {
    c.generator = j.value("generator", c.generator);
    c.n_points = j.value("n_points", c.n_points);
    c.n_times = j.value("n_times", c.n_times);
    c.n_train = j.value("n_train", c.n_train);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test = j.value("n_test", c.n_test);
    c.t_end = j.value("t_end", c.t_end);
    c.mu_names = j.value("mu_names", c.mu_names);
    c.mu_lo = j.value("mu_lo", c.mu_lo);
    c.mu_hi = j.value("mu_hi", c.mu_hi);
    c.seed = j.value("seed", c.seed);
    c.apply_generator_defaults();
}

void to_json(json& j, const NormStats& s) {
    j = json{{"field_mean", s.field_mean}, {"field_std", s.field_std},
             {"mu_min", s.mu_min},         {"mu_max", s.mu_max}};
}

void from_json(const json& j, NormStats& s) {
    s.field_mean = j.at("field_mean").get<std::vector<double>>();
    s.field_std = j.at("field_std").get<std::vector<double>>();
    s.mu_min = j.at("mu_min").get<std::vector<double>>();
    s.mu_max = j.at("mu_max").get<std::vector<double>>();
}

}  // namespace pinrod
