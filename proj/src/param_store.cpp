#include "pinrod/param_store.hpp"

#include <bit>
#include <fstream>

#include "json.hpp"

namespace pinrod {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "parameter blobs are little-endian; big-endian hosts are unsupported");

Tensor& ParamStore::add(const std::string& path, Tensor t) {
    if (params_.count(path)) throw ContractError("parameter path already present: " + path);
    t.requires_grad = true;
    auto p = std::make_shared<Tensor>(std::move(t));
    auto& slot = params_[path];
    slot = std::move(p);
    return *slot;
}

Tensor& ParamStore::at(const std::string& path) {
    auto it = params_.find(path);
    if (it == params_.end()) throw ContractError("unknown parameter path: " + path);
    return *it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw ContractError("unknown parameter path: " + path);
    return *it->second;
}

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& [path, t] : params_) n += t->size();
    return n;
}

std::vector<std::string> ParamStore::paths() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [path, t] : params_) out.push_back(path);
    return out;
}

ParamStore ParamStore::subset(const std::vector<std::string>& paths) const {
    ParamStore out;
    for (const auto& p : paths) {
        auto it = params_.find(p);
        if (it == params_.end()) throw ContractError("unknown parameter path: " + p);
        out.params_[p] = it->second;
    }
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [path, t] : params_) {
        t->ensure_grad();
        t->zero_grad();
    }
}

void ParamStore::save(const std::string& json_path, const std::string& bin_path,
                      const std::string& header_json) const {
    json manifest;
    manifest["format"] = "pinrod-params-v1";
    if (!header_json.empty()) manifest["header"] = json::parse(header_json);
    json params = json::object();
    std::uint64_t offset = 0;
    for (const auto& [path, t] : params_) {
        params[path] = {{"shape", t->shape},
                        {"byte_offset", offset},
                        {"length", t->size()}};
        offset += static_cast<std::uint64_t>(t->size()) * sizeof(double);
    }
    manifest["params"] = params;

    std::ofstream jf(json_path);
    if (!jf) throw IoError("cannot write " + json_path);
    jf << manifest.dump(2) << "\n";
    if (!jf.good()) throw IoError("failed writing " + json_path);

    std::ofstream bf(bin_path, std::ios::binary);
    if (!bf) throw IoError("cannot write " + bin_path);
    for (const auto& [path, t] : params_) {
        bf.write(reinterpret_cast<const char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!bf.good()) throw IoError("failed writing " + bin_path);
}

std::pair<ParamStore, std::string> ParamStore::load(const std::string& json_path,
                                                    const std::string& bin_path) {
    std::ifstream jf(json_path);
    if (!jf) throw IoError("cannot read " + json_path);
    json manifest;
    try {
        jf >> manifest;
    } catch (const json::exception& e) {
        throw IoError("invalid manifest " + json_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "pinrod-params-v1") {
        throw IoError("unexpected manifest format in " + json_path);
    }

    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) throw IoError("cannot read " + bin_path);
    bf.seekg(0, std::ios::end);
    const std::uint64_t blob_len = static_cast<std::uint64_t>(bf.tellg());
    bf.seekg(0);

    ParamStore store;
    for (const auto& [path, meta] : manifest.at("params").items()) {
        Shape shape = meta.at("shape").get<Shape>();
        const std::uint64_t offset = meta.at("byte_offset").get<std::uint64_t>();
        const std::int64_t length = meta.at("length").get<std::int64_t>();
        if (numel(shape) != length) {
            throw IoError("manifest length mismatch for " + path);
        }
        if (offset + static_cast<std::uint64_t>(length) * sizeof(double) > blob_len) {
            throw IoError("blob too short for parameter " + path);
        }
        Tensor t = Tensor::zeros(shape);
        bf.seekg(static_cast<std::streamoff>(offset));
        bf.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(length * sizeof(double)));
        if (!bf.good()) throw IoError("failed reading " + bin_path);
        store.add(path, std::move(t));
    }
    std::string header;
    if (manifest.contains("header")) header = manifest["header"].dump();
    return {std::move(store), std::move(header)};
}

std::uint64_t ParamStore::content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [path, t] : params_) {
        h = fnv1a64(path.data(), path.size(), h);
        h = fnv1a64(t->data.data(), t->data.size() * sizeof(double), h);
    }
    return h;
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace pinrod
