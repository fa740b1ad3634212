#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pinrod/tensor.hpp"

namespace pinrod {

// Named trainable tensors. Iteration order is the sorted path order, which
// fixes the optimizer update order and the serialized layout.
class ParamStore {
public:
    Tensor& add(const std::string& path, Tensor t);
    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;
    bool contains(const std::string& path) const { return params_.count(path) > 0; }
    std::size_t size() const { return params_.size(); }
    std::int64_t total_elements() const;

    std::vector<std::string> paths() const;

    // Shares the underlying tensors; used to step a minibatch subset.
    ParamStore subset(const std::vector<std::string>& paths) const;

    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    // Manifest JSON (path -> shape / byte offset / element count) plus one
    // flat little-endian f64 blob. Round-trips are bit-exact.
    void save(const std::string& json_path, const std::string& bin_path,
              const std::string& header_json = "") const;
    static std::pair<ParamStore, std::string> load(const std::string& json_path,
                                                   const std::string& bin_path);

    // FNV-1a 64 over the blob bytes in sorted path order.
    std::uint64_t content_hash() const;

private:
    std::map<std::string, std::shared_ptr<Tensor>> params_;
};

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hash_hex(std::uint64_t h);

}  // namespace pinrod
