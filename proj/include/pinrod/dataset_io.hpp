#pragma once

#include <string>

#include "pinrod/datagen.hpp"

namespace pinrod {

// Directory layout: manifest.json + coords.bin + times.bin + fields_<id>.bin,
// all flat little-endian f64 row-major. The manifest carries dimensions,
// splits, the mu table, normalization stats and a content hash over the
// binary payloads; readers validate byte lengths against it.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// FNV-1a 64 over coords.bin, times.bin, fields_<id>.bin in manifest order.
std::string dataset_content_hash(const std::string& dir);

// Hash of an arbitrary file's bytes (for checkpoint hashes in reports).
std::string file_hash(const std::string& path);

std::string manifest_summary(const std::string& dir);

}  // namespace pinrod
