#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "voicectl/autograd/tape.hpp"

namespace voicectl {

/// Little-endian container of float matrices ("VCTENS1"). Used for feature
/// caches; a JSON sidecar carries the metadata.
void write_tensors(const std::filesystem::path& path, const std::vector<ag::Mat>& mats);
std::vector<ag::Mat> read_tensors(const std::filesystem::path& path);

/// Named parameter file ("VCPARAM1"), written in store order.
void save_params(const ag::ParamStore<float>& store, const std::filesystem::path& path);

/// Loads values by name. Every stored name must exist with the same shape and
/// every store parameter must be present in the file; otherwise ConfigError.
void load_params(ag::ParamStore<float>& store, const std::filesystem::path& path);

}  // namespace voicectl
