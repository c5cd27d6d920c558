#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "prunelab/archzoo.hpp"
#include "prunelab/net.hpp"

namespace prunelab {

enum class CheckpointErrorCode { IoError, Malformed, VersionMismatch, Truncated, ChecksumMismatch };

class CheckpointError : public std::runtime_error {
public:
    CheckpointError(CheckpointErrorCode c, const std::string& msg)
        : std::runtime_error(msg), code(c) {}
    CheckpointErrorCode code;
};

struct CheckpointMeta {
    int version = 1;
    std::optional<ArchSpec> arch;  // the originating spec, informational
    double lambda = 0.0;
    int epochs = 0;
    double final_accuracy = 0.0;
    uint64_t seed = 0;
    nlohmann::json extra;  // dataset spec, training notes
};

// Writes <base>.json (manifest: format version, arch, structure, tensor
// records with byte offsets, metadata, whole-blob checksum) and <base>.bin
// (raw little-endian float32, state_tensors order). Round-trips reproduce
// bitwise-identical eval logits.
void save_checkpoint(const Network<float>& net, const CheckpointMeta& meta,
                     const std::string& base_path);

std::pair<Network<float>, CheckpointMeta> load_checkpoint(const std::string& base_path);

// structure (de)serialization shared with the manifest format
nlohmann::json network_structure_json(const Network<float>& net);
Network<float> network_from_structure_json(const nlohmann::json& j);

nlohmann::json archspec_to_json(const ArchSpec& s);
ArchSpec archspec_from_json(const nlohmann::json& j);

}  // namespace prunelab
