#include "prunelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "prunelab/util.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

namespace prunelab {

namespace {

using nlohmann::json;

json layer_to_json(const Layer<float>& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    j["name"] = l.name;
    j["input0"] = l.input0;
    j["input1"] = l.input1;
    j["channel_group"] = l.channel_group;
    j["prunable"] = l.prunable;
    switch (l.kind) {
        case LayerKind::Conv:
            j["in_ch"] = l.in_ch;
            j["out_ch"] = l.out_ch;
            j["kh"] = l.kh;
            j["kw"] = l.kw;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            j["groups"] = l.groups;
            break;
        case LayerKind::Dense:
            j["in_ch"] = l.in_ch;
            j["out_ch"] = l.out_ch;
            break;
        case LayerKind::BatchNorm:
            j["channels"] = l.gamma.size();
            j["eps"] = l.eps;
            j["momentum"] = l.momentum;
            break;
        case LayerKind::MaxPool:
            j["pool_k"] = l.pool_k;
            j["pool_stride"] = l.pool_stride;
            break;
        default:
            break;
    }
    return j;
}

LayerKind kind_from_name(const std::string& s) {
    for (LayerKind k : {LayerKind::Input, LayerKind::Conv, LayerKind::BatchNorm, LayerKind::ReLU,
                        LayerKind::MaxPool, LayerKind::GlobalAvgPool, LayerKind::Dense,
                        LayerKind::Add})
        if (s == layer_kind_name(k)) return k;
    throw CheckpointError(CheckpointErrorCode::Malformed, "unknown layer kind: " + s);
}

Layer<float> layer_from_json(const json& j) {
    Layer<float> l;
    l.kind = kind_from_name(j.at("kind").get<std::string>());
    l.name = j.at("name").get<std::string>();
    l.input0 = j.at("input0").get<int>();
    l.input1 = j.at("input1").get<int>();
    l.channel_group = j.at("channel_group").get<int>();
    l.prunable = j.at("prunable").get<bool>();
    switch (l.kind) {
        case LayerKind::Conv: {
            l.in_ch = j.at("in_ch").get<int>();
            l.out_ch = j.at("out_ch").get<int>();
            l.kh = j.at("kh").get<int>();
            l.kw = j.at("kw").get<int>();
            l.stride = j.at("stride").get<int>();
            l.pad = j.at("pad").get<int>();
            l.groups = j.at("groups").get<int>();
            l.w = TensorF({l.out_ch, l.in_ch / l.groups, l.kh, l.kw});
            break;
        }
        case LayerKind::Dense: {
            l.in_ch = j.at("in_ch").get<int>();
            l.out_ch = j.at("out_ch").get<int>();
            l.w = TensorF({l.out_ch, l.in_ch});
            l.bias.assign(static_cast<size_t>(l.out_ch), 0.f);
            break;
        }
        case LayerKind::BatchNorm: {
            const size_t c = j.at("channels").get<size_t>();
            l.gamma.assign(c, 0.f);
            l.beta.assign(c, 0.f);
            l.running_mean.assign(c, 0.f);
            l.running_var.assign(c, 0.f);
            l.eps = j.at("eps").get<float>();
            l.momentum = j.at("momentum").get<float>();
            break;
        }
        case LayerKind::MaxPool:
            l.pool_k = j.at("pool_k").get<int>();
            l.pool_stride = j.at("pool_stride").get<int>();
            break;
        default:
            break;
    }
    return l;
}

}  // namespace

json network_structure_json(const Network<float>& net) {
    json j;
    j["in_ch"] = net.in_ch;
    j["in_h"] = net.in_h;
    j["in_w"] = net.in_w;
    j["num_classes"] = net.num_classes;
    j["layers"] = json::array();
    for (const auto& l : net.layers) j["layers"].push_back(layer_to_json(l));
    return j;
}

Network<float> network_from_structure_json(const json& j) {
    Network<float> net;
    try {
        net.in_ch = j.at("in_ch").get<int>();
        net.in_h = j.at("in_h").get<int>();
        net.in_w = j.at("in_w").get<int>();
        net.num_classes = j.at("num_classes").get<int>();
        for (const auto& lj : j.at("layers")) net.layers.push_back(layer_from_json(lj));
    } catch (const json::exception& e) {
        throw CheckpointError(CheckpointErrorCode::Malformed,
                              std::string("bad structure json: ") + e.what());
    }
    return net;
}

json archspec_to_json(const ArchSpec& s) {
    json j;
    j["family"] = family_name(s.family);
    j["depth"] = s.depth;
    j["width_multiplier"] = s.width_multiplier;
    j["num_classes"] = s.num_classes;
    j["input_shape"] = {s.in_ch, s.mel_bands, s.frames};
    j["base_channels"] = s.base_channels;
    return j;
}

ArchSpec archspec_from_json(const json& j) {
    ArchSpec s;
    s.family = family_from_name(j.at("family").get<std::string>());
    s.depth = j.at("depth").get<int>();
    s.width_multiplier = j.at("width_multiplier").get<double>();
    s.num_classes = j.at("num_classes").get<int>();
    const auto& shape = j.at("input_shape");
    s.in_ch = shape.at(0).get<int>();
    s.mel_bands = shape.at(1).get<int>();
    s.frames = shape.at(2).get<int>();
    s.base_channels = j.at("base_channels").get<int>();
    return s;
}

void save_checkpoint(const Network<float>& net, const CheckpointMeta& meta,
                     const std::string& base_path) {
    auto& mutNet = const_cast<Network<float>&>(net);  // views only read
    auto views = state_tensors(mutNet);

    std::string blob;
    json tensors = json::array();
    for (const auto& v : views) {
        json t;
        t["name"] = v.name;
        t["dtype"] = "f32";
        t["offset"] = blob.size();
        t["length"] = v.size;
        tensors.push_back(t);
        const size_t bytes = v.size * sizeof(float);
        const size_t at = blob.size();
        blob.resize(at + bytes);
        std::memcpy(blob.data() + at, v.data, bytes);
    }

    json manifest;
    manifest["format_version"] = meta.version;
    manifest["arch"] = meta.arch ? archspec_to_json(*meta.arch) : json(nullptr);
    manifest["structure"] = network_structure_json(net);
    manifest["tensors"] = tensors;
    manifest["metadata"] = {{"lambda", meta.lambda},
                            {"epochs", meta.epochs},
                            {"final_accuracy", meta.final_accuracy},
                            {"seed", meta.seed},
                            {"extra", meta.extra}};
    manifest["blob"] = {{"bytes", blob.size()},
                        {"fnv1a64", hex64(fnv1a64(blob.data(), blob.size()))}};

    write_file(base_path + ".bin", blob);
    write_file(base_path + ".json", manifest.dump(2));
}

std::pair<Network<float>, CheckpointMeta> load_checkpoint(const std::string& base_path) {
    std::string manifest_text, blob;
    try {
        manifest_text = read_file(base_path + ".json");
        blob = read_file(base_path + ".bin");
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointErrorCode::IoError, e.what());
    }

    json manifest;
    try {
        manifest = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw CheckpointError(CheckpointErrorCode::Malformed,
                              std::string("bad manifest json: ") + e.what());
    }

    const int version = manifest.value("format_version", -1);
    if (version != 1)
        throw CheckpointError(CheckpointErrorCode::VersionMismatch,
                              "unsupported checkpoint format version " +
                                  std::to_string(version));

    const auto& blob_info = manifest.at("blob");
    const size_t expect_bytes = blob_info.at("bytes").get<size_t>();
    if (blob.size() != expect_bytes)
        throw CheckpointError(CheckpointErrorCode::Truncated,
                              "blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
                                  std::to_string(expect_bytes));
    const std::string want_hash = blob_info.at("fnv1a64").get<std::string>();
    if (hex64(fnv1a64(blob.data(), blob.size())) != want_hash)
        throw CheckpointError(CheckpointErrorCode::ChecksumMismatch, "blob checksum mismatch");

    Network<float> net = network_from_structure_json(manifest.at("structure"));
    auto views = state_tensors(net);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != views.size())
        throw CheckpointError(CheckpointErrorCode::Malformed,
                              "tensor record count does not match structure");
    for (size_t i = 0; i < views.size(); ++i) {
        const auto& t = tensors.at(i);
        if (t.at("name").get<std::string>() != views[i].name)
            throw CheckpointError(CheckpointErrorCode::Malformed,
                                  "tensor order mismatch at " + views[i].name);
        const size_t offset = t.at("offset").get<size_t>();
        const size_t length = t.at("length").get<size_t>();
        if (length != views[i].size ||
            offset + length * sizeof(float) > blob.size())
            throw CheckpointError(CheckpointErrorCode::Malformed,
                                  "tensor record out of bounds: " + views[i].name);
        std::memcpy(views[i].data, blob.data() + offset, length * sizeof(float));
    }

    try {
        validate_graph(net);
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointErrorCode::Malformed, e.what());
    }

    CheckpointMeta meta;
    meta.version = version;
    if (!manifest.at("arch").is_null()) meta.arch = archspec_from_json(manifest.at("arch"));
    const auto& md = manifest.at("metadata");
    meta.lambda = md.at("lambda").get<double>();
    meta.epochs = md.at("epochs").get<int>();
    meta.final_accuracy = md.at("final_accuracy").get<double>();
    meta.seed = md.at("seed").get<uint64_t>();
    meta.extra = md.at("extra");
    return {std::move(net), std::move(meta)};
}

}  // namespace prunelab
