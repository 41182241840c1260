#include "evocollapse/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace evocollapse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    return v;
}

const Tensor<float>& tensor_by_name(const Model& m, const std::string& name) {
    if (name == "embedding") return m.embedding;
    if (name == "final_norm") return m.final_norm;
    if (name == "lm_head") return m.lm_head;
    // layers.{i}.{field}
    const auto dot = name.find('.', 7);
    const auto i = std::stoul(name.substr(7, dot - 7));
    const auto field = name.substr(dot + 1);
    for (const auto& [fname, ptr] : layer_fields<float>())
        if (fname == field) return m.layers[i].*ptr;
    fail(ErrorClass::MissingTensor, "unknown tensor name " + name);
}

Tensor<float>& tensor_by_name(Model& m, const std::string& name) {
    return const_cast<Tensor<float>&>(tensor_by_name(static_cast<const Model&>(m), name));
}

struct IndexEntry {
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::string file;
};

}  // namespace

std::vector<std::string> tensor_names(Index n_layers) {
    std::vector<std::string> names{"embedding"};
    for (Index i = 0; i < n_layers; ++i)
        for (const auto& [field, ptr] : layer_fields<float>())
            names.push_back("layers." + std::to_string(i) + "." + std::string(field));
    names.emplace_back("final_norm");
    names.emplace_back("lm_head");
    return names;
}

void save_checkpoint(const Model& model, const fs::path& dir) {
    validate_shapes(model);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorClass::Io, "cannot create checkpoint directory " + dir.string() + ": " + ec.message());

    std::ofstream bin(dir / kWeightsName, std::ios::binary | std::ios::trunc);
    if (!bin) fail(ErrorClass::Io, "cannot write " + (dir / kWeightsName).string());

    const auto& c = model.config;
    json manifest = {{"format", "evocollapse-checkpoint"},
                     {"version", 1},
                     {"n_layers", c.n_layers},
                     {"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},
                     {"vocab_size", c.vocab_size},
                     {"max_seq_len", c.max_seq_len},
                     {"rope_theta", c.rope_theta},
                     {"rms_eps", c.rms_eps}};
    json index = json::array();
    std::uint64_t offset = 0;
    std::vector<std::uint32_t> buf;
    for (const auto& name : tensor_names(model.n_layers())) {
        const auto& t = tensor_by_name(model, name);
        buf.resize(t.data().size());
        std::memcpy(buf.data(), t.data().data(), t.data().size_bytes());
        for (auto& w : buf) w = to_little(w);
        bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
        const std::uint64_t length = buf.size() * 4;
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"length", length},
                         {"file", kWeightsName}});
        offset += length;
    }
    if (!bin) fail(ErrorClass::Io, "short write to " + (dir / kWeightsName).string());
    manifest["tensors"] = std::move(index);

    std::ofstream out(dir / kManifestName, std::ios::trunc);
    if (!out) fail(ErrorClass::Io, "cannot write " + (dir / kManifestName).string());
    out << manifest.dump(2) << "\n";
    if (!out) fail(ErrorClass::Io, "short write to " + (dir / kManifestName).string());
}

Model load_checkpoint(const fs::path& dir) {
    const fs::path manifest_path = dir / kManifestName;
    std::ifstream in(manifest_path);
    if (!in) fail(ErrorClass::Io, "cannot read " + manifest_path.string());

    json manifest;
    ModelConfig c;
    std::map<std::string, IndexEntry> index;
    try {
        manifest = json::parse(in);
        c.n_layers = manifest.at("n_layers").get<Index>();
        c.d_model = manifest.at("d_model").get<Index>();
        c.n_heads = manifest.at("n_heads").get<Index>();
        c.d_ff = manifest.at("d_ff").get<Index>();
        c.vocab_size = manifest.at("vocab_size").get<Index>();
        c.max_seq_len = manifest.at("max_seq_len").get<Index>();
        c.rope_theta = manifest.at("rope_theta").get<double>();
        c.rms_eps = manifest.at("rms_eps").get<double>();
        for (const auto& e : manifest.at("tensors")) {
            IndexEntry entry{e.at("shape").get<Shape>(), e.at("offset").get<std::uint64_t>(),
                             e.at("length").get<std::uint64_t>(), e.at("file").get<std::string>()};
            index.emplace(e.at("name").get<std::string>(), std::move(entry));
        }
    } catch (const json::exception& ex) {
        fail(ErrorClass::Io, "malformed manifest " + manifest_path.string() + ": " + ex.what());
    }
    c.validate();

    Model m;
    m.config = c;
    m.embedding = Tensor<float>::matrix(c.vocab_size, c.d_model);
    m.layers.assign(static_cast<std::size_t>(c.n_layers), LayerWeights<float>::zeros(c));
    m.final_norm = Tensor<float>::vector(c.d_model);
    m.lm_head = Tensor<float>::matrix(c.vocab_size, c.d_model);

    std::map<std::string, std::ifstream> files;
    std::vector<std::uint32_t> buf;
    for (const auto& name : tensor_names(c.n_layers)) {
        const auto it = index.find(name);
        if (it == index.end()) fail(ErrorClass::MissingTensor, "missing tensor " + name + " in " + manifest_path.string());
        const IndexEntry& e = it->second;
        auto& t = tensor_by_name(m, name);
        if (e.shape != t.shape())
            fail(ErrorClass::ShapeMismatch, "tensor " + name + ": manifest shape " + shape_string(e.shape) +
                                                " does not match config shape " + shape_string(t.shape()));
        if (e.length != t.data().size_bytes())
            fail(ErrorClass::ShapeMismatch, "tensor " + name + ": byte length " + std::to_string(e.length) +
                                                " does not match shape " + shape_string(t.shape()));

        const fs::path file = dir / e.file;
        auto [fit, inserted] = files.try_emplace(e.file);
        if (inserted) {
            if (!fs::exists(file)) fail(ErrorClass::MissingTensor, "missing tensor file " + file.string());
            fit->second.open(file, std::ios::binary);
            if (!fit->second) fail(ErrorClass::Io, "cannot read " + file.string());
        }
        if (fs::file_size(file) < e.offset + e.length)
            fail(ErrorClass::MissingTensor, "tensor " + name + " extends past the end of " + file.string());
        auto& stream = fit->second;
        buf.resize(t.data().size());
        stream.seekg(static_cast<std::streamoff>(e.offset));
        stream.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(e.length));
        if (!stream) fail(ErrorClass::Io, "short read of tensor " + name + " from " + file.string());
        for (auto& w : buf) w = to_little(w);
        std::memcpy(t.data().data(), buf.data(), e.length);
        if (!t.all_finite()) fail(ErrorClass::NonFinite, "tensor " + name + " contains non-finite values");
    }
    return m;
}

}  // namespace evocollapse
