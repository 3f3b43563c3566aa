#include "zoomiq/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "zoomiq/errors.hpp"

namespace zoomiq::training {

namespace {

// Little-endian scalar IO, explicit about byte order regardless of host.
template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32_le(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_le<std::uint32_t>(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::filesystem::path& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw DataError("truncated checkpoint '" + path.string() + "' at offset " +
                            std::to_string(pos));
    }
    template <typename U>
    U get_le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= U(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += sizeof(U);
        return v;
    }
    float get_f32_le() {
        const std::uint32_t bits = get_le<std::uint32_t>();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    put_le<std::uint32_t>(out, ckpt.version);
    const std::string meta = ckpt.meta.dump(); // nlohmann orders keys, so the dump is canonical
    put_le<std::uint32_t>(out, std::uint32_t(meta.size()));
    out += meta;
    put_le<std::uint32_t>(out, std::uint32_t(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.size() > 0xffff) throw ContractViolation("tensor name too long");
        put_le<std::uint16_t>(out, std::uint16_t(name.size()));
        out += name;
        out.push_back(char(t->rank()));
        for (int d : t->shape) put_le<std::uint32_t>(out, std::uint32_t(d));
        for (float v : t->values) put_f32_le(out, v);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint '" + path.string() + "'");
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path.string() + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf, 0, path};
    const std::string magic = r.get_bytes(4);
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
        throw DataError("bad magic in checkpoint '" + path.string() + "' at offset 0");
    Checkpoint ckpt;
    ckpt.version = r.get_le<std::uint32_t>();
    if (ckpt.version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in '" +
                        path.string() + "' at offset 4");
    const auto meta_len = r.get_le<std::uint32_t>();
    const std::string meta = r.get_bytes(meta_len);
    try {
        ckpt.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad checkpoint metadata in '" + path.string() + "': " + e.what());
    }
    const auto count = r.get_le<std::uint32_t>();
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get_le<std::uint16_t>();
        std::string name = r.get_bytes(name_len);
        r.need(1);
        const int rank = int(std::uint8_t(buf[r.pos]));
        r.pos += 1;
        if (rank > 8)
            throw DataError("implausible tensor rank in '" + path.string() + "' at offset " +
                            std::to_string(r.pos - 1));
        std::vector<int> shape;
        std::int64_t numel = 1;
        for (int k = 0; k < rank; ++k) {
            const auto dim = r.get_le<std::uint32_t>();
            if (dim == 0 || dim > (1u << 28))
                throw DataError("implausible tensor dimension in '" + path.string() + "' at offset " +
                                std::to_string(r.pos - 4));
            shape.push_back(int(dim));
            numel *= int(dim);
        }
        const std::size_t nvalues = std::size_t(numel);
        std::vector<float> values(nvalues);
        for (auto& v : values) v = r.get_f32_le();
        ckpt.tensors.emplace_back(std::move(name), nd::Tensor::from(std::move(shape), std::move(values)));
    }
    if (r.pos != buf.size())
        throw DataError("trailing bytes in checkpoint '" + path.string() + "' at offset " +
                        std::to_string(r.pos));
    return ckpt;
}

nlohmann::json registry_to_json(const aug::ZoomRegistry& registry) {
    nlohmann::json specs = nlohmann::json::array();
    for (const auto& s : registry.specs) {
        nlohmann::json j;
        j["name"] = s.name;
        if (s.resize) j["resize"] = *s.resize;
        if (s.crop) j["crop"] = *s.crop;
        specs.push_back(std::move(j));
    }
    return nlohmann::json{{"name", registry.name}, {"specs", std::move(specs)}};
}

aug::ZoomRegistry registry_from_json(const nlohmann::json& j) {
    std::vector<aug::ZoomSpec> specs;
    for (const auto& s : j.at("specs")) {
        aug::ZoomSpec spec;
        spec.name = s.at("name").get<std::string>();
        if (s.contains("resize")) spec.resize = s.at("resize").get<int>();
        if (s.contains("crop")) spec.crop = s.at("crop").get<int>();
        specs.push_back(std::move(spec));
    }
    return aug::make_registry(j.at("name").get<std::string>(), std::move(specs));
}

nlohmann::json backbone_to_json(const net::BackboneConfig& cfg) {
    return nlohmann::json{
        {"stem_channels", cfg.stem_channels}, {"num_blocks", cfg.num_blocks}, {"embed_dim", cfg.embed_dim}};
}

net::BackboneConfig backbone_from_json(const nlohmann::json& j) {
    net::BackboneConfig cfg;
    cfg.stem_channels = j.at("stem_channels").get<int>();
    cfg.num_blocks = j.at("num_blocks").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    return cfg;
}

aug::ZoomRegistry registry_from_checkpoint(const Checkpoint& ckpt) {
    try {
        return registry_from_json(ckpt.meta.at("registry"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint metadata missing registry: ") + e.what());
    }
}

net::Model model_from_checkpoint(const Checkpoint& ckpt) {
    net::BackboneConfig cfg;
    int num_heads = 0;
    try {
        cfg = backbone_from_json(ckpt.meta.at("backbone"));
        num_heads = int(ckpt.meta.at("registry").at("specs").size());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint metadata missing model configuration: ") + e.what());
    }
    auto model = net::init_model<float>(cfg, num_heads, 0);
    auto named = model.named_parameters();
    if (named.size() != ckpt.tensors.size())
        throw DataError("checkpoint tensor count " + std::to_string(ckpt.tensors.size()) +
                        " does not match model (" + std::to_string(named.size()) + ")");
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [want_name, param] = named[i];
        const auto& [have_name, tensor] = ckpt.tensors[i];
        if (want_name != have_name)
            throw DataError("checkpoint tensor '" + have_name + "' where '" + want_name + "' expected");
        if (tensor->shape != param->shape)
            throw DataError("checkpoint tensor '" + have_name + "' has wrong shape");
        param->values = tensor->values;
    }
    return model;
}

} // namespace zoomiq::training
