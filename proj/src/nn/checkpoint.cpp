#include "xlvin/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xlvin::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'X', 'L', 'V', 'C', 'K', 'P', 'T', '1'};

struct BlobWriter {
    std::string bytes;
    std::uint64_t append(const std::vector<Scalar>& v) {
        const std::uint64_t off = bytes.size();
        bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(Scalar));
        return off;
    }
};

std::vector<Scalar> read_array(const std::string& blob, std::uint64_t offset, std::size_t count,
                               const std::string& name) {
    const std::uint64_t nbytes = count * sizeof(Scalar);
    if (offset + nbytes > blob.size()) throw std::runtime_error("checkpoint truncated while reading " + name);
    std::vector<Scalar> v(count);
    std::memcpy(v.data(), blob.data() + offset, nbytes);
    return v;
}

} // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
    for (const auto& a : arrays)
        if (a.name.rfind(prefix, 0) == 0) return true;
    return false;
}

Checkpoint make_checkpoint(const ParamSet& params, const AdamState* adam, nlohmann::json metadata) {
    Checkpoint ck;
    for (const auto& p : params.items())
        ck.arrays.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}, p.trainable,
                             p.buffer});
    if (adam) ck.adam = *adam;
    ck.metadata = std::move(metadata);
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    BlobWriter blob;
    nlohmann::json manifest;
    manifest["format"] = "xlvin-checkpoint";
    manifest["version"] = 1;
    manifest["dtype"] = kScalarDtype;
    manifest["params"] = nlohmann::json::array();
    for (const auto& a : ckpt.arrays) {
        require(numel_of(a.shape) == a.data.size(), "checkpoint array " + a.name + " has inconsistent shape");
        manifest["params"].push_back({{"name", a.name},
                                      {"shape", a.shape},
                                      {"offset", blob.append(a.data)},
                                      {"trainable", a.trainable},
                                      {"buffer", a.buffer}});
    }
    if (ckpt.adam) {
        nlohmann::json moments = nlohmann::json::array();
        for (const auto& [name, m] : ckpt.adam->first_moment) {
            const auto& v = ckpt.adam->second_moment.at(name);
            moments.push_back({{"name", name},
                               {"length", m.size()},
                               {"first_offset", blob.append(m)},
                               {"second_offset", blob.append(v)}});
        }
        manifest["adam"] = {{"step", ckpt.adam->step}, {"moments", moments}};
    } else {
        manifest["adam"] = nullptr;
    }
    manifest["metadata"] = ckpt.metadata;

    const std::string text = manifest.dump();
    const std::uint64_t len = text.size();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("not an xlvin checkpoint: " + path);
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof len);
    if (16 + len > bytes.size()) throw std::runtime_error("checkpoint manifest truncated: " + path);
    const auto manifest = nlohmann::json::parse(bytes.substr(16, len));
    if (manifest.at("dtype").get<std::string>() != kScalarDtype)
        throw std::runtime_error("checkpoint dtype " + manifest.at("dtype").get<std::string>() +
                                 " does not match this build (" + kScalarDtype + ")");
    const std::string blob = bytes.substr(16 + len);

    Checkpoint ck;
    for (const auto& p : manifest.at("params")) {
        NamedArray a;
        a.name = p.at("name").get<std::string>();
        a.shape = p.at("shape").get<Shape>();
        a.trainable = p.at("trainable").get<bool>();
        a.buffer = p.value("buffer", false);
        a.data = read_array(blob, p.at("offset").get<std::uint64_t>(), numel_of(a.shape), a.name);
        ck.arrays.push_back(std::move(a));
    }
    if (!manifest.at("adam").is_null()) {
        AdamState st;
        st.step = manifest["adam"].at("step").get<std::uint64_t>();
        for (const auto& m : manifest["adam"].at("moments")) {
            const auto name = m.at("name").get<std::string>();
            const auto n = m.at("length").get<std::size_t>();
            st.first_moment[name] = read_array(blob, m.at("first_offset").get<std::uint64_t>(), n, name);
            st.second_moment[name] = read_array(blob, m.at("second_offset").get<std::uint64_t>(), n, name);
        }
        ck.adam = std::move(st);
    }
    ck.metadata = manifest.value("metadata", nlohmann::json::object());
    return ck;
}

void restore(const Checkpoint& ckpt, ParamSet& params, const std::string& prefix) {
    for (auto& p : params.items()) {
        if (p.name.rfind(prefix, 0) != 0) continue;
        const NamedArray* a = ckpt.find(p.name);
        if (!a) throw std::runtime_error("checkpoint has no parameter named " + p.name);
        if (a->shape != p.tensor.shape())
            throw std::runtime_error("checkpoint shape " + shape_str(a->shape) + " for " + p.name +
                                     " does not match model shape " + shape_str(p.tensor.shape()));
        auto dst = p.tensor.mutable_data();
        std::copy(a->data.begin(), a->data.end(), dst.begin());
    }
}

} // namespace xlvin::nn
