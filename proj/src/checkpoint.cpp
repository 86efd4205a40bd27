#include "gridword/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace gridword {

namespace {

constexpr char kMagic[] = "GRIDWORD-CKPT-V1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw VersionError("checkpoint truncated");
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw VersionError("checkpoint truncated");
    return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u64(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
}

}  // namespace

TensorPtr Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, static_cast<std::streamsize>(kMagicLen));
    write_u32(os, static_cast<std::uint32_t>(config_text.size()));
    os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    write_u32(os, static_cast<std::uint32_t>(store.params().size() + store.buffers().size()));
    for (const auto& [name, t] : store.params()) write_tensor(os, name, *t);
    for (const auto& [name, t] : store.buffers()) write_tensor(os, name, *t);
    if (!os) throw IoError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[kMagicLen];
    is.read(magic, static_cast<std::streamsize>(kMagicLen));
    if (!is || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw VersionError("not a recognized checkpoint file: " + path);

    Checkpoint ckpt;
    const std::uint32_t cfg_len = read_u32(is);
    ckpt.config_text.resize(cfg_len);
    is.read(ckpt.config_text.data(), cfg_len);
    if (!is) throw VersionError("checkpoint truncated");

    const std::uint32_t count = read_u32(is);
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw VersionError("checkpoint truncated");
        const std::uint32_t ndim = read_u32(is);
        if (ndim != 2) throw VersionError("unsupported tensor rank in checkpoint");
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_u64(is));
        std::vector<double> data(static_cast<std::size_t>(shape_size(shape)));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) throw VersionError("checkpoint truncated");
        ckpt.tensors.emplace_back(name, Tensor::from(std::move(data), shape));
    }
    return ckpt;
}

void load_into_store(const Checkpoint& ckpt, ParamStore& store) {
    const std::size_t expected = store.params().size() + store.buffers().size();
    if (ckpt.tensors.size() != expected)
        throw VersionError("checkpoint tensor count does not match model");
    auto copy_into = [&](const std::string& name, const TensorPtr& dst) {
        TensorPtr src = ckpt.find(name);
        if (!src) throw VersionError("checkpoint missing tensor: " + name);
        if (src->shape != dst->shape) throw VersionError("shape mismatch for tensor: " + name);
        dst->values = src->values;
    };
    for (const auto& [name, t] : store.params()) copy_into(name, t);
    for (const auto& [name, t] : store.buffers()) copy_into(name, t);
}

}  // namespace gridword
