#include "ccast/ckpt.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ccast {

namespace {

constexpr char k_magic[4] = {'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& data, std::size_t& pos, const std::string& path) {
    if (pos + sizeof(T) > data.size()) {
        throw DataError("ckpt: truncated file " + path);
    }
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

void save_ckpt(const std::string& path, const std::map<std::string, Tensor>& entries) {
    std::string buf;
    buf.append(k_magic, 4);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) put<std::uint64_t>(buf, d);
        buf.append(reinterpret_cast<const char*>(tensor.values().data()),
                   tensor.numel() * sizeof(double));
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("ckpt: cannot open for write: " + path);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw DataError("ckpt: write failed: " + path);
}

std::map<std::string, Tensor> load_ckpt(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("ckpt: cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string data = ss.str();

    std::size_t pos = 0;
    if (data.size() < 4 || std::memcmp(data.data(), k_magic, 4) != 0) {
        throw DataError("ckpt: bad magic in " + path);
    }
    pos = 4;
    auto count = take<std::uint32_t>(data, pos, path);
    std::map<std::string, Tensor> entries;
    for (std::uint32_t e = 0; e < count; ++e) {
        auto name_len = take<std::uint32_t>(data, pos, path);
        if (pos + name_len > data.size()) throw DataError("ckpt: truncated file " + path);
        std::string name = data.substr(pos, name_len);
        pos += name_len;
        auto rank = take<std::uint32_t>(data, pos, path);
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::size_t>(take<std::uint64_t>(data, pos, path));
            numel *= shape[d];
        }
        if (pos + numel * sizeof(double) > data.size()) {
            throw DataError("ckpt: truncated file " + path);
        }
        std::vector<double> values(numel);
        std::memcpy(values.data(), data.data() + pos, numel * sizeof(double));
        pos += numel * sizeof(double);
        entries.emplace(std::move(name),
                        Tensor::from_values(std::move(shape), std::move(values)));
    }
    return entries;
}

}  // namespace ccast
