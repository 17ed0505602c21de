#pragma once

// SSMP checkpoint container: little-endian byte layout
//   magic "SSMP" | version u32 | tensor records until EOF
// each record:
//   name_len u32 | name bytes (UTF-8) | rank u32 | dims u64[rank] | data f64[prod(dims)]
// Round trips are bit-exact: doubles are written verbatim.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "msid/common.hpp"
#include "msid/tensor.hpp"

namespace msid {

inline constexpr std::uint32_t kSsmpVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw io_error("unexpected end of file");
    return value;
}

}  // namespace detail

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

inline void save_ssmp(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + path);
    os.write("SSMP", 4);
    detail::write_pod<std::uint32_t>(os, kSsmpVersion);
    for (const auto& [name, t] : tensors) {
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) detail::write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw io_error("write failed: " + path);
}

inline std::vector<NamedTensor> load_ssmp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SSMP", 4) != 0) throw io_error("not an SSMP file: " + path);
    const auto version = detail::read_pod<std::uint32_t>(is);
    if (version != kSsmpVersion) throw io_error("unsupported SSMP version " + std::to_string(version));
    std::vector<NamedTensor> out;
    while (true) {
        std::uint32_t name_len = 0;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is) throw io_error("corrupt SSMP record: " + path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = detail::read_pod<std::uint32_t>(is);
        std::vector<std::size_t> shape(rank);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is));
            count *= d;
        }
        std::vector<double> data(rank == 0 ? 0 : count);
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) throw io_error("corrupt SSMP tensor data: " + path);
        out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return out;
}

}  // namespace msid
