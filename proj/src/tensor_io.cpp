#include "mdc/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mdc {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
    if (offset + 4 > in.size()) throw Error("tensor file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
    std::vector<std::uint8_t> out;
    out.reserve(4 * (1 + tensor.rank() + tensor.size()));
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
    const std::uint32_t rank = get_u32(bytes, 0);
    if (rank == 0 || rank > 8) throw Error("tensor file: unsupported rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t offset = 4;
    for (auto& e : shape) {
        e = get_u32(bytes, offset);
        offset += 4;
    }
    const std::size_t count = shape_numel(shape);
    if (bytes.size() != offset + 4 * count) {
        throw Error("tensor file: payload is " + std::to_string(bytes.size() - offset) + " bytes, shape " +
                    shape_string(shape) + " needs " + std::to_string(4 * count));
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i, offset += 4) data[i] = std::bit_cast<float>(get_u32(bytes, offset));
    return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
    write_file_bytes(path, encode_tensor(tensor));
}

Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file_bytes(path)); }

}  // namespace mdc
