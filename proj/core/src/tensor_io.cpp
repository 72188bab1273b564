#include "mixft/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "mixft/errors.hpp"

namespace mixft::io {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
    }
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
    }
    return v;
}

double get_f64(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
    }
    return std::bit_cast<double>(v);
}

std::size_t header_size(std::uint32_t rank) {
    return 8 + 4 * static_cast<std::size_t>(std::max<std::uint32_t>(rank, 2));
}

} // namespace

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
    if (tensor.element_count() != tensor.data.size()) {
        throw DataError("tensor shape does not match its element count");
    }
    const auto rank = static_cast<std::uint32_t>(tensor.shape.size());
    std::vector<std::uint8_t> out;
    out.reserve(header_size(rank) + 8 * tensor.data.size());
    out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
    put_u32(out, rank);
    for (std::uint32_t i = 0; i < std::max<std::uint32_t>(rank, 2); ++i) {
        put_u32(out, i < rank ? tensor.shape[i] : 0);
    }
    for (double d : tensor.data) {
        put_f64(out, d);
    }
    return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
        throw DataError("not an MXT1 tensor (bad magic or truncated header)");
    }
    const std::uint32_t rank = get_u32(bytes, 4);
    if (rank > 16) {
        throw DataError("MXT1 tensor rank " + std::to_string(rank) + " is out of range");
    }
    const std::size_t hdr = header_size(rank);
    if (bytes.size() < hdr) {
        throw DataError("truncated MXT1 header");
    }
    Tensor t;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.shape.push_back(get_u32(bytes, 8 + 4 * i));
    }
    const std::size_t n = t.element_count();
    if (bytes.size() != hdr + 8 * n) {
        throw DataError("MXT1 payload size " + std::to_string(bytes.size() - hdr) + " does not match shape (" +
                        std::to_string(8 * n) + " bytes expected)");
    }
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.data[i] = get_f64(bytes, hdr + 8 * i);
    }
    return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    const auto bytes = encode_tensor(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

namespace {
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
} // namespace

Tensor read_tensor(const std::filesystem::path& path) {
    try {
        return decode_tensor(slurp(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

Tensor from_matrix(const Eigen::MatrixXd& m) {
    Tensor t;
    t.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            t.data.push_back(m(r, c));
        }
    }
    return t;
}

Tensor from_vector(const Eigen::VectorXd& v) {
    return from_values(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Tensor from_values(std::span<const double> values) {
    Tensor t;
    t.shape = {static_cast<std::uint32_t>(values.size())};
    t.data.assign(values.begin(), values.end());
    return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
    if (t.shape.size() != 2) {
        throw DataError("expected a rank-2 tensor, got rank " + std::to_string(t.shape.size()));
    }
    Eigen::MatrixXd m(t.shape[0], t.shape[1]);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = t.data[i++];
        }
    }
    return m;
}

Eigen::VectorXd to_vector(const Tensor& t) {
    if (t.shape.size() != 1) {
        throw DataError("expected a rank-1 tensor, got rank " + std::to_string(t.shape.size()));
    }
    return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

std::string sha256_bytes(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw DataError("SHA-256 computation failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) {
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return os.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_bytes(slurp(path)); }

std::string sha256_text(const std::string& text) {
    return sha256_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace mixft::io
