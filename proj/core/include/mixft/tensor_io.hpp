#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mixft::io {

/// Dense float64 tensor in row-major order, as stored on disk.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<double> data;

    std::size_t element_count() const;
};

// MXT1 layout (all little-endian):
//   bytes 0..3   magic "MXT1"
//   bytes 4..7   rank (u32)
//   then max(rank, 2) u32 dimension slots; unused slots are zero
//   then prod(shape) IEEE-754 float64 values
// Rank <= 2 therefore always gives a 16-byte header.
inline constexpr char kTensorMagic[4] = {'M', 'X', 'T', '1'};

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

Tensor from_matrix(const Eigen::MatrixXd& m);
Tensor from_vector(const Eigen::VectorXd& v);
Tensor from_values(std::span<const double> values);
Eigen::MatrixXd to_matrix(const Tensor& t);
Eigen::VectorXd to_vector(const Tensor& t);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(std::span<const std::uint8_t> bytes);
std::string sha256_text(const std::string& text);

} // namespace mixft::io
