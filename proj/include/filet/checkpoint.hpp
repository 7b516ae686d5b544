#pragma once

#include "filet/dense.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace filet {

// One named tensor inside a FILT file. Data is held as doubles in memory;
// dtype 1 truncates to 32-bit floats on disk, dtype 2 stores doubles.
struct Tensor {
    std::string name;
    std::uint32_t dtype = 2;  // 1 = f32, 2 = f64
    std::vector<std::uint64_t> dims;
    std::vector<double> data;  // row-major
};

inline constexpr std::uint32_t kFiletFormatVersion = 1;

/// Writes a FILT file: magic "FILT", version, tensor count, then per tensor
/// name, dtype, dims, and a row-major little-endian payload.
void write_checkpoint(const std::string& path, const std::vector<Tensor>& tensors);

std::vector<Tensor> read_checkpoint(const std::string& path);

Tensor tensor_from_matrix(const std::string& name, const Matrix& m);
Tensor tensor_scalar(const std::string& name, double value);
Tensor tensor_from_indices(const std::string& name, const std::vector<Index>& indices);

Matrix matrix_from_tensor(const Tensor& t);
double scalar_from_tensor(const Tensor& t);
std::vector<Index> indices_from_tensor(const Tensor& t);

/// Finds a tensor by name; missing names are an error.
const Tensor& find_tensor(const std::vector<Tensor>& tensors, const std::string& name);
bool has_tensor(const std::vector<Tensor>& tensors, const std::string& name);

}  // namespace filet
