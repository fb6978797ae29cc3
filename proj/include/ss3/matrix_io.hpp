#pragma once

#include <filesystem>

#include "ss3/linalg.hpp"

namespace ss3 {

Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

// Binary layout: "SSSM1", u64 rows, u64 cols, little-endian f64 row-major.
Matrix read_matrix_binary(const std::filesystem::path& path);
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);

/// Dispatches on the magic bytes; anything else is parsed as CSV.
Matrix read_matrix(const std::filesystem::path& path);

}  // namespace ss3
