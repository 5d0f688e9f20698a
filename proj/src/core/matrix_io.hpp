#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace covdl {

// Binary container: "CVDL", u16 version, u32 rows, u32 cols, then rows*cols
// float64 values in row-major order. All integers and floats little-endian.
inline constexpr char kMatrixMagic[4] = {'C', 'V', 'D', 'L'};
inline constexpr std::uint16_t kMatrixVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 14;

void save_cvdl(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_cvdl(const std::string& path);

std::string encode_cvdl(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_cvdl(const std::string& bytes);

// Comma separated, one matrix row per line; doubles printed round-trippable.
void save_csv(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_csv(const std::string& path);

// Dispatch on extension: ".csv" is text, everything else is the binary format.
void save_matrix(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::string& path);

}  // namespace covdl
