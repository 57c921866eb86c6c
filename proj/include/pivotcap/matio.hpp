#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>

namespace pivotcap {

// Binary matrix container shared by visual-feature files and the keyword
// index payload: magic "PCMX", u32 rows, u32 cols, then rows*cols float32,
// row-major, all little-endian.
void write_matrix(std::ostream& out, const Eigen::MatrixXf& m);
void write_matrix_file(const std::string& path, const Eigen::MatrixXf& m);

Eigen::MatrixXf read_matrix(std::istream& in, const std::string& what);
Eigen::MatrixXf read_matrix_file(const std::string& path);

// Little-endian scalar helpers used by every binary format in the project.
void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in, const std::string& what);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in, const std::string& what);

} // namespace pivotcap
