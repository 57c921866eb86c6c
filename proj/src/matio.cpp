#include "pivotcap/matio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "pivotcap/error.hpp"

namespace pivotcap {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw_error(ErrorCategory::data, "truncated read of " + what);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
    const std::uint32_t n = read_u32(in, what + " length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw_error(ErrorCategory::data, "truncated read of " + what);
    return s;
}

namespace {
constexpr char kMagic[4] = {'P', 'C', 'M', 'X'};
}

void write_matrix(std::ostream& out, const Eigen::MatrixXf& m) {
    out.write(kMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    // row-major payload
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const float v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
}

void write_matrix_file(const std::string& path, const Eigen::MatrixXf& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    write_matrix(out, m);
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

Eigen::MatrixXf read_matrix(std::istream& in, const std::string& what) {
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw_error(ErrorCategory::data, "bad matrix magic in " + what);
    const std::uint32_t rows = read_u32(in, what + " rows");
    const std::uint32_t cols = read_u32(in, what + " cols");
    Eigen::MatrixXf m(rows, cols);
    std::vector<float> row(cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(cols * sizeof(float)));
        if (!in) throw_error(ErrorCategory::data, "truncated matrix payload in " + what);
        for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = row[c];
    }
    return m;
}

Eigen::MatrixXf read_matrix_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    return read_matrix(in, path);
}

const char* error_category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::argument: return "argument";
        case ErrorCategory::config: return "config";
        case ErrorCategory::io: return "io";
        case ErrorCategory::data: return "data";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::contract: return "contract";
        case ErrorCategory::state: return "state";
    }
    return "unknown";
}

} // namespace pivotcap
