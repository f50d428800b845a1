#include "deconv/sample_io.hpp"

#include <array>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deconv/error.hpp"

namespace deconv {
namespace {

constexpr std::array<char, 4> kMagic{'D', 'C', 'N', 'V'};

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == ';' || c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        auto b = f.find_first_not_of(' ');
        auto e = f.find_last_not_of(' ');
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    errno = 0;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return errno == 0 && end == s.c_str() + s.size();
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

}  // namespace

Sample read_sample_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open sample file '" + path + "'");
    std::vector<double> values;
    std::size_t d = 0;
    std::string line;
    std::size_t lineno = 0;
    bool first_content = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_fields(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (std::size_t j = 0; j < fields.size(); ++j) numeric = numeric && parse_double(fields[j], row[j]);
        if (!numeric) {
            if (first_content) {  // header
                first_content = false;
                d = fields.size();
                continue;
            }
            throw ValidationError(path + ":" + std::to_string(lineno) + ": non-numeric field");
        }
        if (d == 0) d = row.size();
        if (row.size() != d)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d) +
                                  " columns, found " + std::to_string(row.size()));
        first_content = false;
        values.insert(values.end(), row.begin(), row.end());
    }
    if (values.empty()) throw ValidationError("sample file '" + path + "' contains no observations");
    return Sample(d, std::move(values));
}

void write_sample_csv(const std::string& path, const Sample& sample) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < sample.size(); ++i) {
        for (std::size_t j = 0; j < sample.dim(); ++j)
            std::fprintf(f, j ? ",%.17g" : "%.17g", sample.at(i, j));
        std::fputc('\n', f);
    }
    if (std::fclose(f) != 0) throw IoError("error closing '" + path + "'");
}

Sample read_sample_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open sample file '" + path + "'");
    unsigned char header[16];
    if (!in.read(reinterpret_cast<char*>(header), 16)) throw IoError("truncated header in '" + path + "'");
    if (std::memcmp(header, kMagic.data(), 4) != 0) throw ValidationError("'" + path + "' is not a DCNV file");
    const std::uint32_t n = get_u32(header + 4);
    const std::uint32_t d = get_u32(header + 8);
    if (n == 0 || d == 0) throw ValidationError("DCNV file declares an empty sample");
    std::vector<double> col(static_cast<std::size_t>(n) * d);
    if (!in.read(reinterpret_cast<char*>(col.data()), static_cast<std::streamsize>(col.size() * 8)))
        throw IoError("truncated payload in '" + path + "'");
    std::vector<double> rows(col.size());
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < n; ++i) rows[i * d + j] = col[j * n + i];
    return Sample(d, std::move(rows));
}

void write_sample_binary(const std::string& path, const Sample& sample) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(kMagic.data(), 4);
    put_u32(out, static_cast<std::uint32_t>(sample.size()));
    put_u32(out, static_cast<std::uint32_t>(sample.dim()));
    put_u32(out, 0);
    for (std::size_t j = 0; j < sample.dim(); ++j)
        for (std::size_t i = 0; i < sample.size(); ++i) {
            double v = sample.at(i, j);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
    if (!out) throw IoError("error writing '" + path + "'");
}

Sample read_sample(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open sample file '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kMagic.data(), 4) == 0) return read_sample_binary(path);
    return read_sample_csv(path);
}

}  // namespace deconv
