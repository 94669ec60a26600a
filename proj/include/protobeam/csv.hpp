#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "protobeam/errors.hpp"
#include "protobeam/version.hpp"

namespace protobeam {

// Writes via a temp file in the same directory plus rename, so interrupted
// runs never leave truncated outputs behind.
inline void atomic_write_text(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path())
        fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError("atomic_write_text: cannot open '" + tmp.string() + "'");
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        f.flush();
        if (!f)
            throw IoError("atomic_write_text: write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec)
        throw IoError("atomic_write_text: rename to '" + path + "' failed: " + ec.message());
}

inline std::string csv_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string csv_comment(std::uint64_t seed) {
    return "# protobeam " + std::string(kVersion) + " seed=" + std::to_string(seed) + "\n";
}

inline void write_csv(const std::string& path, std::uint64_t seed,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::string out = csv_comment(seed);
    for (std::size_t i = 0; i < header.size(); ++i) {
        out += header[i];
        out += (i + 1 < header.size()) ? "," : "\n";
    }
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out += row[i];
            out += (i + 1 < row.size()) ? "," : "\n";
        }
    }
    atomic_write_text(path, out);
}

} // namespace protobeam
