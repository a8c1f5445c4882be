#pragma once

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "memwave/errors.hpp"

namespace memwave {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Read a comma-separated numeric table with the exact given header line.
inline std::vector<std::vector<double>> read_csv(const std::string& path,
                                                 const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw MalformedInput("'" + path + "': expected header '" + expected_header + "', got '" +
                             line + "'");
    std::size_t n_cols = static_cast<std::size_t>(std::count(expected_header.begin(),
                                                             expected_header.end(), ',')) + 1;
    std::vector<std::vector<double>> cols(n_cols);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            if (c >= n_cols)
                throw MalformedInput("'" + path + "' row " + std::to_string(row) +
                                     ": too many columns");
            try {
                cols[c].push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw MalformedInput("'" + path + "' row " + std::to_string(row) +
                                     ": bad number '" + cell + "'");
            }
            ++c;
        }
        if (c != n_cols)
            throw MalformedInput("'" + path + "' row " + std::to_string(row) +
                                 ": expected " + std::to_string(n_cols) + " columns");
    }
    return cols;
}

/// Directory part of a path ("" for bare filenames).
inline std::string dir_of(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string() : path.substr(0, pos);
}

/// Resolve a possibly-relative path against the directory of a config file.
inline std::string resolve_path(const std::string& base_file, const std::string& rel) {
    if (rel.empty() || rel.front() == '/') return rel;
    std::string d = dir_of(base_file);
    return d.empty() ? rel : d + "/" + rel;
}

} // namespace memwave
