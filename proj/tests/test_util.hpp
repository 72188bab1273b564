#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>
#include <unistd.h>

#include <Eigen/Dense>

namespace mixft::test {

// Scratch directory removed on scope exit.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("mixft_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

struct Table {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    Eigen::MatrixXd values;
};

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(MIXFT_FIXTURE_DIR) / name;
}

// Plain reader for the fixture CSVs: header `name,col,...`, numeric cells.
inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    Table t;
    std::string line;
    std::vector<std::vector<double>> cells;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (header) {
            t.cols.assign(fields.begin() + 1, fields.end());
            header = false;
            continue;
        }
        t.rows.push_back(fields[0]);
        std::vector<double> row;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            row.push_back(std::stod(fields[i]));
        }
        cells.push_back(row);
    }
    t.values.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(t.cols.size()));
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t c = 0; c < t.cols.size(); ++c) {
            t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cells[r][c];
        }
    }
    return t;
}

} // namespace mixft::test
