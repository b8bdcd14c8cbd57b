// Copyright 2026 The zfnmr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// Loader for the plain comma-separated files written by this library (no
/// quoting; first line is the header).

#include <charconv>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zfnmr {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(const std::string &name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::out_of_range("no CSV column named '" + name + "'");
    }

    std::vector<std::string> column(const std::string &name) const {
        const std::size_t c = column_index(name);
        std::vector<std::string> out;
        out.reserve(rows.size());
        for (const auto &r : rows) out.push_back(r[c]);
        return out;
    }

    std::vector<double> numeric_column(const std::string &name) const {
        std::vector<double> out;
        for (const auto &cell : column(name)) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size())
                throw std::invalid_argument("CSV cell '" + cell + "' in column '" + name + "' is not a number");
            out.push_back(v);
        }
        return out;
    }
};

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline CsvTable read_csv(std::istream &is) {
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("CSV input is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_csv_line(line);
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw std::invalid_argument("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                        " fields, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

}  // namespace zfnmr
