#include "filet/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace filet {

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::string csv_text(const CsvTable& table) {
    std::string out;
    auto emit_row = [&out](const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) out.push_back(',');
            out += cells[i];
        }
        out.push_back('\n');
    };
    emit_row(table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) {
            throw std::invalid_argument("csv: row has " + std::to_string(row.size()) +
                                        " cells, header has " +
                                        std::to_string(table.header.size()));
        }
        emit_row(row);
    }
    return out;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw std::runtime_error("csv write: cannot open " + path);
    }
    const std::string text = csv_text(table);
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) {
        throw std::runtime_error("csv write: short write to " + path);
    }
}

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream stream(text);
    std::string line;
    bool first = true;
    while (std::getline(stream, line)) {
        if (!line.empty() && line.back() == '\r') {
            throw std::runtime_error("csv read: CR line ending found");
        }
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream line_stream(line);
        while (std::getline(line_stream, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != table.header.size()) {
                throw std::runtime_error("csv read: ragged row with " +
                                         std::to_string(cells.size()) + " cells");
            }
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) {
        throw std::runtime_error("csv read: empty input");
    }
    return table;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw std::runtime_error("csv read: cannot open " + path);
    }
    std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    return parse_csv(text);
}

}  // namespace filet
