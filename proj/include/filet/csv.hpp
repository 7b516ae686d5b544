#pragma once

#include <string>
#include <vector>

namespace filet {

/// 17 significant digits, shortest-equivalent text ("%.17g"); inf and nan
/// render as printf does.
std::string format_double(double value);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Comma separation, LF line endings, header row first, no quoting.
void write_csv(const std::string& path, const CsvTable& table);
std::string csv_text(const CsvTable& table);

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);

}  // namespace filet
