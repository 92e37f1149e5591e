#include "atss/csv.hpp"

#include "atss/error.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>

namespace atss::csv {

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void append_block(std::string& out, std::string_view header, const Matrix& m) {
    out += header;
    out += '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
}

namespace {

bool is_numeric_start(char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.';
}

std::vector<double> parse_row(std::string_view line) {
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) comma = line.size();
        auto cell = line.substr(pos, comma - pos);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
            throw InputError("bad numeric CSV cell: '" + std::string(cell) + "'");
        }
        row.push_back(v);
        pos = comma + 1;
    }
    return row;
}

}  // namespace

std::vector<std::pair<std::string, Matrix>> parse_blocks(std::string_view text) {
    std::vector<std::pair<std::string, Matrix>> blocks;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;
        if (line.empty()) continue;

        if (!is_numeric_start(line.front())) {
            blocks.emplace_back(std::string(line), Matrix{});
            continue;
        }
        if (blocks.empty()) throw InputError("CSV data row before any block header");
        auto row = parse_row(line);
        auto& m = blocks.back().second;
        if (m.rows == 0) {
            m.cols = row.size();
        } else if (row.size() != m.cols) {
            throw InputError("ragged CSV block '" + blocks.back().first + "'");
        }
        m.data.insert(m.data.end(), row.begin(), row.end());
        ++m.rows;
    }
    return blocks;
}

}  // namespace atss::csv
