#include "asyncdet/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "asyncdet/errors.hpp"

namespace asyncdet {
namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_cell(std::string_view cell, std::size_t line, const char* what) {
    cell = trim(cell);
    if (cell.empty()) {
        throw ParseError(std::string("missing ") + what, line);
    }
    T value{};
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(std::string("malformed ") + what + " '" + std::string(cell) + "'", line);
    }
    return value;
}

}  // namespace

SensorTable read_sensor_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw ParseError("empty input; expected header t,s1,...,sk", 1);
    }
    ++line_no;
    const auto header = split(trim(line));
    if (header.size() < 2 || trim(header[0]) != "t") {
        throw ParseError("header must be t,s1,...,sk", line_no);
    }
    const std::size_t k = header.size() - 1;

    SensorTable table;
    table.streams.resize(k);
    Tick previous = 0;
    bool first_row = true;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = trim(line);
        if (trimmed.empty()) {
            continue;
        }
        const auto cells = split(trimmed);
        if (cells.size() != k + 1) {
            throw ParseError("expected " + std::to_string(k + 1) + " cells, found " +
                                 std::to_string(cells.size()),
                             line_no);
        }
        const auto t = parse_cell<Tick>(cells[0], line_no, "tick");
        if (first_row) {
            table.first_tick = t;
            first_row = false;
        } else if (t <= previous) {
            throw ParseError("ticks must be strictly increasing", line_no);
        } else if (t != previous + 1) {
            throw ParseError("gap between ticks " + std::to_string(previous) + " and " +
                                 std::to_string(t),
                             line_no);
        }
        previous = t;
        for (std::size_t i = 0; i < k; ++i) {
            const auto v = parse_cell<double>(cells[i + 1], line_no, "reading");
            if (!std::isfinite(v)) {
                throw ParseError("non-finite reading", line_no);
            }
            table.streams[i].push_back(v);
        }
    }
    if (first_row) {
        throw ParseError("no data rows", line_no);
    }
    return table;
}

SensorTable read_sensor_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    return read_sensor_csv(in);
}

void write_sensor_csv(std::ostream& out, const SensorTable& table) {
    out << 't';
    for (std::size_t i = 0; i < table.sensors(); ++i) {
        out << ",s" << (i + 1);
    }
    out << '\n';
    for (std::size_t j = 0; j < table.length(); ++j) {
        out << (table.first_tick + static_cast<Tick>(j));
        for (const auto& s : table.streams) {
            out << ',' << format_number(s[j]);
        }
        out << '\n';
    }
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) {
        return "nan";
    }
    return std::string(buf, ptr);
}

}  // namespace asyncdet
