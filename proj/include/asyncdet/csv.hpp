#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "asyncdet/core.hpp"

namespace asyncdet {

// Sensor dump: header `t,s1,...,sk`, one row per consecutive tick.
struct SensorTable {
    Tick first_tick = 1;
    std::vector<std::vector<double>> streams;  // streams[i][j] = sensor i at first_tick + j

    std::size_t sensors() const noexcept { return streams.size(); }
    std::size_t length() const noexcept { return streams.empty() ? 0 : streams.front().size(); }
};

// Throws ParseError carrying the 1-based line number of the offending row.
SensorTable read_sensor_csv(std::istream& in);
SensorTable read_sensor_csv_file(const std::string& path);

void write_sensor_csv(std::ostream& out, const SensorTable& table);

// Shortest decimal form that round-trips; identical on every platform.
std::string format_number(double value);

}  // namespace asyncdet
