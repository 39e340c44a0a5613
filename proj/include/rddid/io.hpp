#pragma once

// Panel CSV reading and writing. Schema: unit_id,period,running,treated,outcome

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rddid/data.hpp"
#include "rddid/error.hpp"

namespace rddid {

inline constexpr std::string_view kPanelHeader = "unit_id,period,running,treated,outcome";

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

[[noreturn]] inline void parse_fail(std::size_t line, std::string_view msg) {
    throw Error(ErrorCategory::parse, "line " + std::to_string(line) + ": " + std::string(msg));
}

inline double parse_real(std::string_view cell, std::size_t line, std::string_view column) {
    cell = trim(cell);
    if (cell.empty()) parse_fail(line, "blank " + std::string(column) + " cell");
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        parse_fail(line, "invalid " + std::string(column) + " value '" + std::string(cell) + "'");
    }
    return v;
}

inline long long parse_integer(std::string_view cell, std::size_t line, std::string_view column) {
    cell = trim(cell);
    if (cell.empty()) parse_fail(line, "blank " + std::string(column) + " cell");
    if (cell.front() == '+') cell.remove_prefix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        parse_fail(line, "invalid " + std::string(column) + " value '" + std::string(cell) + "'");
    }
    return v;
}

/// Shortest decimal representation that parses back to the same double.
inline std::string format_real(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Reads observations only; cutoff, taxonomy and scheme come from the run configuration.
inline PanelDataset parse_panel_csv(std::istream& in) {
    PanelDataset ds;
    std::set<std::pair<std::uint32_t, int>> seen;
    std::string raw;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != kPanelHeader) {
                detail::parse_fail(line_no, "header must be exactly '" + std::string(kPanelHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != 5) {
            detail::parse_fail(line_no, "expected 5 fields, found " + std::to_string(cells.size()));
        }
        const auto label = detail::trim(cells[0]);
        if (label.empty()) detail::parse_fail(line_no, "blank unit_id cell");
        const long long period = detail::parse_integer(cells[1], line_no, "period");
        if (period < std::numeric_limits<int>::min() || period > std::numeric_limits<int>::max()) {
            detail::parse_fail(line_no, "period out of range");
        }
        const double running = detail::parse_real(cells[2], line_no, "running");
        const long long treated = detail::parse_integer(cells[3], line_no, "treated");
        if (treated != 0 && treated != 1) {
            detail::parse_fail(line_no, "treated must be 0 or 1, got '" + std::string(detail::trim(cells[3])) + "'");
        }
        const double outcome = detail::parse_real(cells[4], line_no, "outcome");
        const UnitId unit = ds.intern(label);
        if (!seen.emplace(unit.value, static_cast<int>(period)).second) {
            throw Error(ErrorCategory::validation, "line " + std::to_string(line_no) + ": duplicate (unit, period) (" +
                                                       std::string(label) + ", " + std::to_string(period) + ")");
        }
        ds.observations.push_back(
            Observation{unit, static_cast<int>(period), running, static_cast<int>(treated), outcome});
    }
    if (!header_seen) throw Error(ErrorCategory::parse, "line 1: empty file, header missing");
    return ds;
}

inline PanelDataset parse_panel_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::io, "cannot open '" + path + "'");
    return parse_panel_csv(in);
}

inline void write_panel_csv(const PanelDataset& ds, std::ostream& out) {
    out << kPanelHeader << '\n';
    for (const auto& o : ds.observations) {
        const auto& label = ds.label(o.unit);
        if (label.find_first_of(",\r\n") != std::string::npos) {
            throw Error(ErrorCategory::io, "unit_id '" + label + "' cannot be written to CSV");
        }
        out << label << ',' << o.period << ',' << detail::format_real(o.running) << ',' << o.treated << ','
            << detail::format_real(o.outcome) << '\n';
    }
}

inline void write_panel_csv(const PanelDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCategory::io, "cannot write '" + path + "'");
    write_panel_csv(ds, out);
}

}  // namespace rddid
