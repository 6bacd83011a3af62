#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "multisol/clustering.hpp"

namespace multisol {

/// 17 significant digits: every double round-trips bit-exactly.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << content;
}

/// Field CSV: header `x,u` (1D) or `x,y,u` (2D, x fastest), LF endings.
inline std::string field_to_csv(const SolutionField& f) {
    std::string s;
    if (f.dim == 1) {
        s += "x,u\n";
        for (int i = 0; i <= f.nx; ++i)
            s += format_double(f.node_x(i)) + "," + format_double(f.values[i]) + "\n";
    } else {
        s += "x,y,u\n";
        for (int iy = 0; iy <= f.ny; ++iy)
            for (int ix = 0; ix <= f.nx; ++ix)
                s += format_double(f.node_x(ix)) + "," + format_double(f.node_y(iy)) + "," +
                     format_double(f.at(ix, iy)) + "\n";
    }
    return s;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

/// Parse a field CSV back; the mesh is reconstructed from the node
/// coordinates (uniform spacing assumed, endpoints taken verbatim).
inline SolutionField field_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("field CSV: empty file");
    const auto header = detail::split_csv_line(line);
    SolutionField f;
    std::vector<double> xs, ys, us;
    if (header.size() == 2 && header[0] == "x" && header[1] == "u") {
        f.dim = 1;
    } else if (header.size() == 3 && header[0] == "x" && header[1] == "y" && header[2] == "u") {
        f.dim = 2;
    } else {
        throw std::runtime_error("field CSV: unrecognized header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) throw std::runtime_error("field CSV: ragged row");
        xs.push_back(std::stod(cells[0]));
        if (f.dim == 2) ys.push_back(std::stod(cells[1]));
        us.push_back(std::stod(cells.back()));
    }
    if (us.empty()) throw std::runtime_error("field CSV: no data rows");
    if (f.dim == 1) {
        f.nx = static_cast<int>(us.size()) - 1;
        f.xmin = xs.front();
        f.xmax = xs.back();
        f.values = us;
    } else {
        // x fastest: row length found at the first wrap of the x column
        int ascending = 0;
        while (ascending + 1 < static_cast<int>(xs.size()) && xs[ascending + 1] > xs[ascending])
            ++ascending;
        const int nx1 = ascending + 1; // nodes along x
        f.nx = nx1 - 1;
        if (us.size() % nx1 != 0) throw std::runtime_error("field CSV: not a full grid");
        f.ny = static_cast<int>(us.size() / nx1) - 1;
        f.xmin = xs.front();
        f.xmax = xs[nx1 - 1];
        f.ymin = ys.front();
        f.ymax = ys.back();
        f.values = us;
    }
    return f;
}

/// Probe-history CSV: `iteration,probe_0,...` with the configured stride.
inline std::string probes_to_csv(const MemberResult& r, long stride) {
    std::string s = "iteration";
    for (std::size_t p = 0; p < r.probe_history.size(); ++p)
        s += ",probe_" + std::to_string(p);
    s += "\n";
    const std::size_t records = r.probe_history.empty() ? 0 : r.probe_history[0].size();
    for (std::size_t k = 0; k < records; ++k) {
        const long it = std::min<long>(static_cast<long>(k) * stride, r.iterations_run);
        s += std::to_string(it);
        for (const auto& series : r.probe_history) s += "," + format_double(series[k]);
        s += "\n";
    }
    return s;
}

} // namespace multisol
