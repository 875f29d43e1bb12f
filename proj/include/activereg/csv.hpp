#pragma once

// Comma-separated tables with a header row and '.' decimals. Numbers are read
// with strtod and written with enough digits to round-trip exactly.

#include <activereg/error.hpp>
#include <activereg/linalg.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace activereg {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<Vec> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    const Vec* column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return &columns[i];
        return nullptr;
    }
};

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace detail

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split(line, ',');
        if (!have_header) {
            t.header = cells;
            t.columns.assign(cells.size(), {});
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(lineno, "expected " + std::to_string(t.header.size()) + " fields");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double v;
            if (!detail::parse_double(cells[i], v)) throw ParseError(lineno, "not a number: '" + cells[i] + "'");
            t.columns[i].push_back(v);
        }
    }
    if (!have_header) throw ParseError(1, "missing header row");
    return t;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline CsvTable read_csv(const std::filesystem::path& p) {
    try {
        return parse_csv(read_text(p));
    } catch (const ParseError& e) {
        throw ParseError(e.line(), p.string() + ": " + e.what());
    }
}

/// Shortest of %.15g, %.16g, %.17g that reads back to the same double.
inline std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v || v != v) break;
    }
    return buf;
}

/// Incremental CSV text builder.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    static std::string cell(double v) { return format_double(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    template <class I>
        requires std::is_integral_v<I>
    static std::string cell(I v) {
        return std::to_string(v);
    }

    std::ostringstream out_;
};

}  // namespace activereg
