#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "numerics.hpp"

namespace gfm {

using Json = nlohmann::ordered_json;

/// Shortest text that parses back to the same double, at most 17 significant digits.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Fixed 17 significant digits, as written to CSV.
inline std::string format_double17(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << contents;
}

// ---- CSV ------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

inline std::string to_csv(const std::vector<std::string>& header, const Matrix& values) {
    if (!header.empty() && header.size() != values.cols) throw std::invalid_argument("to_csv: header width mismatch");
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j) out += ',';
        out += header[j];
    }
    out += '\n';
    for (std::size_t i = 0; i < values.rows; ++i) {
        for (std::size_t j = 0; j < values.cols; ++j) {
            if (j) out += ',';
            out += format_double17(values(i, j));
        }
        out += '\n';
    }
    return out;
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        return cells;
    };
    if (!std::getline(in, line)) throw std::invalid_argument("parse_csv: empty input");
    t.header = split(line);
    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw std::invalid_argument("parse_csv: row " + std::to_string(rows + 1) + " has " +
                                        std::to_string(cells.size()) + " fields, expected " +
                                        std::to_string(t.header.size()));
        }
        for (const auto& c : cells) data.push_back(parse_double(c));
        ++rows;
    }
    t.values = Matrix(rows, t.header.size(), std::move(data));
    return t;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& values) {
    write_file(path, to_csv(header, values));
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

/// Column-major helper: named columns of equal length.
inline Matrix columns_to_matrix(const std::vector<std::vector<double>>& cols) {
    if (cols.empty()) return Matrix();
    Matrix m(cols[0].size(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j].size() != m.rows) throw std::invalid_argument("columns_to_matrix: ragged columns");
        for (std::size_t i = 0; i < m.rows; ++i) m(i, j) = cols[j][i];
    }
    return m;
}

inline std::vector<std::string> numbered_header(const std::string& prefix, std::size_t n) {
    std::vector<std::string> h;
    for (std::size_t i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
    return h;
}

// ---- hashing --------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

// ---- JSON -----------------------------------------------------------------

inline void write_json(const std::string& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

inline Json read_json(const std::string& path) { return Json::parse(read_file(path)); }

// ---- key = value config ---------------------------------------------------

/// Flat `key = value` text; `#` starts a comment. Keys are kept sorted so the
/// serialized form is canonical.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text) {
        KeyValueConfig c;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
            c.values_[key] = trim(line.substr(eq + 1));
        }
        return c;
    }

    static KeyValueConfig load(const std::string& path) { return parse(read_file(path)); }

    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    bool contains(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set(const std::string& key, double value) { values_[key] = format_double(value); }
    void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }

    /// Fills missing keys from `other`; existing keys win.
    void merge_defaults(const KeyValueConfig& other) {
        for (const auto& [k, v] : other.values_) values_.try_emplace(k, v);
    }

    /// Overwrites keys with `other`'s.
    void override_with(const KeyValueConfig& other) {
        for (const auto& [k, v] : other.values_) values_[k] = v;
    }

    std::string get_string(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw std::invalid_argument("config: missing key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key) const {
        try {
            return parse_double(get_string(key));
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument("config: key '" + key + "' is not a number: " + get_string(key));
        }
    }

    std::uint64_t get_uint(const std::string& key) const {
        const std::string s = get_string(key);
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            throw std::invalid_argument("config: key '" + key + "' is not a nonnegative integer: " + s);
        }
        return v;
    }

    std::vector<double> get_list(const std::string& key) const {
        std::vector<double> out;
        std::istringstream in(get_string(key));
        std::string cell;
        while (std::getline(in, cell, ',')) {
            cell = trim(cell);
            if (!cell.empty()) out.push_back(parse_double(cell));
        }
        return out;
    }

    Json to_json() const {
        Json j = Json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

inline std::string format_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += format_double(v[i]);
    }
    return s;
}

// ---- run manifest ---------------------------------------------------------

/// Resolved config, seed and artifact hashes for one command invocation.
class RunManifest {
public:
    RunManifest(std::string command, std::string out_dir, const KeyValueConfig& config)
        : command_(std::move(command)), out_dir_(std::move(out_dir)), config_(config) {}

    std::string path_for(const std::string& name) const { return (std::filesystem::path(out_dir_) / name).string(); }

    void add_artifact(const std::string& name) { artifacts_[name] = file_hash(path_for(name)); }

    /// Writes `name` under the output directory and records its hash.
    void emit(const std::string& name, const std::string& contents) {
        write_file(path_for(name), contents);
        artifacts_[name] = hex64(fnv1a64(contents));
    }

    void set_status(const std::string& status) { status_ = status; }
    Json& extra() { return extra_; }

    Json to_json() const {
        Json j;
        j["command"] = command_;
        j["seed"] = config_.contains("seed") ? config_.get_string("seed") : "0";
        j["status"] = status_;
        j["config"] = config_.to_json();
        Json a = Json::object();
        for (const auto& [k, v] : artifacts_) a[k] = v;
        j["artifacts"] = a;
        if (!extra_.is_null()) j["details"] = extra_;
        return j;
    }

    /// Writes `config.txt` (the resolved config) and `manifest.json`.
    void finalize() {
        write_file(path_for("config.txt"), config_.serialize());
        artifacts_["config.txt"] = file_hash(path_for("config.txt"));
        write_json(path_for("manifest.json"), to_json());
    }

private:
    std::string command_;
    std::string out_dir_;
    KeyValueConfig config_;
    std::map<std::string, std::string> artifacts_;
    std::string status_ = "ok";
    Json extra_;
};

}  // namespace gfm
