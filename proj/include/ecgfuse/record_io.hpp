#ifndef ECGFUSE_RECORD_IO_HPP
#define ECGFUSE_RECORD_IO_HPP

#include "ecgfuse/core.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ecgfuse {

namespace fs = std::filesystem;

struct Shape {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    friend bool operator==(const Shape&, const Shape&) = default;
};

// ---------------------------------------------------------------------------
// Record files: plain CSV, one lead per row, no header.
// ---------------------------------------------------------------------------

/// Parses a record CSV. The label is left unset; it belongs to the manifest.
/// When `expected` is given, a shape mismatch is a FormatError.
inline EcgRecord load_record(const fs::path& path, std::optional<Shape> expected = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open record " + path.string(), false);

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t col = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        for (;;) {
            ++col;
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
            if (p < end && *p == '+') ++p;
            double v = 0.0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec == std::errc::result_out_of_range) {
                throw DataError(path.string() + ": line " + std::to_string(line_no) +
                                ", column " + std::to_string(col) + ": value out of range");
            }
            if (ec != std::errc()) {
                throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                                  ", column " + std::to_string(col) + ": not a number");
            }
            if (!std::isfinite(v)) {
                throw DataError(path.string() + ": line " + std::to_string(line_no) +
                                ", column " + std::to_string(col) + ": non-finite value");
            }
            row.push_back(v);
            p = next;
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
            if (p == end) break;
            if (*p != ',') {
                throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                                  ", column " + std::to_string(col) + ": expected ','");
            }
            ++p;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has " +
                              std::to_string(row.size()) + " columns, expected " +
                              std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": empty record");

    EcgRecord rec;
    rec.id = path.stem().string();
    rec.leads.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            rec.leads(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];

    if (expected && (rec.rows() != expected->rows || rec.cols() != expected->cols)) {
        throw FormatError(path.string() + ": shape (" + std::to_string(rec.rows()) + ", " +
                          std::to_string(rec.cols()) + ") does not match declared (" +
                          std::to_string(expected->rows) + ", " +
                          std::to_string(expected->cols) + ")");
    }
    return rec;
}

/// Writes 17 significant digits per value so a reload is exact.
inline void save_record(const Matrix& leads, const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::string out;
    out.reserve(static_cast<std::size_t>(leads.size()) * 24);
    char buf[64];
    for (Eigen::Index r = 0; r < leads.rows(); ++r) {
        for (Eigen::Index c = 0; c < leads.cols(); ++c) {
            if (c) out.push_back(',');
            auto res = std::to_chars(buf, buf + sizeof buf, leads(r, c),
                                     std::chars_format::general, 17);
            out.append(buf, res.ptr);
        }
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write record " + path.string(), true);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing record " + path.string(), true);
}

inline void save_record(const EcgRecord& rec, const fs::path& path) { save_record(rec.leads, path); }

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory unless absolute
    ClassId label;
    std::string source;   // provenance: originating record id (rebalanced sets)
    int library = -1;     // provenance: feature library index, -1 when unused
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;
    std::string notes;
    std::optional<Shape> expected_shape;
    fs::path base_dir;  // directory that relative entry paths resolve against

    fs::path resolve(const ManifestEntry& e) const {
        fs::path p(e.path);
        return p.is_absolute() ? p : base_dir / p;
    }

    /// Class list ordered by index, taken from the entries.
    std::vector<ClassId> classes() const {
        std::map<int, std::string> seen;
        for (const auto& e : entries) seen.emplace(e.label.index, e.label.name);
        std::vector<ClassId> out;
        for (auto& [i, n] : seen) out.push_back({i, n});
        return out;
    }

    std::map<int, std::size_t> class_counts() const {
        std::map<int, std::size_t> counts;
        for (const auto& e : entries) ++counts[e.label.index];
        return counts;
    }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["seed"] = m.seed;
    if (!m.notes.empty()) j["notes"] = m.notes;
    if (m.expected_shape) j["expected_shape"] = {m.expected_shape->rows, m.expected_shape->cols};
    auto& entries = j["entries"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json je{{"path", e.path}, {"label", e.label.index}, {"name", e.label.name}};
        if (!e.source.empty()) je["source"] = e.source;
        if (e.library >= 0) je["library"] = e.library;
        entries.push_back(std::move(je));
    }
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    DatasetManifest m;
    m.base_dir = base_dir;
    try {
        m.seed = j.value("seed", std::uint64_t{0});
        m.notes = j.value("notes", std::string{});
        if (j.contains("expected_shape")) {
            const auto& s = j.at("expected_shape");
            m.expected_shape = Shape{s.at(0).get<Eigen::Index>(), s.at(1).get<Eigen::Index>()};
        }
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.path = je.at("path").get<std::string>();
            e.label.index = je.at("label").get<int>();
            e.label.name = je.value("name", "class" + std::to_string(e.label.index));
            e.source = je.value("source", std::string{});
            e.library = je.value("library", -1);
            if (e.label.index < 0) throw FormatError("manifest: negative label for " + e.path);
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("manifest: ") + ex.what());
    }
    std::map<int, std::string> names;
    for (const auto& e : m.entries) {
        auto [it, inserted] = names.emplace(e.label.index, e.label.name);
        if (!inserted && it->second != e.label.name)
            throw FormatError("manifest: label " + std::to_string(e.label.index) +
                              " has conflicting names");
    }
    return m;
}

inline void write_json(const nlohmann::json& j, const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string(), true);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("failed writing " + path.string(), true);
}

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string(), false);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& ex) {
        throw FormatError(path.string() + ": " + ex.what());
    }
}

inline DatasetManifest load_manifest(const fs::path& path) {
    return manifest_from_json(read_json(path), path.parent_path());
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
    write_json(manifest_to_json(m), path);
}

/// Loads every record of a manifest in manifest order, labels attached.
inline std::vector<EcgRecord> load_records(const DatasetManifest& m) {
    std::vector<EcgRecord> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        EcgRecord r = load_record(m.resolve(e), m.expected_shape);
        r.label = e.label;
        out.push_back(std::move(r));
    }
    return out;
}

/// Persists records as <dir>/<subdir>/<id>.csv plus <dir>/<manifest_name>.
inline DatasetManifest write_records(const std::vector<EcgRecord>& records, const fs::path& dir,
                                     std::uint64_t seed, std::string notes,
                                     const std::string& subdir = "records",
                                     const std::string& manifest_name = "manifest.json") {
    DatasetManifest m;
    m.seed = seed;
    m.notes = std::move(notes);
    m.base_dir = dir;
    for (const auto& r : records) {
        const std::string rel = subdir + "/" + r.id + ".csv";
        save_record(r.leads, dir / rel);
        m.entries.push_back({rel, r.label, {}, -1});
    }
    save_manifest(m, dir / manifest_name);
    return m;
}

}  // namespace ecgfuse

#endif
