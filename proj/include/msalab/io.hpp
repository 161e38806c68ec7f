#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "msalab/geometry.hpp"

namespace msalab {

using json = nlohmann::json;

/// JSON-lines record of a (possibly marked) configuration:
/// {dimension, box_center, box_side, points: [[..]], marks: [0|1]?}.
inline json configuration_record(const Box& box, const Eigen::MatrixXd& points,
                                 const std::vector<uint8_t>* marks = nullptr) {
    json rec;
    rec["dimension"] = box.dim();
    rec["box_center"] = std::vector<double>(box.center.data(), box.center.data() + box.dim());
    rec["box_side"] = box.side;
    json pts = json::array();
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        json p = json::array();
        for (int k = 0; k < points.rows(); ++k) p.push_back(points(k, i));
        pts.push_back(std::move(p));
    }
    rec["points"] = std::move(pts);
    if (marks) {
        json ms = json::array();
        for (uint8_t b : *marks) ms.push_back(static_cast<int>(b));
        rec["marks"] = std::move(ms);
    }
    return rec;
}

inline std::pair<Box, Eigen::MatrixXd> parse_configuration_record(const json& rec) {
    const int d = rec.at("dimension").get<int>();
    const auto center = rec.at("box_center").get<std::vector<double>>();
    if (static_cast<int>(center.size()) != d)
        throw std::invalid_argument("configuration record: center/dimension mismatch");
    Eigen::VectorXd c(d);
    for (int i = 0; i < d; ++i) c[i] = center[static_cast<size_t>(i)];
    Box box(c, rec.at("box_side").get<double>());
    const auto& pts = rec.at("points");
    Eigen::MatrixXd m(d, static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i)
        for (int k = 0; k < d; ++k) m(k, static_cast<Eigen::Index>(i)) = pts[i][static_cast<size_t>(k)].get<double>();
    return {std::move(box), std::move(m)};
}

/// FNV-1a over bytes; used for config hashes and output checksums.
inline uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Locale-independent shortest-roundtrip double for CSV cells.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Write-then-rename so partial files never appear under the final name.
inline void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("atomic_write: cannot open " + tmp);
        os << contents;
        if (!os) throw IoError("atomic_write: short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("atomic_write: rename failed for " + path.string());
}

/// Recursive unknown-key check against a whitelist schema: every object key
/// in `value` must appear in the matching object of `schema`.
inline void reject_unknown_keys(const json& value, const json& schema, const std::string& where) {
    if (!value.is_object()) return;
    for (const auto& [key, sub] : value.items()) {
        if (!schema.contains(key))
            throw std::invalid_argument("config: unknown key '" + where + key + "'");
        if (sub.is_object()) reject_unknown_keys(sub, schema.at(key), where + key + ".");
    }
}

struct ManifestEntry {
    std::string file;
    uint64_t bytes = 0;
    std::string checksum;
};

/// Run manifest: config hash, code version, timestamps, and per-output
/// checksums. Written atomically at run end.
struct RunManifest {
    std::string config_hash;
    std::string code_version;
    std::string started_at;
    std::string finished_at;
    std::vector<ManifestEntry> outputs;

    json to_json() const {
        json j;
        j["config_hash"] = config_hash;
        j["code_version"] = code_version;
        j["started_at"] = started_at;
        j["finished_at"] = finished_at;
        j["outputs"] = json::array();
        for (const auto& e : outputs)
            j["outputs"].push_back({{"file", e.file}, {"bytes", e.bytes}, {"checksum", e.checksum}});
        return j;
    }
};

inline std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

/// Collects output files, then writes the manifest with their checksums.
class OutputCollector {
  public:
    explicit OutputCollector(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& contents) {
        atomic_write(dir_ / name, contents);
        ManifestEntry e;
        e.file = name;
        e.bytes = contents.size();
        e.checksum = hex64(fnv1a(contents));
        entries_.push_back(std::move(e));
    }

    void finalize(const std::string& config_hash, const std::string& version,
                  const std::string& started_at) {
        RunManifest m;
        m.config_hash = config_hash;
        m.code_version = version;
        m.started_at = started_at;
        m.finished_at = iso_timestamp();
        m.outputs = entries_;
        atomic_write(dir_ / "manifest.json", m.to_json().dump(2) + "\n");
    }

  private:
    std::filesystem::path dir_;
    std::vector<ManifestEntry> entries_;
};

}  // namespace msalab
