#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace stagematte {

enum class Role { Base, CaptureStage, Unlabeled, Validation };

std::string to_string(Role r);
Role role_from(const std::string& s);

/// One manifest line. Paths are relative to the manifest's directory.
struct ManifestRecord {
    std::string id;
    Role role = Role::Base;
    std::string image;
    std::string background;
    std::optional<std::string> alpha_gt;
    std::optional<std::string> scribbles;
    std::optional<std::string> pseudo_label;
    std::uint64_t seed = 0;
    nlohmann::ordered_json effects;  // generator metadata, informational

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

nlohmann::ordered_json to_json(const ManifestRecord& r);
ManifestRecord record_from_json(const nlohmann::ordered_json& j);

/// Line-delimited JSON manifest (one record object per line).
class DatasetManifest {
public:
    DatasetManifest() = default;
    DatasetManifest(std::filesystem::path dir, std::vector<ManifestRecord> records);

    /// Parses and validates: ids unique, referenced files exist.
    static DatasetManifest load(const std::filesystem::path& path);
    /// Writes atomically to `path`; records are written in stored order.
    void save(const std::filesystem::path& path) const;
    std::string serialize() const;

    const std::filesystem::path& dir() const noexcept { return dir_; }
    const std::vector<ManifestRecord>& records() const noexcept { return records_; }
    std::vector<ManifestRecord>& records() noexcept { return records_; }

    std::filesystem::path resolve(const std::string& relative) const { return dir_ / relative; }
    std::vector<ManifestRecord> by_role(Role role) const;
    const ManifestRecord& find(const std::string& id) const;
    ManifestRecord* find_mutable(const std::string& id);

    /// Rebases every path so the manifest can be written into `new_dir`.
    DatasetManifest rebased(const std::filesystem::path& new_dir) const;

private:
    std::filesystem::path dir_;
    std::vector<ManifestRecord> records_;
};

}  // namespace stagematte
