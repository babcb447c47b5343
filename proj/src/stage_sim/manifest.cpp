#include "stagematte/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "stagematte/error.hpp"
#include "stagematte/png_io.hpp"

namespace stagematte {

namespace fs = std::filesystem;

std::string to_string(Role r)
{
    switch (r) {
    case Role::Base: return "base";
    case Role::CaptureStage: return "capture_stage";
    case Role::Unlabeled: return "unlabeled";
    case Role::Validation: return "validation";
    }
    return "base";
}

Role role_from(const std::string& s)
{
    if (s == "base") return Role::Base;
    if (s == "capture_stage") return Role::CaptureStage;
    if (s == "unlabeled") return Role::Unlabeled;
    if (s == "validation") return Role::Validation;
    throw FormatError("unknown role '" + s + "'");
}

nlohmann::ordered_json to_json(const ManifestRecord& r)
{
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["role"] = to_string(r.role);
    j["image"] = r.image;
    j["background"] = r.background;
    if (r.alpha_gt) j["alpha_gt"] = *r.alpha_gt;
    if (r.scribbles) j["scribbles"] = *r.scribbles;
    if (r.pseudo_label) j["pseudo_label"] = *r.pseudo_label;
    j["seed"] = r.seed;
    if (!r.effects.is_null()) j["effects"] = r.effects;
    return j;
}

ManifestRecord record_from_json(const nlohmann::ordered_json& j)
{
    ManifestRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.role = role_from(j.at("role").get<std::string>());
        r.image = j.at("image").get<std::string>();
        r.background = j.at("background").get<std::string>();
        if (j.contains("alpha_gt")) r.alpha_gt = j["alpha_gt"].get<std::string>();
        if (j.contains("scribbles")) r.scribbles = j["scribbles"].get<std::string>();
        if (j.contains("pseudo_label")) r.pseudo_label = j["pseudo_label"].get<std::string>();
        r.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("effects")) r.effects = j["effects"];
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest record: ") + e.what());
    }
    return r;
}

DatasetManifest::DatasetManifest(fs::path dir, std::vector<ManifestRecord> records)
    : dir_(std::move(dir)), records_(std::move(records))
{
}

DatasetManifest DatasetManifest::load(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.dir_ = path.parent_path();
    std::set<std::string> ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        ManifestRecord r = record_from_json(j);
        if (!ids.insert(r.id).second) throw DataError("duplicate manifest id '" + r.id + "'");
        for (const auto* p : {&r.image, &r.background})
            if (!fs::exists(m.resolve(*p))) throw IoError("record " + r.id + ": missing file " + *p);
        for (const auto* p : {&r.alpha_gt, &r.scribbles, &r.pseudo_label})
            if (*p && !fs::exists(m.resolve(**p))) throw IoError("record " + r.id + ": missing file " + **p);
        m.records_.push_back(std::move(r));
    }
    return m;
}

std::string DatasetManifest::serialize() const
{
    std::string out;
    for (const auto& r : records_) out += to_json(r).dump() + "\n";
    return out;
}

void DatasetManifest::save(const fs::path& path) const
{
    const std::string text = serialize();
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<ManifestRecord> DatasetManifest::by_role(Role role) const
{
    std::vector<ManifestRecord> out;
    for (const auto& r : records_)
        if (r.role == role) out.push_back(r);
    return out;
}

const ManifestRecord& DatasetManifest::find(const std::string& id) const
{
    for (const auto& r : records_)
        if (r.id == id) return r;
    throw DataError("unknown sample id '" + id + "'");
}

ManifestRecord* DatasetManifest::find_mutable(const std::string& id)
{
    for (auto& r : records_)
        if (r.id == id) return &r;
    return nullptr;
}

DatasetManifest DatasetManifest::rebased(const fs::path& new_dir) const
{
    const fs::path from = fs::weakly_canonical(fs::absolute(dir_.empty() ? fs::path(".") : dir_));
    const fs::path to = fs::weakly_canonical(fs::absolute(new_dir.empty() ? fs::path(".") : new_dir));
    auto fix = [&](std::string& p) { p = fs::relative(from / p, to).generic_string(); };
    DatasetManifest out(new_dir, records_);
    for (auto& r : out.records_) {
        fix(r.image);
        fix(r.background);
        for (auto* p : {&r.alpha_gt, &r.scribbles, &r.pseudo_label})
            if (*p) fix(**p);
    }
    return out;
}

}  // namespace stagematte
