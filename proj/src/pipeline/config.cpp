#include <fstream>

#include "stagematte/pipeline.hpp"

namespace stagematte::pipeline {

namespace {

std::optional<double> opt_number(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j)
{
    PipelineConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("generator")) c.generator = sim::generator_config_from_json(j["generator"]);
        if (j.contains("train")) {
            const auto& t = j["train"];
            auto phase = [&](const char* key, train::TrainConfig& dst) {
                if (t.contains(key)) dst = train::train_config_from_json(t[key], dst);
            };
            phase("teacher_base", c.teacher_base);
            phase("student_base", c.student_base);
            phase("finetune_teacher", c.finetune_teacher);
            phase("finetune_student", c.finetune_student);
            phase("finetune_student_direct", c.finetune_student_direct);
        }
        if (j.contains("thresholds")) {
            const auto& t = j["thresholds"];
            c.thresholds = {opt_number(t, "mse"), opt_number(t, "sad"), opt_number(t, "grad")};
        }
        if (j.contains("qc")) {
            const auto& q = j["qc"];
            c.band_radius = q.value("band_radius", c.band_radius);
            c.solver.max_iterations = q.value("max_iterations", c.solver.max_iterations);
            c.solver.tol = q.value("tol", c.solver.tol);
            c.solver.h = q.value("h", c.solver.h);
        }
        if (j.contains("server")) c.port = j["server"].value("port", c.port);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    if (c.band_radius < 1) throw UsageError("config: qc.band_radius must be >= 1");
    return c;
}

nlohmann::ordered_json to_json(const PipelineConfig& c)
{
    nlohmann::ordered_json j;
    j["seed"] = c.seed;
    j["generator"] = sim::to_json(c.generator);
    j["train"] = {{"teacher_base", train::to_json(c.teacher_base)},
                  {"student_base", train::to_json(c.student_base)},
                  {"finetune_teacher", train::to_json(c.finetune_teacher)},
                  {"finetune_student", train::to_json(c.finetune_student)},
                  {"finetune_student_direct", train::to_json(c.finetune_student_direct)}};
    nlohmann::ordered_json th = nlohmann::ordered_json::object();
    if (c.thresholds.mse) th["mse"] = *c.thresholds.mse;
    if (c.thresholds.sad) th["sad"] = *c.thresholds.sad;
    if (c.thresholds.grad) th["grad"] = *c.thresholds.grad;
    j["thresholds"] = th;
    j["qc"] = {{"band_radius", c.band_radius},
               {"max_iterations", c.solver.max_iterations},
               {"tol", c.solver.tol},
               {"h", c.solver.h}};
    j["server"] = {{"port", c.port}};
    return j;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace stagematte::pipeline
