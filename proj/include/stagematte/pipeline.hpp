#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagematte/qc.hpp"
#include "stagematte/stage_sim.hpp"
#include "stagematte/training.hpp"

namespace stagematte::pipeline {

struct PipelineConfig {
    std::uint64_t seed = 7;
    sim::GeneratorConfig generator;
    train::TrainConfig teacher_base = train::base_defaults();
    train::TrainConfig student_base = train::base_defaults();
    train::TrainConfig finetune_teacher = train::finetune_defaults();
    train::TrainConfig finetune_student = train::finetune_defaults();
    train::TrainConfig finetune_student_direct = train::finetune_defaults();
    qc::Thresholds thresholds{0.01, 0.05, std::nullopt};
    int band_radius = 3;
    qc::SolveOptions solver;
    int port = 8080;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

/// Environment variable overriding the workspace root.
inline constexpr const char* kWorkspaceEnv = "STAGEMATTE_WORKSPACE";

/// Exit codes: 0 ok, 1 usage, 2 data, 3 numerical.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace stagematte::pipeline
