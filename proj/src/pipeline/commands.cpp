#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>

#include "stagematte/metrics.hpp"
#include "stagematte/nn/optim.hpp"
#include "stagematte/pipeline.hpp"
#include "stagematte/png_io.hpp"
#include "stagematte/review.hpp"
#include "stagematte/rng.hpp"
#include "stagematte/server.hpp"

namespace stagematte::pipeline {

namespace fs = std::filesystem;

namespace {

struct Context {
    fs::path workspace;
    bool force = false;
    std::ostream* out = nullptr;

    fs::path path(const std::string& p) const
    {
        const fs::path q(p);
        return q.is_absolute() ? q : workspace / q;
    }
};

void write_text(const fs::path& path, const std::string& text)
{
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void guard_file(const Context& ctx, const fs::path& p)
{
    if (!ctx.force && fs::exists(p)) throw UsageError(p.string() + " already exists (pass --force to overwrite)");
}

void guard_dir(const Context& ctx, const fs::path& p)
{
    if (!ctx.force && fs::is_directory(p) && !fs::is_empty(p))
        throw UsageError(p.string() + " is not empty (pass --force to overwrite)");
    std::error_code ec;
    fs::create_directories(p, ec);
    if (!fs::is_directory(p)) throw IoError("cannot create directory " + p.string());
}

Role split_role(const std::string& s)
{
    try {
        return role_from(s);
    } catch (const FormatError&) {
        throw UsageError("unknown split '" + s + "' (base, capture_stage, unlabeled, validation)");
    }
}

std::vector<ManifestRecord> split_records(const DatasetManifest& m, Role role)
{
    auto recs = m.by_role(role);
    if (recs.empty()) throw DataError("split " + to_string(role) + " has no records");
    return recs;
}

std::map<std::string, AlphaMask> load_predictions(const fs::path& dir, const std::vector<ManifestRecord>& recs)
{
    std::map<std::string, AlphaMask> out;
    for (const auto& r : recs) {
        const fs::path p = dir / (r.id + ".png");
        if (!fs::exists(p)) throw IoError("missing prediction " + p.string());
        out.emplace(r.id, load_mask(p));
    }
    return out;
}

std::map<std::string, AlphaMask> load_ground_truth(const DatasetManifest& m, const std::vector<ManifestRecord>& recs)
{
    std::map<std::string, AlphaMask> out;
    for (const auto& r : recs) {
        if (!r.alpha_gt) throw DataError("record " + r.id + " has no alpha_gt");
        out.emplace(r.id, load_mask(m.resolve(*r.alpha_gt)));
    }
    return out;
}

nn::Checkpoint save_training(const Context& ctx, const train::TrainResult& res, const fs::path& ck_path)
{
    nn::save_checkpoint(res.checkpoint, ck_path);
    train::write_loss_curve(res.curve, fs::path(ck_path.string() + ".loss.tsv"));
    const auto& last = res.curve.empty() ? train::LossRecord{} : res.curve.back();
    char buf[256];
    std::snprintf(buf, sizeof buf, "wrote %s after %lld steps (last base loss %.6g, scribble loss %.6g)\n",
                  ck_path.string().c_str(), static_cast<long long>(res.curve.size()), last.base_loss,
                  last.scribble_loss);
    *ctx.out << buf;
    return res.checkpoint;
}

struct Options {
    std::string config;
    std::string manifest;
    std::string out;
    std::string checkpoint;
    std::string pred;
    std::string split = "validation";
    std::string model = "teacher";
    std::string json;
    std::string static_dir;
    std::string supervisor_out;
    std::string values = "0,0.2,0.4,0.6,0.8,1.0";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int iterations = -1;
    double base_fraction = -1.0;
    double noise_sigma_max = -1.0;
    double test_noise = 0.0;
    int band = 0;
    int port = -1;
    bool train_refiner = false;
};

PipelineConfig config_for(const Context& ctx, const Options& o)
{
    return o.config.empty() ? PipelineConfig{} : load_config(ctx.path(o.config));
}

train::TrainConfig apply_overrides(train::TrainConfig c, const Options& o, const PipelineConfig& pc)
{
    c.seed = o.seed_set ? o.seed : (c.seed ? c.seed : pc.seed);
    if (o.iterations >= 0) c.iterations = o.iterations;
    if (o.base_fraction >= 0.0) c.base_fraction = o.base_fraction;
    if (o.noise_sigma_max >= 0.0) c.noise_sigma_max = o.noise_sigma_max;
    c.validate();
    return c;
}

// ---- commands --------------------------------------------------------------

void cmd_gen_data(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const fs::path dir = ctx.path(o.out);
    guard_file(ctx, dir / "manifest.jsonl");
    const auto m = sim::gen_dataset(pc.generator, o.seed_set ? o.seed : pc.seed, dir);
    *ctx.out << "wrote " << m.records().size() << " records to " << (dir / "manifest.jsonl").string() << "\n";
}

void cmd_train_base(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const fs::path out = ctx.path(o.out);
    guard_file(ctx, out);
    const auto kind = nn::model_kind_from(o.model);
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const auto base = train::load_ground_truth_samples(manifest, Role::Base);
    if (kind == nn::ModelKind::Teacher) {
        const auto cfg = apply_overrides(pc.teacher_base, o, pc);
        nn::Checkpoint init{nn::make_teacher(derive_seed(cfg.seed, "init")), {}, 0};
        save_training(ctx, train::train_teacher_base(std::move(init), base, cfg), out);
    } else {
        const auto cfg = apply_overrides(pc.student_base, o, pc);
        nn::Checkpoint init{nn::make_student(derive_seed(cfg.seed, "init")), {}, 0};
        save_training(ctx, train::train_student_base(std::move(init), base, cfg), out);
    }
}

train::TrainResult run_finetune_teacher(const Context& ctx, const Options& o, const PipelineConfig& pc,
                                        const DatasetManifest& manifest)
{
    const auto cfg = apply_overrides(pc.finetune_teacher, o, pc);
    auto ck = nn::load_checkpoint(ctx.path(o.checkpoint));
    const auto base = train::load_ground_truth_samples(manifest, Role::Base);
    const auto scribbled = train::load_scribble_samples(manifest);
    return train::finetune_teacher(std::move(ck), base, scribbled, cfg);
}

void cmd_finetune_teacher(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const fs::path out = ctx.path(o.out);
    guard_file(ctx, out);
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    save_training(ctx, run_finetune_teacher(ctx, o, pc, manifest), out);
}

void cmd_distill(const Context& ctx, const Options& o)
{
    const fs::path dir = ctx.path(o.out);
    guard_file(ctx, dir / "manifest.jsonl");
    fs::create_directories(dir / "pseudo");
    const auto ck = nn::load_checkpoint(ctx.path(o.checkpoint));
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    DatasetManifest unl(manifest.dir(), split_records(manifest, Role::Unlabeled));
    std::vector<train::TrainSample> samples;
    for (const auto& r : unl.records()) {
        train::TrainSample s;
        s.id = r.id;
        s.role = r.role;
        s.image = load_image(unl.resolve(r.image));
        s.background = load_image(unl.resolve(r.background));
        samples.push_back(std::move(s));
    }
    const auto labels = train::distill_labels(ck.model, samples);
    DatasetManifest pseudo = unl.rebased(dir);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& r = pseudo.records()[i];
        r.pseudo_label = "pseudo/" + r.id + "_pseudo.png";
        save_png(labels[i], dir / *r.pseudo_label);
    }
    pseudo.save(dir / "manifest.jsonl");
    *ctx.out << "wrote " << labels.size() << " pseudo-labels to " << (dir / "manifest.jsonl").string() << "\n";
}

void cmd_finetune_student(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const fs::path out = ctx.path(o.out);
    guard_file(ctx, out);
    const auto cfg = apply_overrides(pc.finetune_student, o, pc);
    auto ck = nn::load_checkpoint(ctx.path(o.checkpoint));
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const auto pseudo = train::load_pseudo_samples(manifest);
    save_training(ctx, train::finetune_student(std::move(ck), pseudo, cfg), out);
}

void cmd_finetune_student_direct(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const fs::path out = ctx.path(o.out);
    guard_file(ctx, out);
    auto cfg = apply_overrides(pc.finetune_student_direct, o, pc);
    if (o.train_refiner) cfg.freeze_refiner = false;
    auto ck = nn::load_checkpoint(ctx.path(o.checkpoint));
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const auto base = train::load_ground_truth_samples(manifest, Role::Base);
    const auto scribbled = train::load_scribble_samples(manifest);
    save_training(ctx, train::finetune_student_direct(std::move(ck), base, scribbled, cfg), out);
}

void predict_split(const nn::Model& model, const DatasetManifest& manifest, Role role, double test_noise,
                   const fs::path& dir)
{
    for (const auto& r : split_records(manifest, role)) {
        Image image = load_image(manifest.resolve(r.image));
        Image background = load_image(manifest.resolve(r.background));
        if (test_noise > 0.0) {
            auto noisy = train::add_noise(image, background, test_noise, derive_seed(r.seed, "test-noise"));
            image = std::move(noisy.image);
            background = std::move(noisy.background);
        }
        save_png(nn::predict(model, image, background), dir / (r.id + ".png"));
    }
}

void cmd_predict(const Context& ctx, const Options& o)
{
    if (o.test_noise < 0.0) throw UsageError("--test-noise must be >= 0");
    const fs::path dir = ctx.path(o.out);
    const auto ck = nn::load_checkpoint(ctx.path(o.checkpoint));
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const Role role = split_role(o.split);
    split_records(manifest, role);
    guard_dir(ctx, dir);
    predict_split(ck.model, manifest, role, o.test_noise, dir);
    *ctx.out << "wrote " << manifest.by_role(role).size() << " predictions to " << dir.string() << "\n";
}

void cmd_export_review(const Context& ctx, const Options& o)
{
    const fs::path dir = ctx.path(o.out);
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const auto recs = split_records(manifest, split_role(o.split));
    const auto preds = load_predictions(ctx.path(o.pred), recs);
    guard_dir(ctx, dir);
    for (const auto& r : recs)
        save_png(review_sheet(load_image(manifest.resolve(r.image)), load_image(manifest.resolve(r.background)),
                              preds.at(r.id)),
                 dir / (r.id + "_review.png"));
    *ctx.out << "wrote " << recs.size() << " review sheets to " << dir.string() << "\n";
}

metrics::MetricReport evaluate(const Context& ctx, const DatasetManifest& manifest, const fs::path& pred_dir,
                               Role role, int band)
{
    const auto recs = split_records(manifest, role);
    const auto preds = load_predictions(pred_dir, recs);
    const auto gts = load_ground_truth(manifest, recs);
    if (band <= 0) return metrics::evaluate_dataset(preds, gts);
    std::map<std::string, metrics::Region> regions;
    for (const auto& [id, g] : gts) regions.emplace(id, metrics::unknown_region(qc::trimap_from_alpha(g, band)));
    (void)ctx;
    return metrics::evaluate_dataset(preds, gts, &regions);
}

void cmd_eval(const Context& ctx, const Options& o)
{
    if (o.band < 0) throw UsageError("--band must be >= 1");
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const Role role = split_role(o.split);
    const auto report = evaluate(ctx, manifest, ctx.path(o.pred), role, o.band);
    if (!o.json.empty()) {
        const fs::path p = ctx.path(o.json);
        guard_file(ctx, p);
        write_text(p, metrics::render_json(report));
    }
    *ctx.out << metrics::render_table(report, o.band > 0 ? to_string(role) + " band " + std::to_string(o.band)
                                                         : to_string(role));
}

void cmd_qc(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const int band = o.band > 0 ? o.band : pc.band_radius;
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const auto recs = split_records(manifest, split_role(o.split));
    const auto preds = load_predictions(ctx.path(o.pred), recs);
    const auto gts = load_ground_truth(manifest, recs);
    std::map<std::string, AlphaMask> supervisors;
    std::map<std::string, Trimap> trimaps;
    for (const auto& r : recs) {
        Trimap t = qc::trimap_from_alpha(gts.at(r.id), band);
        auto solved = qc::supervise_solve(load_image(manifest.resolve(r.image)), t, pc.solver);
        if (solved.unreachable > 0)
            *ctx.out << "note: " << r.id << " has " << solved.unreachable << " unreachable unknown pixels (set to 0.5)\n";
        supervisors.emplace(r.id, std::move(solved.alpha));
        trimaps.emplace(r.id, std::move(t));
    }
    if (!o.supervisor_out.empty()) {
        const fs::path dir = ctx.path(o.supervisor_out);
        guard_dir(ctx, dir);
        for (const auto& [id, m] : supervisors) {
            save_png(m, dir / (id + ".png"));
            save_png(trimaps.at(id), dir / (id + "_trimap.png"));
        }
    }
    const auto report = qc::qc_validate(preds, supervisors, trimaps, pc.thresholds, band);
    if (!o.json.empty()) {
        const fs::path p = ctx.path(o.json);
        guard_file(ctx, p);
        write_text(p, qc::render_json(report));
    }
    *ctx.out << qc::render_table(report);
}

std::vector<double> parse_values(const std::string& s)
{
    std::vector<double> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size() || v < 0.0 || v > 1.0) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("--values: '" + item + "' is not a ratio in [0,1]");
        }
    }
    if (out.empty()) throw UsageError("--values is empty");
    return out;
}

void cmd_ratio_sweep(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    const auto values = parse_values(o.values);
    const fs::path dir = ctx.path(o.out);
    guard_dir(ctx, dir);
    const auto manifest = DatasetManifest::load(ctx.path(o.manifest));
    const Role role = split_role(o.split);

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::string table = "ratio\tmse_x1e4\tsad_x1e3\tgrad_x1e5\n";
    for (double p : values) {
        char tag[32];
        std::snprintf(tag, sizeof tag, "%.2f", p);
        Options run = o;
        run.base_fraction = p;
        const fs::path ck = dir / ("ratio_" + std::string(tag) + ".ckpt");
        const auto res = save_training(ctx, run_finetune_teacher(ctx, run, pc, manifest), ck);
        const fs::path pred = dir / ("pred_" + std::string(tag));
        fs::create_directories(pred);
        predict_split(res.model, manifest, role, 0.0, pred);
        const auto rep = evaluate(ctx, manifest, pred, role, 0);
        rows.push_back({{"ratio", p}, {"mse", rep.mse}, {"sad", rep.sad}, {"grad", rep.grad},
                        {"checkpoint", ck.filename().string()}});
        table += std::string(tag) + "\t" + metrics::format_scaled(rep.mse, metrics::kMseScale) + "\t" +
                 metrics::format_scaled(rep.sad, metrics::kSadScale) + "\t" +
                 metrics::format_scaled(rep.grad, metrics::kGradScale) + "\n";
    }
    write_text(dir / "ratio_sweep.tsv", table);
    write_text(dir / "ratio_sweep.json", rows.dump(2) + "\n");
    *ctx.out << table;
}

void cmd_serve(const Context& ctx, const Options& o)
{
    const PipelineConfig pc = config_for(ctx, o);
    ServerOptions so;
    so.manifest = ctx.path(o.manifest);
    DatasetManifest::load(so.manifest);
    if (!o.pred.empty()) so.predictions = ctx.path(o.pred);
    if (!o.static_dir.empty()) so.static_dir = ctx.path(o.static_dir);
    so.port = o.port >= 0 ? o.port : pc.port;
    AnnotationServer server(so);
    const int port = server.bind();
    *ctx.out << "serving " << so.manifest.string() << " on http://" << so.host << ":" << port << "\n" << std::flush;
    server.run();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Capture-stage matting pipeline", "stagematte"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    std::string workspace;
    bool force = false;
    app.add_option("--workspace", workspace, "Workspace root for relative paths")->envname(kWorkspaceEnv);
    app.add_flag("--force", force, "Overwrite existing outputs");

    auto seed_opt = [&](CLI::App* s) {
        s->add_option("--seed", o.seed, "Seed")->each([&](const std::string&) { o.seed_set = true; });
    };
    auto config_opt = [&](CLI::App* s, bool required = false) {
        auto* opt = s->add_option("--config", o.config, "Pipeline config (JSON)");
        if (required) opt->required();
    };
    auto common_train = [&](CLI::App* s) {
        config_opt(s);
        seed_opt(s);
        s->add_option("--manifest", o.manifest, "Dataset manifest")->required();
        s->add_option("--out", o.out, "Output checkpoint")->required();
        s->add_option("--iterations", o.iterations, "Override iteration count");
        s->add_option("--noise-sigma-max", o.noise_sigma_max, "Override noise augmentation sigma_max");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    config_opt(gen);
    seed_opt(gen);
    gen->add_option("--out", o.out, "Output directory")->required();

    auto* tb = app.add_subcommand("train-base", "Train a teacher or student on the base split");
    common_train(tb);
    tb->add_option("--model", o.model, "teacher | student")->check(CLI::IsMember({"teacher", "student"}));

    auto* ft = app.add_subcommand("finetune-teacher", "Hybrid scribble fine-tuning of a teacher");
    common_train(ft);
    ft->add_option("--checkpoint", o.checkpoint, "Base teacher checkpoint")->required();
    ft->add_option("--base-fraction", o.base_fraction, "Share of base samples per batch");

    auto* di = app.add_subcommand("distill", "Write teacher pseudo-labels for the unlabeled split");
    di->add_option("--checkpoint", o.checkpoint, "Teacher checkpoint")->required();
    di->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    di->add_option("--out", o.out, "Output directory")->required();

    auto* fs_ = app.add_subcommand("finetune-student", "Two-phase student fine-tuning on pseudo-labels");
    common_train(fs_);
    fs_->add_option("--checkpoint", o.checkpoint, "Student checkpoint")->required();

    auto* fd = app.add_subcommand("finetune-student-direct", "Hybrid scribble fine-tuning of the student");
    common_train(fd);
    fd->add_option("--checkpoint", o.checkpoint, "Student checkpoint")->required();
    fd->add_option("--base-fraction", o.base_fraction, "Share of base samples per batch");
    fd->add_flag("--train-refiner", o.train_refiner, "Also train the refiner");

    auto* pr = app.add_subcommand("predict", "Write alpha predictions for a split");
    pr->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
    pr->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    pr->add_option("--split", o.split, "Split (role)");
    pr->add_option("--out", o.out, "Output directory")->required();
    pr->add_option("--test-noise", o.test_noise, "Gaussian sigma added to I and B before inference");

    auto* ex = app.add_subcommand("export-review", "Write image/background/prediction/diff sheets");
    ex->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    ex->add_option("--split", o.split, "Split (role)");
    ex->add_option("--pred", o.pred, "Prediction directory")->required();
    ex->add_option("--out", o.out, "Output directory")->required();

    auto* sv = app.add_subcommand("serve", "Serve the annotation API");
    config_opt(sv);
    sv->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    sv->add_option("--port", o.port, "Port (0 picks a free one)");
    sv->add_option("--pred", o.pred, "Prediction directory for the prediction layer");
    sv->add_option("--static", o.static_dir, "Frontend directory served at /");

    auto* ev = app.add_subcommand("eval", "Metric report for predictions");
    ev->add_option("--pred", o.pred, "Prediction directory")->required();
    ev->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    ev->add_option("--split", o.split, "Split (role)");
    ev->add_option("--band", o.band, "Restrict to the trimap band of this radius");
    ev->add_option("--json", o.json, "Also write the report as JSON");

    auto* qc_ = app.add_subcommand("qc", "Supervisor quality control on the trimap band");
    config_opt(qc_);
    qc_->add_option("--pred", o.pred, "Prediction directory")->required();
    qc_->add_option("--manifest", o.manifest, "Dataset manifest")->required();
    qc_->add_option("--split", o.split, "Split (role)");
    qc_->add_option("--band", o.band, "Band radius (default from config)");
    qc_->add_option("--json", o.json, "Also write the report as JSON");
    qc_->add_option("--supervisor-out", o.supervisor_out, "Write supervisor masks and trimaps here");

    auto* rs = app.add_subcommand("ratio-sweep", "Fine-tune the teacher once per base fraction");
    common_train(rs);
    rs->add_option("--checkpoint", o.checkpoint, "Base teacher checkpoint")->required();
    rs->add_option("--values", o.values, "Comma-separated base fractions");
    rs->add_option("--split", o.split, "Evaluation split (role)");

    std::vector<const char*> argv{"stagematte"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: " << e.what() << "\n";
        return 1;
    }

    Context ctx;
    ctx.workspace = workspace.empty() ? fs::current_path() : fs::path(workspace);
    ctx.force = force;
    ctx.out = &out;
    try {
        if (*gen) cmd_gen_data(ctx, o);
        else if (*tb) cmd_train_base(ctx, o);
        else if (*ft) cmd_finetune_teacher(ctx, o);
        else if (*di) cmd_distill(ctx, o);
        else if (*fs_) cmd_finetune_student(ctx, o);
        else if (*fd) cmd_finetune_student_direct(ctx, o);
        else if (*pr) cmd_predict(ctx, o);
        else if (*ex) cmd_export_review(ctx, o);
        else if (*sv) cmd_serve(ctx, o);
        else if (*ev) cmd_eval(ctx, o);
        else if (*qc_) cmd_qc(ctx, o);
        else if (*rs) cmd_ratio_sweep(ctx, o);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int run_cli(int argc, const char* const* argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace stagematte::pipeline
