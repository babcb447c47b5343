#include "stagematte/server.hpp"

#include <httplib.h>

#include <map>
#include <mutex>

#include <json.hpp>

#include "stagematte/manifest.hpp"
#include "stagematte/png_io.hpp"
#include "stagematte/review.hpp"

namespace stagematte::pipeline {

namespace fs = std::filesystem;

struct AnnotationServer::Impl {
    ServerOptions opt;
    httplib::Server http;
    std::mutex manifest_mutex;
    DatasetManifest manifest;
    std::map<std::string, std::mutex> write_locks;  // one per sample, created up front

    explicit Impl(ServerOptions o) : opt(std::move(o)), manifest(DatasetManifest::load(opt.manifest))
    {
        for (const auto& r : manifest.records()) write_locks[r.id];
        routes();
    }

    std::optional<ManifestRecord> record(const std::string& id)
    {
        std::lock_guard lock(manifest_mutex);
        const ManifestRecord* r = manifest.find_mutable(id);
        if (!r) return std::nullopt;
        return *r;
    }

    static void fail(httplib::Response& res, int status, const std::string& message)
    {
        res.status = status;
        res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
    }

    static void png(httplib::Response& res, const std::vector<std::uint8_t>& bytes)
    {
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    }

    void routes()
    {
        http.Get("/api/samples", [this](const httplib::Request&, httplib::Response& res) {
            std::vector<ManifestRecord> recs;
            {
                std::lock_guard lock(manifest_mutex);
                recs = manifest.records();
            }
            nlohmann::ordered_json list = nlohmann::ordered_json::array();
            for (const auto& r : recs) {
                std::size_t n = 0;
                if (r.scribbles) n = annotated_count(load_scribbles(manifest.resolve(*r.scribbles)));
                list.push_back({{"id", r.id}, {"role", to_string(r.role)}, {"annotated", n > 0}, {"scribble_pixels", n}});
            }
            res.set_content(list.dump(), "application/json");
        });

        http.Get(R"(/api/samples/([^/]+)/layer/([a-z]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1], layer = req.matches[2];
            const auto r = record(id);
            if (!r) return fail(res, 404, "unknown sample '" + id + "'");
            if (layer == "image") return png(res, read_file(manifest.resolve(r->image)));
            if (layer == "background") return png(res, read_file(manifest.resolve(r->background)));
            if (layer == "diff")
                return png(res, encode_png(diff_layer(load_image(manifest.resolve(r->image)),
                                                      load_image(manifest.resolve(r->background)))));
            if (layer == "prediction") {
                const fs::path p = opt.predictions ? *opt.predictions / (id + ".png") : fs::path();
                if (p.empty() || !fs::exists(p)) return fail(res, 404, "no prediction for '" + id + "'");
                return png(res, read_file(p));
            }
            fail(res, 404, "unknown layer '" + layer + "' (image, background, prediction, diff)");
        });

        http.Get(R"(/api/samples/([^/]+)/scribbles)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto r = record(id);
            if (!r) return fail(res, 404, "unknown sample '" + id + "'");
            if (r->scribbles) return png(res, read_file(manifest.resolve(*r->scribbles)));
            const Image img = load_image(manifest.resolve(r->image));
            png(res, encode_png(ScribbleMap(img.width(), img.height(), Scribble::Unlabeled)));
        });

        http.Put(R"(/api/samples/([^/]+)/scribbles)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto r = record(id);
            if (!r) return fail(res, 404, "unknown sample '" + id + "'");
            if (r->role == Role::Validation) return fail(res, 400, "validation samples cannot be annotated");

            std::unique_lock lock(write_locks.at(id), std::try_to_lock);
            if (!lock.owns_lock()) return fail(res, 409, "another scribble write for '" + id + "' is in flight");

            const std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
            ScribbleMap scribbles;
            try {
                scribbles = decode_scribbles(bytes);
            } catch (const DataError& e) {
                return fail(res, 400, std::string("invalid scribble PNG: ") + e.what());
            }
            const Image img = load_image(manifest.resolve(r->image));
            if (!scribbles.same_size(img))
                return fail(res, 400,
                            "scribble size mismatch: expected " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()) + ", received " + std::to_string(scribbles.width()) +
                                "x" + std::to_string(scribbles.height()));

            const std::string rel = r->scribbles ? *r->scribbles : "scribbles/" + id + "_scribbles.png";
            fs::create_directories(manifest.resolve(rel).parent_path());
            write_file_atomic(manifest.resolve(rel), bytes);
            {
                std::lock_guard mlock(manifest_mutex);
                manifest.find_mutable(id)->scribbles = rel;
                manifest.save(opt.manifest);
            }
            res.set_content(nlohmann::json{{"id", id}, {"scribble_pixels", annotated_count(scribbles)}}.dump(),
                            "application/json");
        });

        http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                fail(res, 500, e.what());
            } catch (...) {
                fail(res, 500, "internal error");
            }
        });

        if (opt.static_dir && !http.set_mount_point("/", opt.static_dir->string()))
            throw IoError("static directory " + opt.static_dir->string() + " does not exist");
    }
};

AnnotationServer::AnnotationServer(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind()
{
    int port = impl_->opt.port;
    if (port == 0) {
        port = impl_->http.bind_to_any_port(impl_->opt.host);
    } else if (!impl_->http.bind_to_port(impl_->opt.host, port)) {
        port = -1;
    }
    if (port < 0) throw IoError("cannot bind " + impl_->opt.host + ":" + std::to_string(impl_->opt.port));
    return port;
}

void AnnotationServer::run() { impl_->http.listen_after_bind(); }

void AnnotationServer::stop()
{
    if (impl_) impl_->http.stop();
}

}  // namespace stagematte::pipeline
