#include "stagematte/nn/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "stagematte/png_io.hpp"

namespace stagematte::nn {

AdamState AdamState::zeros_for(const ParamSet<float>& params)
{
    AdamState s;
    for (const auto& t : params.tensors) {
        s.m.emplace_back(t.value.size(), 0.f);
        s.v.emplace_back(t.value.size(), 0.f);
    }
    return s;
}

void adam_step(ParamSet<float>& params, const ParamSet<float>& grads, const AdamHyper& h, AdamState& state,
               const std::vector<std::string>& frozen)
{
    if (state.m.empty()) state = AdamState::zeros_for(params);
    if (grads.tensors.size() != params.tensors.size() || state.m.size() != params.tensors.size())
        throw DimensionError("adam_step: parameter/gradient/state tensor counts differ");
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        const auto& p = params.tensors[k];
        const auto& g = grads.tensors[k];
        if (g.name != p.name || g.value.size() != p.value.size() || state.m[k].size() != p.value.size())
            throw DimensionError("adam_step: shape mismatch for tensor " + p.name);
        for (float v : g.value)
            if (!std::isfinite(v)) throw NumericalError("adam_step: non-finite gradient in tensor " + p.name);
    }

    const std::int64_t t = ++state.step;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        auto& p = params.tensors[k];
        if (std::find(frozen.begin(), frozen.end(), p.name) != frozen.end()) continue;
        const auto& g = grads.tensors[k].value;
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = g[i];
            const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps);
            p.value[i] = static_cast<float>(p.value[i] - update);
        }
    }
}

template <typename T>
void scale_grads(ParamSet<T>& grads, T factor)
{
    for (auto& t : grads.tensors)
        for (T& v : t.value) v *= factor;
}

template void scale_grads<float>(ParamSet<float>&, float);
template void scale_grads<double>(ParamSet<double>&, double);

// Layout (all integers little-endian):
//   8 bytes   magic "SMCKPT01"
//   u64       header length N
//   N bytes   UTF-8 JSON header {kind, archs, iteration, adam_step, tensors:[{name, shape}]}
//   payload   for each tensor in header order: value, adam m, adam v as f32
namespace {

constexpr char kMagic[8] = {'S', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32s(std::vector<std::uint8_t>& out, const std::vector<float>& v)
{
    for (float f : v) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const
    {
        if (pos + n > bytes.size()) throw FormatError("checkpoint truncated");
    }
    std::uint64_t u64()
    {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::vector<float> f32s(std::size_t n)
    {
        need(4 * n);
        std::vector<float> v(n);
        for (std::size_t k = 0; k < n; ++k) {
            std::uint32_t bits = 0;
            for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[pos + 4 * k + i]) << (8 * i);
            v[k] = std::bit_cast<float>(bits);
        }
        pos += 4 * n;
        return v;
    }
};

std::vector<ArchSpec> archs_of(const Model& m)
{
    if (m.kind == ModelKind::Teacher) return {m.teacher};
    return {m.student.coarse, m.student.refiner};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck)
{
    const AdamState adam = ck.adam.m.empty() ? AdamState::zeros_for(ck.model.params) : ck.adam;
    nlohmann::json header;
    header["kind"] = to_string(ck.model.kind);
    header["archs"] = archs_of(ck.model);
    header["iteration"] = ck.iteration;
    header["adam_step"] = adam.step;
    auto& tensors = header["tensors"] = nlohmann::json::array();
    for (const auto& t : ck.model.params.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (std::size_t k = 0; k < ck.model.params.tensors.size(); ++k) {
        put_f32s(out, ck.model.params.tensors[k].value);
        put_f32s(out, adam.m[k]);
        put_f32s(out, adam.v[k]);
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("not a checkpoint file");
    Reader r{bytes, 8};
    const std::uint64_t n = r.u64();
    r.need(n);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + n));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    r.pos += n;

    Checkpoint ck;
    ck.model.kind = model_kind_from(header.at("kind").get<std::string>());
    const auto archs = header.at("archs").get<std::vector<ArchSpec>>();
    if (ck.model.kind == ModelKind::Teacher) {
        if (archs.size() != 1) throw FormatError("teacher checkpoint must hold one arch");
        ck.model.teacher = archs[0];
    } else {
        if (archs.size() != 2) throw FormatError("student checkpoint must hold two archs");
        ck.model.student = {archs[0], archs[1]};
    }
    ck.iteration = header.at("iteration").get<std::int64_t>();
    ck.adam.step = header.at("adam_step").get<std::int64_t>();
    for (const auto& t : header.at("tensors")) {
        ParamTensor<float> p{t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>(), {}};
        std::size_t count = 1;
        for (int d : p.shape) count *= static_cast<std::size_t>(d);
        p.value = r.f32s(count);
        ck.adam.m.push_back(r.f32s(count));
        ck.adam.v.push_back(r.f32s(count));
        ck.model.params.tensors.push_back(std::move(p));
    }
    if (r.pos != bytes.size()) throw FormatError("checkpoint has trailing bytes");

    // Tensors must be exactly what the stored architecture would create.
    ParamSet<float> expected;
    if (ck.model.kind == ModelKind::Teacher) {
        ck.model.teacher.validate();
        init_params(ck.model.teacher, kTeacherPrefix, 0, expected);
    } else {
        ck.model.student.coarse.validate();
        ck.model.student.refiner.validate();
        init_params(ck.model.student.coarse, kCoarsePrefix, 0, expected);
        init_params(ck.model.student.refiner, kRefinerPrefix, 0, expected);
    }
    const auto& got = ck.model.params.tensors;
    if (got.size() != expected.tensors.size())
        throw FormatError("checkpoint holds " + std::to_string(got.size()) + " tensors, architecture needs " +
                          std::to_string(expected.tensors.size()));
    for (std::size_t k = 0; k < got.size(); ++k)
        if (got[k].name != expected.tensors[k].name || got[k].shape != expected.tensors[k].shape)
            throw FormatError("checkpoint tensor '" + got[k].name + "' does not match the architecture");
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path)
{
    write_file_atomic(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace stagematte::nn
