#include "stagematte/nn/arch.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "stagematte/rng.hpp"

namespace stagematte::nn {

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "none";
}

std::string to_string(ArchRole r)
{
    switch (r) {
    case ArchRole::Teacher: return "teacher";
    case ArchRole::StudentCoarse: return "student_coarse";
    case ArchRole::StudentRefiner: return "student_refiner";
    }
    return "teacher";
}

namespace {

Activation activation_from(const std::string& s)
{
    if (s == "none") return Activation::None;
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw FormatError("unknown activation '" + s + "'");
}

ArchRole role_from(const std::string& s)
{
    if (s == "teacher") return ArchRole::Teacher;
    if (s == "student_coarse") return ArchRole::StudentCoarse;
    if (s == "student_refiner") return ArchRole::StudentRefiner;
    throw FormatError("unknown arch role '" + s + "'");
}

LayerSpec conv(std::string name, int out, int stride, Activation act, std::vector<LayerSource> in)
{
    return LayerSpec{std::move(name), 3, out, stride, act, std::move(in)};
}

}  // namespace

std::vector<int> ArchSpec::layer_input_channels() const
{
    std::vector<int> ch;
    for (const auto& l : layers) {
        int c = 0;
        for (const auto& s : l.inputs) c += s.node < 0 ? input_channels : layers[static_cast<std::size_t>(s.node)].out_channels;
        ch.push_back(c);
    }
    return ch;
}

int ArchSpec::required_divisor() const
{
    // scale[i] = downsampling factor of layer i's output relative to the input
    std::vector<int> scale;
    int worst = 1;
    for (const auto& l : layers) {
        const auto& s = l.inputs.front();
        const int in_scale = s.node < 0 ? 1 : scale[static_cast<std::size_t>(s.node)];
        const int sc = in_scale / std::max(1, s.upsample) * l.stride;
        scale.push_back(sc);
        worst = std::max(worst, sc);
    }
    return worst;
}

void ArchSpec::validate() const
{
    if (layers.empty()) throw DimensionError("arch has no layers");
    std::vector<int> scale;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.inputs.empty()) throw DimensionError("layer " + l.name + " has no inputs");
        if (l.kernel < 1 || l.kernel % 2 == 0 || l.stride < 1 || l.out_channels < 1)
            throw DimensionError("layer " + l.name + " has an invalid shape");
        int common = -1;
        for (const auto& s : l.inputs) {
            if (s.node >= static_cast<int>(i)) throw DimensionError("layer " + l.name + " reads a later layer");
            if (s.upsample < 1) throw DimensionError("layer " + l.name + " has upsample < 1");
            const int base = s.node < 0 ? 1 : scale[static_cast<std::size_t>(s.node)];
            if (base % s.upsample != 0) throw DimensionError("layer " + l.name + " upsamples past input resolution");
            const int sc = base / s.upsample;
            if (common >= 0 && sc != common) throw DimensionError("layer " + l.name + " concatenates mismatched resolutions");
            common = sc;
        }
        scale.push_back(common * l.stride);
    }
    const auto& last = layers.back();
    if (last.out_channels != 1 || last.activation != Activation::Sigmoid || scale.back() != 1)
        throw DimensionError("final layer must be a full-resolution single sigmoid channel");
}

ArchSpec default_teacher_arch()
{
    using A = Activation;
    const A H = A::Tanh;
    ArchSpec a;
    a.role = ArchRole::Teacher;
    a.input_channels = 7;
    a.layers = {
        conv("enc1", 16, 2, H, {{-1, 1}}),
        conv("enc2", 32, 2, H, {{0, 1}}),
        conv("enc3", 64, 2, H, {{1, 1}}),
        conv("mid", 64, 1, H, {{2, 1}}),
        conv("dec3", 32, 1, H, {{3, 2}, {1, 1}}),
        conv("dec2", 16, 1, H, {{4, 2}, {0, 1}}),
        conv("dec1", 8, 1, H, {{5, 2}, {-1, 1}}),
        conv("out", 1, 1, A::Sigmoid, {{6, 1}}),
    };
    return a;
}

ArchSpec default_student_coarse_arch()
{
    using A = Activation;
    const A H = A::Tanh;
    ArchSpec a;
    a.role = ArchRole::StudentCoarse;
    a.input_channels = 7;
    a.layers = {
        conv("c1", 16, 1, H, {{-1, 1}}),
        conv("c2", 24, 2, H, {{0, 1}}),
        conv("c3", 24, 1, H, {{1, 1}}),
        conv("c4", 16, 1, H, {{2, 2}, {0, 1}}),
        conv("c5", 1, 1, A::Sigmoid, {{3, 1}}),
    };
    return a;
}

ArchSpec default_student_refiner_arch()
{
    using A = Activation;
    const A H = A::Tanh;
    ArchSpec a;
    a.role = ArchRole::StudentRefiner;
    a.input_channels = 7;
    a.layers = {
        conv("r1", 8, 1, H, {{-1, 1}}),
        conv("r2", 8, 1, H, {{0, 1}}),
        conv("r3", 1, 1, A::Sigmoid, {{1, 1}}),
    };
    return a;
}

void to_json(nlohmann::json& j, const ArchSpec& a)
{
    j = nlohmann::json{{"role", to_string(a.role)}, {"input_channels", a.input_channels}};
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& l : a.layers) {
        nlohmann::json in = nlohmann::json::array();
        for (const auto& s : l.inputs) in.push_back({{"node", s.node}, {"upsample", s.upsample}});
        layers.push_back({{"name", l.name},
                          {"kernel", l.kernel},
                          {"out_channels", l.out_channels},
                          {"stride", l.stride},
                          {"activation", to_string(l.activation)},
                          {"inputs", in}});
    }
}

void from_json(const nlohmann::json& j, ArchSpec& a)
{
    a.role = role_from(j.at("role").get<std::string>());
    a.input_channels = j.at("input_channels").get<int>();
    a.layers.clear();
    for (const auto& l : j.at("layers")) {
        LayerSpec s;
        s.name = l.at("name").get<std::string>();
        s.kernel = l.at("kernel").get<int>();
        s.out_channels = l.at("out_channels").get<int>();
        s.stride = l.at("stride").get<int>();
        s.activation = activation_from(l.at("activation").get<std::string>());
        for (const auto& in : l.at("inputs")) s.inputs.push_back({in.at("node").get<int>(), in.at("upsample").get<int>()});
        a.layers.push_back(std::move(s));
    }
    a.validate();
}

template <typename T>
const ParamTensor<T>& ParamSet<T>::get(const std::string& name) const
{
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw DataError("parameter tensor '" + name + "' not found");
}

template <typename T>
ParamTensor<T>& ParamSet<T>::get(const std::string& name)
{
    for (auto& t : tensors)
        if (t.name == name) return t;
    throw DataError("parameter tensor '" + name + "' not found");
}

template <typename T>
bool ParamSet<T>::contains(const std::string& name) const
{
    return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.name == name; });
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.value.size();
    return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const
{
    ParamSet out;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.shape, std::vector<T>(t.value.size(), T(0))});
    return out;
}

template struct ParamSet<float>;
template struct ParamSet<double>;

void init_params(const ArchSpec& arch, const std::string& prefix, std::uint64_t seed, ParamSet<float>& out)
{
    arch.validate();
    const auto in_ch = arch.layer_input_channels();
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& l = arch.layers[i];
        const int fan_in = in_ch[i] * l.kernel * l.kernel;
        const std::string base = prefix + "." + l.name;
        Rng rng(derive_seed(seed, base));
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
        ParamTensor<float> w{base + ".weight", {l.out_channels, in_ch[i], l.kernel, l.kernel}, {}};
        w.value.resize(static_cast<std::size_t>(l.out_channels) * fan_in);
        for (float& v : w.value) v = static_cast<float>(normal(rng));
        out.tensors.push_back(std::move(w));
        out.tensors.push_back({base + ".bias", {l.out_channels}, std::vector<float>(static_cast<std::size_t>(l.out_channels), 0.f)});
    }
}

ParamSet<float> init_params(const ArchSpec& arch, const std::string& prefix, std::uint64_t seed)
{
    ParamSet<float> p;
    init_params(arch, prefix, seed, p);
    return p;
}

}  // namespace stagematte::nn
