#include "stagematte/nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "stagematte/nn/kernels.hpp"

namespace stagematte::nn {

namespace {

template <typename T>
const Tensor<T>& source_tensor(const Tensor<T>& input, const std::vector<Tensor<T>>& outputs, int node)
{
    return node < 0 ? input : outputs[static_cast<std::size_t>(node)];
}

template <typename T>
Tensor<T> gather_inputs(const LayerSpec& layer, const Tensor<T>& input, const std::vector<Tensor<T>>& outputs)
{
    std::vector<Tensor<T>> parts;
    int channels = 0;
    for (const auto& s : layer.inputs) {
        const Tensor<T>& src = source_tensor(input, outputs, s.node);
        parts.push_back(s.upsample > 1 ? upsample_nearest(src, s.upsample) : src);
        channels += parts.back().channels;
    }
    const int h = parts.front().height, w = parts.front().width;
    Tensor<T> cat(channels, h, w);
    auto it = cat.data.begin();
    for (const auto& p : parts) {
        if (p.height != h || p.width != w)
            throw DimensionError("layer " + layer.name + ": concatenated inputs differ in size");
        it = std::copy(p.data.begin(), p.data.end(), it);
    }
    return cat;
}

ConvShape conv_shape(const LayerSpec& l, int in_channels)
{
    return ConvShape{in_channels, l.out_channels, l.kernel, l.stride};
}

template <typename T>
void check_divisible(const Image& image, const Image& background, int divisor)
{
    require_same_size("forward(I,B)", image.width(), image.height(), background.width(), background.height());
    if (image.width() % divisor != 0 || image.height() % divisor != 0)
        throw DimensionError("input " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                             " is not divisible by " + std::to_string(divisor));
}

}  // namespace

template <typename T>
Tensor<T> graph_forward(const ArchSpec& arch, const std::string& prefix, const ParamSet<T>& params,
                        const Tensor<T>& input, GraphTrace<T>* trace)
{
    if (input.channels != arch.input_channels)
        throw DimensionError("network input has " + std::to_string(input.channels) + " channels, arch expects " +
                             std::to_string(arch.input_channels));
    std::vector<Tensor<T>> outputs;
    outputs.reserve(arch.layers.size());
    if (trace) {
        trace->arch = &arch;
        trace->prefix = prefix;
        trace->input = input;
        trace->layer_inputs.clear();
    }
    for (const auto& layer : arch.layers) {
        Tensor<T> x = gather_inputs(layer, input, outputs);
        const std::string base = prefix + "." + layer.name;
        const auto& w = params.get(base + ".weight");
        const auto& b = params.get(base + ".bias");
        Tensor<T> y;
        kernels::conv2d_forward<T>(x, w.value, b.value, conv_shape(layer, x.channels), y);
        if (layer.activation == Activation::Relu) relu_inplace(y);
        if (layer.activation == Activation::Tanh) tanh_inplace(y);
        if (layer.activation == Activation::Sigmoid) sigmoid_inplace(y);
        if (trace) trace->layer_inputs.push_back(std::move(x));
        outputs.push_back(std::move(y));
    }
    Tensor<T> result = outputs.back();
    if (trace) trace->outputs = std::move(outputs);
    return result;
}

template <typename T>
void graph_backward(const GraphTrace<T>& trace, const ParamSet<T>& params, const Tensor<T>& grad_output,
                    ParamSet<T>& grads, Tensor<T>* grad_input, bool accumulate_params)
{
    if (!trace.arch || trace.outputs.size() != trace.arch->layers.size() ||
        trace.layer_inputs.size() != trace.arch->layers.size())
        throw DataError("graph_backward: trace does not hold a recorded forward pass");
    const ArchSpec& arch = *trace.arch;
    if (!grad_output.same_shape(trace.outputs.back()))
        throw DimensionError("graph_backward: upstream gradient " + grad_output.shape_string() +
                             " does not match output " + trace.outputs.back().shape_string());

    const std::size_t n = arch.layers.size();
    std::vector<Tensor<T>> d_out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = trace.outputs[i];
        d_out[i] = Tensor<T>(o.channels, o.height, o.width);
    }
    d_out.back() = grad_output;
    Tensor<T> d_in(trace.input.channels, trace.input.height, trace.input.width);

    for (std::size_t li = n; li-- > 0;) {
        const LayerSpec& layer = arch.layers[li];
        const Tensor<T>& x = trace.layer_inputs[li];
        const ConvShape shape = conv_shape(layer, x.channels);
        Tensor<T>& dz = d_out[li];
        if (layer.activation == Activation::Relu) relu_backward_inplace(trace.outputs[li], dz);
        if (layer.activation == Activation::Tanh) tanh_backward_inplace(trace.outputs[li], dz);
        if (layer.activation == Activation::Sigmoid) sigmoid_backward_inplace(trace.outputs[li], dz);

        const std::string base = trace.prefix + "." + layer.name;
        if (accumulate_params) {
            auto& gw = grads.get(base + ".weight").value;
            auto& gb = grads.get(base + ".bias").value;
            kernels::conv2d_backward_params<T>(dz, x, shape, gw, gb);
        }

        Tensor<T> dx(x.channels, x.height, x.width);
        kernels::conv2d_backward_input<T>(dz, params.get(base + ".weight").value, shape, dx);

        // Split the concatenated gradient back onto the sources.
        int offset = 0;
        for (const auto& s : layer.inputs) {
            const Tensor<T>& src = source_tensor(trace.input, trace.outputs, s.node);
            const int c = src.channels;
            Tensor<T> part(c, dx.height, dx.width);
            std::copy(dx.plane(offset), dx.plane(offset) + part.size(), part.data.begin());
            if (s.upsample > 1) part = upsample_nearest_adjoint(part, s.upsample);
            Tensor<T>& dst = s.node < 0 ? d_in : d_out[static_cast<std::size_t>(s.node)];
            for (std::size_t k = 0; k < part.size(); ++k) dst.data[k] += part.data[k];
            offset += c;
        }
    }
    if (grad_input) *grad_input = std::move(d_in);
}

template <typename T>
Tensor<T> matting_input(const Image& image, const Image& background)
{
    require_same_size("matting_input", image.width(), image.height(), background.width(), background.height());
    const int h = image.height(), w = image.width();
    Tensor<T> t(7, h, w);
    const AlphaMask diff = mean_abs_diff(image, background);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                t.at(c, y, x) = static_cast<T>(image.at(x, y, c));
                t.at(3 + c, y, x) = static_cast<T>(background.at(x, y, c));
            }
            t.at(6, y, x) = static_cast<T>(diff.at(x, y));
        }
    return t;
}

template <typename T>
Tensor<T> mask_to_tensor(const AlphaMask& m)
{
    Tensor<T> t(1, m.height(), m.width());
    for (std::size_t i = 0; i < m.pixel_count(); ++i) t.data[i] = static_cast<T>(m[i]);
    return t;
}

template <typename T>
AlphaMask tensor_to_mask(const Tensor<T>& t)
{
    std::vector<float> v(t.plane_size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t.data[i]);
    return AlphaMask(t.width, t.height, std::move(v));
}

template <typename T>
TeacherPass<T> teacher_forward(const ArchSpec& arch, const ParamSet<T>& params, const Image& image,
                               const Image& background, bool record)
{
    check_divisible<T>(image, background, arch.required_divisor());
    TeacherPass<T> pass;
    pass.output = graph_forward(arch, kTeacherPrefix, params, matting_input<T>(image, background),
                                record ? &pass.trace : nullptr);
    return pass;
}

template <typename T>
void teacher_backward(const TeacherPass<T>& pass, const ParamSet<T>& params, const Tensor<T>& grad_output,
                      ParamSet<T>& grads)
{
    graph_backward(pass.trace, params, grad_output, grads);
}

AlphaMask forward_teacher(const ArchSpec& arch, const ParamSet<float>& params, const Image& image,
                          const Image& background)
{
    return tensor_to_mask(teacher_forward<float>(arch, params, image, background, false).output);
}

template <typename T>
StudentPass<T> student_forward(const StudentArch& arch, const ParamSet<T>& params, const Image& image,
                               const Image& background, bool record)
{
    const int divisor = kCoarseFactor * arch.coarse.required_divisor();
    check_divisible<T>(image, background, std::max(divisor, arch.refiner.required_divisor()));
    const int h = image.height(), w = image.width();

    StudentPass<T> pass;
    const Tensor<T> coarse_in =
        matting_input<T>(downsample_area(image, kCoarseFactor), downsample_area(background, kCoarseFactor));
    pass.coarse = graph_forward(arch.coarse, kCoarsePrefix, params, coarse_in, record ? &pass.coarse_trace : nullptr);
    pass.upsampled = resize_bilinear(pass.coarse, h, w);

    Tensor<T> refine_in(7, h, w);
    const Tensor<T> ib = matting_input<T>(image, background);
    std::copy(ib.data.begin(), ib.data.begin() + 6 * static_cast<std::ptrdiff_t>(ib.plane_size()), refine_in.data.begin());
    std::copy(pass.upsampled.data.begin(), pass.upsampled.data.end(), refine_in.plane(6));
    const Tensor<T> s =
        graph_forward(arch.refiner, kRefinerPrefix, params, refine_in, record ? &pass.refiner_trace : nullptr);

    pass.unclamped = Tensor<T>(1, h, w);
    pass.refined = Tensor<T>(1, h, w);
    for (std::size_t i = 0; i < pass.refined.size(); ++i) {
        const T v = pass.upsampled.data[i] + (T(2) * s.data[i] - T(1));
        pass.unclamped.data[i] = v;
        pass.refined.data[i] = std::clamp(v, T(0), T(1));
    }
    return pass;
}

template <typename T>
void student_backward(const StudentPass<T>& pass, const ParamSet<T>& params, const Tensor<T>* grad_coarse,
                      const Tensor<T>* grad_refined, ParamSet<T>& grads, bool train_refiner)
{
    Tensor<T> d_coarse(pass.coarse.channels, pass.coarse.height, pass.coarse.width);
    if (grad_coarse) {
        if (!grad_coarse->same_shape(pass.coarse)) throw DimensionError("student_backward: coarse gradient shape");
        d_coarse = *grad_coarse;
    }
    if (grad_refined) {
        if (!grad_refined->same_shape(pass.refined)) throw DimensionError("student_backward: refined gradient shape");
        Tensor<T> d_pre(1, pass.refined.height, pass.refined.width);
        for (std::size_t i = 0; i < d_pre.size(); ++i) {
            const T v = pass.unclamped.data[i];
            d_pre.data[i] = (v > T(0) && v < T(1)) ? grad_refined->data[i] : T(0);
        }
        Tensor<T> d_s = d_pre;
        for (T& v : d_s.data) v *= T(2);
        Tensor<T> d_refine_in;
        graph_backward(pass.refiner_trace, params, d_s, grads, &d_refine_in, train_refiner);
        Tensor<T> d_up = d_pre;
        const T* via_refiner = d_refine_in.plane(6);
        for (std::size_t i = 0; i < d_up.size(); ++i) d_up.data[i] += via_refiner[i];
        const Tensor<T> back = resize_bilinear_adjoint(d_up, pass.coarse.height, pass.coarse.width);
        for (std::size_t i = 0; i < d_coarse.size(); ++i) d_coarse.data[i] += back.data[i];
    }
    graph_backward(pass.coarse_trace, params, d_coarse, grads);
}

StudentOutput forward_student(const StudentArch& arch, const ParamSet<float>& params, const Image& image,
                              const Image& background)
{
    const auto pass = student_forward<float>(arch, params, image, background, false);
    return {tensor_to_mask(pass.coarse), tensor_to_mask(pass.refined)};
}

std::string to_string(ModelKind k) { return k == ModelKind::Teacher ? "teacher" : "student"; }

ModelKind model_kind_from(const std::string& s)
{
    if (s == "teacher") return ModelKind::Teacher;
    if (s == "student") return ModelKind::Student;
    throw FormatError("unknown model kind '" + s + "'");
}

Model make_teacher(std::uint64_t seed)
{
    Model m;
    m.kind = ModelKind::Teacher;
    m.params = init_params(m.teacher, kTeacherPrefix, seed);
    return m;
}

Model make_student(std::uint64_t seed)
{
    Model m;
    m.kind = ModelKind::Student;
    init_params(m.student.coarse, kCoarsePrefix, seed, m.params);
    init_params(m.student.refiner, kRefinerPrefix, seed, m.params);
    return m;
}

AlphaMask predict(const Model& model, const Image& image, const Image& background)
{
    if (model.kind == ModelKind::Teacher) return forward_teacher(model.teacher, model.params, image, background);
    return forward_student(model.student, model.params, image, background).refined;
}

#define STAGEMATTE_INSTANTIATE(T)                                                                              \
    template Tensor<T> graph_forward<T>(const ArchSpec&, const std::string&, const ParamSet<T>&,               \
                                        const Tensor<T>&, GraphTrace<T>*);                                     \
    template void graph_backward<T>(const GraphTrace<T>&, const ParamSet<T>&, const Tensor<T>&, ParamSet<T>&, \
                                    Tensor<T>*, bool);                                                         \
    template Tensor<T> matting_input<T>(const Image&, const Image&);                                           \
    template Tensor<T> mask_to_tensor<T>(const AlphaMask&);                                                    \
    template AlphaMask tensor_to_mask<T>(const Tensor<T>&);                                                    \
    template TeacherPass<T> teacher_forward<T>(const ArchSpec&, const ParamSet<T>&, const Image&, const Image&, \
                                               bool);                                                          \
    template void teacher_backward<T>(const TeacherPass<T>&, const ParamSet<T>&, const Tensor<T>&,             \
                                      ParamSet<T>&);                                                           \
    template StudentPass<T> student_forward<T>(const StudentArch&, const ParamSet<T>&, const Image&,           \
                                               const Image&, bool);                                            \
    template void student_backward<T>(const StudentPass<T>&, const ParamSet<T>&, const Tensor<T>*,             \
                                      const Tensor<T>*, ParamSet<T>&, bool);

STAGEMATTE_INSTANTIATE(float)
STAGEMATTE_INSTANTIATE(double)

#undef STAGEMATTE_INSTANTIATE

}  // namespace stagematte::nn
