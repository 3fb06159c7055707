#include "saiw/executor.hpp"

#include "saiw/errors.hpp"
#include "saiw/partitioner.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace saiw {

namespace {

const std::string& node_id(const NodeIR& node)
{
    return node.name.empty() ? node.outputs.at(0) : node.name;
}

std::vector<int64_t> strides_of(const Shape& shape)
{
    std::vector<int64_t> s(shape.size(), 1);
    for (size_t d = shape.size(); d-- > 1;)
    {
        s[d - 1] = s[d] * shape[d];
    }
    return s;
}

TensorData relu(const TensorData& x)
{
    TensorData y = x;
    for (float& v : y.f32)
    {
        v = v < 0.0f ? 0.0f : v;
    }
    return y;
}

TensorData pool(const NodeIR& node, const TensorData& x, const Shape& outShape)
{
    const auto a = ops::pool_attrs(node);
    const bool isMax = node.op_type == "MaxPool";
    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int64_t oh = outShape[2], ow = outShape[3];
    TensorData y = TensorData::zeros(outShape);
    for (int64_t b = 0; b < n; ++b)
    {
        for (int64_t ch = 0; ch < c; ++ch)
        {
            const float* plane = x.f32.data() + (b * c + ch) * h * w;
            float* out = y.f32.data() + (b * c + ch) * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy)
            {
                for (int64_t ox = 0; ox < ow; ++ox)
                {
                    float acc = isMax ? -std::numeric_limits<float>::infinity() : 0.0f;
                    int64_t valid = 0;
                    int64_t padded = 0;
                    for (int64_t i = 0; i < a.kernel[0]; ++i)
                    {
                        const int64_t iy = oy * a.strides[0] - a.pads[0] + i * a.dilations[0];
                        for (int64_t j = 0; j < a.kernel[1]; ++j)
                        {
                            const int64_t ix = ox * a.strides[1] - a.pads[1] + j * a.dilations[1];
                            if (iy >= -a.pads[0] && iy < h + a.pads[2] && ix >= -a.pads[1] && ix < w + a.pads[3])
                            {
                                ++padded;
                            }
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w)
                            {
                                continue;
                            }
                            const float v = plane[iy * w + ix];
                            if (isMax)
                            {
                                acc = v > acc ? v : acc;
                            }
                            else
                            {
                                acc += v;
                            }
                            ++valid;
                        }
                    }
                    if (!isMax)
                    {
                        const int64_t divisor = a.countIncludePad ? padded : valid;
                        acc = divisor > 0 ? acc / static_cast<float>(divisor) : 0.0f;
                    }
                    out[oy * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

TensorData lrn(const NodeIR& node, const TensorData& x)
{
    const auto a = ops::lrn_attrs(node);
    const int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    const int64_t below = (a.size - 1) / 2;
    const int64_t above = a.size - 1 - below;
    const float scale = a.alpha / static_cast<float>(a.size);
    TensorData y = x;
    for (int64_t b = 0; b < n; ++b)
    {
        for (int64_t ch = 0; ch < c; ++ch)
        {
            const int64_t lo = std::max<int64_t>(0, ch - below);
            const int64_t hi = std::min<int64_t>(c - 1, ch + above);
            for (int64_t p = 0; p < hw; ++p)
            {
                float sq = 0.0f;
                for (int64_t k = lo; k <= hi; ++k)
                {
                    const float v = x.f32[(b * c + k) * hw + p];
                    sq += v * v;
                }
                const int64_t idx = (b * c + ch) * hw + p;
                y.f32[idx] = x.f32[idx] / std::pow(a.bias + scale * sq, a.beta);
            }
        }
    }
    return y;
}

TensorData softmax(const NodeIR& node, const TensorData& x)
{
    const int64_t rank = static_cast<int64_t>(x.shape.size());
    const int64_t axis = ops::axis_attr(node, rank, -1, false);
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d)
    {
        outer *= x.shape[d];
    }
    for (int64_t d = axis + 1; d < rank; ++d)
    {
        inner *= x.shape[d];
    }
    const int64_t len = x.shape[axis];
    TensorData y = x;
    for (int64_t o = 0; o < outer; ++o)
    {
        for (int64_t in = 0; in < inner; ++in)
        {
            auto at = [&](int64_t k) { return (o * len + k) * inner + in; };
            float mx = -std::numeric_limits<float>::infinity();
            for (int64_t k = 0; k < len; ++k)
            {
                mx = x.f32[at(k)] > mx ? x.f32[at(k)] : mx;
            }
            float sum = 0.0f;
            for (int64_t k = 0; k < len; ++k)
            {
                y.f32[at(k)] = std::exp(x.f32[at(k)] - mx);
                sum += y.f32[at(k)];
            }
            for (int64_t k = 0; k < len; ++k)
            {
                y.f32[at(k)] = y.f32[at(k)] / sum;
            }
        }
    }
    return y;
}

/// Flat index into a broadcast operand for a given output multi-index.
int64_t broadcast_index(const std::vector<int64_t>& outIdx, const Shape& shape)
{
    const size_t off = outIdx.size() - shape.size();
    int64_t idx = 0;
    for (size_t d = 0; d < shape.size(); ++d)
    {
        idx = idx * shape[d] + (shape[d] == 1 ? 0 : outIdx[off + d]);
    }
    return idx;
}

void next_index(std::vector<int64_t>& idx, const Shape& shape)
{
    for (size_t d = shape.size(); d-- > 0;)
    {
        if (++idx[d] < shape[d])
        {
            return;
        }
        idx[d] = 0;
    }
}

TensorData gemm(const NodeIR& node, const TensorData& a, const TensorData& b, const TensorData* c,
                const Shape& outShape)
{
    const auto attrs = node.op_type == "Gemm" ? ops::gemm_attrs(node) : ops::GemmAttrs{};
    const int64_t m = outShape[0], n = outShape[1];
    const int64_t k = attrs.transA ? a.shape[0] : a.shape[1];
    auto A = [&](int64_t i, int64_t p) { return attrs.transA ? a.f32[p * a.shape[1] + i] : a.f32[i * k + p]; };
    auto B = [&](int64_t p, int64_t j) { return attrs.transB ? b.f32[j * b.shape[1] + p] : b.f32[p * n + j]; };
    TensorData y = TensorData::zeros(outShape);
    for (int64_t i = 0; i < m; ++i)
    {
        for (int64_t j = 0; j < n; ++j)
        {
            float acc = 0.0f;
            for (int64_t p = 0; p < k; ++p)
            {
                acc += A(i, p) * B(p, j);
            }
            float v = node.op_type == "Gemm" ? attrs.alpha * acc : acc;
            if (c)
            {
                v += attrs.beta * c->f32[broadcast_index({i, j}, c->shape)];
            }
            y.f32[i * n + j] = v;
        }
    }
    return y;
}

TensorData add(const TensorData& a, const TensorData& b, const Shape& outShape)
{
    TensorData y;
    y.type = a.type;
    y.shape = outShape;
    const int64_t total = element_count(outShape);
    std::vector<int64_t> idx(outShape.size(), 0);
    if (a.type == ElementType::kFloat32)
    {
        y.f32.resize(total);
    }
    else
    {
        y.i64.resize(total);
    }
    for (int64_t flat = 0; flat < total; ++flat)
    {
        const int64_t ia = broadcast_index(idx, a.shape);
        const int64_t ib = broadcast_index(idx, b.shape);
        if (a.type == ElementType::kFloat32)
        {
            y.f32[flat] = a.f32[ia] + b.f32[ib];
        }
        else
        {
            y.i64[flat] = static_cast<int64_t>(static_cast<uint64_t>(a.i64[ia]) + static_cast<uint64_t>(b.i64[ib]));
        }
        next_index(idx, outShape);
    }
    return y;
}

TensorData concat(const NodeIR& node, const std::vector<const TensorData*>& xs, const Shape& outShape)
{
    const int64_t rank = static_cast<int64_t>(outShape.size());
    const int64_t axis = ops::axis_attr(node, rank, -1, false);
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d)
    {
        outer *= outShape[d];
    }
    for (int64_t d = axis + 1; d < rank; ++d)
    {
        inner *= outShape[d];
    }
    TensorData y;
    y.type = xs[0]->type;
    y.shape = outShape;
    for (int64_t o = 0; o < outer; ++o)
    {
        for (const TensorData* x : xs)
        {
            const int64_t block = x->shape[axis] * inner;
            if (y.type == ElementType::kFloat32)
            {
                y.f32.insert(y.f32.end(), x->f32.begin() + o * block, x->f32.begin() + (o + 1) * block);
            }
            else
            {
                y.i64.insert(y.i64.end(), x->i64.begin() + o * block, x->i64.begin() + (o + 1) * block);
            }
        }
    }
    return y;
}

TensorData slice(const NodeIR& node, const std::vector<const TensorData*>& in)
{
    const TensorData& x = *in[0];
    const std::vector<int64_t>* axes = in.size() > 3 && in[3] ? &in[3]->i64 : nullptr;
    const std::vector<int64_t>* steps = in.size() > 4 && in[4] ? &in[4]->i64 : nullptr;
    const auto win = ops::slice_window(node, x.shape, in[1]->i64, in[2]->i64, axes, steps);
    TensorData y;
    y.type = x.type;
    y.shape = win.outShape;
    const int64_t total = element_count(win.outShape);
    const auto st = strides_of(x.shape);
    std::vector<int64_t> idx(win.outShape.size(), 0);
    for (int64_t flat = 0; flat < total; ++flat)
    {
        int64_t src = 0;
        for (size_t d = 0; d < idx.size(); ++d)
        {
            src += (win.start[d] + idx[d] * win.step[d]) * st[d];
        }
        if (x.type == ElementType::kFloat32)
        {
            y.f32.push_back(x.f32[src]);
        }
        else
        {
            y.i64.push_back(x.i64[src]);
        }
        next_index(idx, win.outShape);
    }
    return y;
}

} // namespace

TensorData conv2d(const TensorData& input, const TensorData& weight, const TensorData* bias,
                  const ops::ConvAttrs& a)
{
    if (input.shape.size() != 4 || weight.shape.size() != 4 || input.type != ElementType::kFloat32 ||
        weight.type != ElementType::kFloat32)
    {
        throw ShapeError("conv2d", "input and weight must be rank-4 f32");
    }
    const int64_t n = input.shape[0], c = input.shape[1], h = input.shape[2], w = input.shape[3];
    const int64_t m = weight.shape[0], cg = weight.shape[1], kh = weight.shape[2], kw = weight.shape[3];
    if (a.group < 1 || c != cg * a.group || m % a.group != 0 || kh != a.kernel[0] || kw != a.kernel[1])
    {
        throw ShapeError("conv2d", "input " + shape_to_string(input.shape) + " incompatible with weight " +
                                       shape_to_string(weight.shape));
    }
    if (bias && (bias->type != ElementType::kFloat32 || bias->shape != Shape{m}))
    {
        throw ShapeError("conv2d", "bias must be f32[" + std::to_string(m) + "]");
    }
    const int64_t spanH = a.dilations[0] * (kh - 1) + 1;
    const int64_t spanW = a.dilations[1] * (kw - 1) + 1;
    const int64_t oh = (h + a.pads[0] + a.pads[2] - spanH) / a.strides[0] + 1;
    const int64_t ow = (w + a.pads[1] + a.pads[3] - spanW) / a.strides[1] + 1;
    if (h + a.pads[0] + a.pads[2] < spanH || w + a.pads[1] + a.pads[3] < spanW)
    {
        throw ShapeError("conv2d", "kernel exceeds padded input");
    }
    const int64_t mPerGroup = m / a.group;
    TensorData y = TensorData::zeros({n, m, oh, ow});
    for (int64_t b = 0; b < n; ++b)
    {
        for (int64_t oc = 0; oc < m; ++oc)
        {
            const int64_t g = oc / mPerGroup;
            const float* wRow = weight.f32.data() + oc * cg * kh * kw;
            float* out = y.f32.data() + (b * m + oc) * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy)
            {
                for (int64_t ox = 0; ox < ow; ++ox)
                {
                    float acc = 0.0f;
                    for (int64_t ci = 0; ci < cg; ++ci)
                    {
                        const float* plane = input.f32.data() + (b * c + g * cg + ci) * h * w;
                        const float* wk = wRow + ci * kh * kw;
                        for (int64_t i = 0; i < kh; ++i)
                        {
                            const int64_t iy = oy * a.strides[0] - a.pads[0] + i * a.dilations[0];
                            if (iy < 0 || iy >= h)
                            {
                                continue;
                            }
                            for (int64_t j = 0; j < kw; ++j)
                            {
                                const int64_t ix = ox * a.strides[1] - a.pads[1] + j * a.dilations[1];
                                if (ix < 0 || ix >= w)
                                {
                                    continue;
                                }
                                acc += plane[iy * w + ix] * wk[i * kw + j];
                            }
                        }
                    }
                    out[oy * ow + ox] = bias ? bias->f32[oc] + acc : acc;
                }
            }
        }
    }
    return y;
}

std::vector<TensorData> eval_node(const NodeIR& node, const TensorEnv& env)
{
    ops::check_node_schema(node);
    std::vector<const TensorData*> in;
    std::vector<TensorInfo> infos;
    in.reserve(node.inputs.size());
    infos.reserve(node.inputs.size());
    for (const auto& name : node.inputs)
    {
        if (name.empty())
        {
            in.push_back(nullptr);
            infos.emplace_back();
            continue;
        }
        auto it = env.find(name);
        if (it == env.end())
        {
            throw InvariantError("operand '" + name + "' of node '" + node_id(node) + "' is not available");
        }
        it->second.check();
        in.push_back(&it->second);
        infos.push_back({it->second.type, it->second.shape});
    }
    std::vector<ops::Operand> operands;
    for (size_t i = 0; i < in.size(); ++i)
    {
        operands.push_back(in[i] ? ops::Operand{&infos[i], in[i]} : ops::Operand{});
    }
    const TensorInfo expected = ops::infer_node(node, operands);

    const std::string& op = node.op_type;
    TensorData y;
    if (op == "Conv")
    {
        y = conv2d(*in[0], *in[1], in.size() > 2 ? in[2] : nullptr, ops::conv_attrs(node, in[1]->shape));
    }
    else if (op == "Relu")
    {
        y = relu(*in[0]);
    }
    else if (op == "MaxPool" || op == "AveragePool")
    {
        y = pool(node, *in[0], expected.shape);
    }
    else if (op == "LRN")
    {
        y = lrn(node, *in[0]);
    }
    else if (op == "Dropout" || op == "Flatten" || op == "Reshape")
    {
        y = *in[0];
        y.shape = expected.shape;
    }
    else if (op == "Gemm" || op == "MatMul")
    {
        y = gemm(node, *in[0], *in[1], in.size() > 2 ? in[2] : nullptr, expected.shape);
    }
    else if (op == "Add")
    {
        y = add(*in[0], *in[1], expected.shape);
    }
    else if (op == "Concat")
    {
        y = concat(node, in, expected.shape);
    }
    else if (op == "Slice")
    {
        y = slice(node, in);
    }
    else if (op == "Softmax")
    {
        y = softmax(node, *in[0]);
    }
    else
    {
        throw UnsupportedOp(op);
    }
    if (y.type != expected.type || y.shape != expected.shape)
    {
        throw ShapeError(node_id(node), "kernel produced " + shape_to_string(y.shape) + ", inference expects " +
                                            shape_to_string(expected.shape));
    }
    y.check();
    std::vector<TensorData> out;
    out.push_back(std::move(y));
    return out;
}

namespace {

void check_input(const ValueInfo& decl, const TensorData& t)
{
    t.check();
    if (t.type != decl.type || t.shape != decl.shape)
    {
        throw ShapeError(decl.name, "graph input expects " + std::string(to_string(decl.type)) +
                                        shape_to_string(decl.shape) + ", got " + std::string(to_string(t.type)) +
                                        shape_to_string(t.shape));
    }
}

} // namespace

TensorEnv run(const GraphIR& graph, const TensorEnv& inputs)
{
    validate(graph);
    TensorEnv env;
    for (const auto& decl : graph.inputs)
    {
        auto it = inputs.find(decl.name);
        if (it == inputs.end())
        {
            throw MissingInput(decl.name);
        }
        check_input(decl, it->second);
        env.emplace(decl.name, it->second);
    }
    for (const auto& [name, t] : graph.initializers)
    {
        env.emplace(name, t);
    }
    for (size_t v : topo_sort(graph))
    {
        const NodeIR& node = graph.nodes[v];
        auto outs = eval_node(node, env);
        env.insert_or_assign(node.outputs[0], std::move(outs[0]));
    }
    TensorEnv result;
    for (const auto& out : graph.outputs)
    {
        result.insert_or_assign(out.name, env.at(out.name));
    }
    return result;
}

namespace detail {

JointResult exchange_run(const GraphIR& d, const GraphIR& e, const std::vector<std::string>& boundary,
                         const TensorEnv& inputs)
{
    const std::set<std::string> crossing(boundary.begin(), boundary.end());
    validate(d);
    validate(e);
    const GraphIR* graphs[2] = {&d, &e};
    JointResult result;
    TensorEnv* envs[2] = {&result.d, &result.e};
    for (int p = 0; p < 2; ++p)
    {
        for (const auto& decl : graphs[p]->inputs)
        {
            if (crossing.count(decl.name))
            {
                continue; // arrives from the other partition
            }
            auto it = inputs.find(decl.name);
            if (it == inputs.end())
            {
                throw MissingInput(decl.name);
            }
            check_input(decl, it->second);
            envs[p]->emplace(decl.name, it->second);
        }
        for (const auto& [name, t] : graphs[p]->initializers)
        {
            envs[p]->emplace(name, t);
        }
    }
    std::vector<bool> done[2] = {std::vector<bool>(d.nodes.size()), std::vector<bool>(e.nodes.size())};
    size_t remaining = d.nodes.size() + e.nodes.size();
    bool progress = true;
    while (remaining > 0 && progress)
    {
        progress = false;
        for (int p = 0; p < 2; ++p)
        {
            for (size_t v : topo_sort(*graphs[p]))
            {
                const NodeIR& node = graphs[p]->nodes[v];
                if (done[p][v])
                {
                    continue;
                }
                const bool ready = std::all_of(node.inputs.begin(), node.inputs.end(), [&](const std::string& t) {
                    return t.empty() || envs[p]->count(t);
                });
                if (!ready)
                {
                    continue;
                }
                auto outs = eval_node(node, *envs[p]);
                const std::string& name = node.outputs[0];
                if (crossing.count(name))
                {
                    const GraphIR& other = *graphs[1 - p];
                    const bool wanted = std::any_of(other.inputs.begin(), other.inputs.end(),
                                                    [&](const ValueInfo& v) { return v.name == name; });
                    if (wanted)
                    {
                        envs[1 - p]->insert_or_assign(name, outs[0]);
                    }
                }
                envs[p]->insert_or_assign(name, std::move(outs[0]));
                done[p][v] = true;
                --remaining;
                progress = true;
            }
        }
    }
    if (remaining > 0)
    {
        std::string stuck;
        for (int p = 0; p < 2; ++p)
        {
            for (size_t v = 0; v < graphs[p]->nodes.size(); ++v)
            {
                if (!done[p][v])
                {
                    stuck += std::string(stuck.empty() ? "" : ", ") + (p == 0 ? "D:" : "E:") +
                             node_id(graphs[p]->nodes[v]);
                }
            }
        }
        throw InvariantError("boundary exchange deadlocked; blocked nodes: " + stuck);
    }
    return result;
}

} // namespace detail

TensorEnv run_joint(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest,
                    const TensorEnv& inputs)
{
    verify_manifest(d, e, manifest);
    std::vector<std::string> boundary;
    for (const auto& b : manifest.boundary_tensors)
    {
        boundary.push_back(b.name);
    }
    for (const auto& name : manifest.source_inputs)
    {
        if (!inputs.count(name))
        {
            throw MissingInput(name);
        }
    }
    const auto envs = detail::exchange_run(d.graph, e.graph, boundary, inputs);
    TensorEnv out;
    for (const auto& name : manifest.source_outputs)
    {
        auto it = envs.e.find(name);
        if (it == envs.e.end())
        {
            it = envs.d.find(name);
            if (it == envs.d.end())
            {
                throw ManifestMismatch("source output '" + name + "' was produced by neither partition");
            }
        }
        out.insert_or_assign(name, it->second);
    }
    return out;
}

} // namespace saiw
