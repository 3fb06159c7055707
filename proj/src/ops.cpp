#include "saiw/ops.hpp"

#include "saiw/errors.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <unordered_map>

namespace saiw::ops {

namespace {

enum Kind : size_t
{
    kInt = 0,
    kFloat = 1,
    kString = 2,
    kInts = 3,
    kFloats = 4,
};

struct OpSchema
{
    size_t minInputs;
    size_t maxInputs;
    std::vector<std::pair<std::string_view, Kind>> attributes;
};

const std::unordered_map<std::string_view, OpSchema>& schemas()
{
    static const std::unordered_map<std::string_view, OpSchema> table = {
        {"Conv",
         {2,
          3,
          {{"auto_pad", kString},
           {"dilations", kInts},
           {"group", kInt},
           {"kernel_shape", kInts},
           {"pads", kInts},
           {"strides", kInts}}}},
        {"Relu", {1, 1, {}}},
        {"MaxPool",
         {1,
          1,
          {{"auto_pad", kString},
           {"ceil_mode", kInt},
           {"dilations", kInts},
           {"kernel_shape", kInts},
           {"pads", kInts},
           {"storage_order", kInt},
           {"strides", kInts}}}},
        {"AveragePool",
         {1,
          1,
          {{"auto_pad", kString},
           {"ceil_mode", kInt},
           {"count_include_pad", kInt},
           {"kernel_shape", kInts},
           {"pads", kInts},
           {"strides", kInts}}}},
        {"LRN", {1, 1, {{"alpha", kFloat}, {"beta", kFloat}, {"bias", kFloat}, {"size", kInt}}}},
        {"Dropout", {1, 3, {{"seed", kInt}}}},
        {"Flatten", {1, 1, {{"axis", kInt}}}},
        {"Reshape", {2, 2, {{"allowzero", kInt}}}},
        {"Gemm", {2, 3, {{"alpha", kFloat}, {"beta", kFloat}, {"transA", kInt}, {"transB", kInt}}}},
        {"MatMul", {2, 2, {}}},
        {"Add", {2, 2, {}}},
        {"Concat", {1, std::numeric_limits<size_t>::max(), {{"axis", kInt}}}},
        {"Slice", {3, 5, {}}},
        {"Softmax", {1, 1, {{"axis", kInt}}}},
    };
    return table;
}

const std::string& label(const NodeIR& node)
{
    return node.name.empty() ? node.op_type : node.name;
}

template <class T>
const T* find_attr(const NodeIR& node, const std::string& name)
{
    auto it = node.attributes.find(name);
    if (it == node.attributes.end())
    {
        return nullptr;
    }
    return std::get_if<T>(&it->second);
}

int64_t int_attr(const NodeIR& node, const std::string& name, int64_t dflt)
{
    const auto* v = find_attr<int64_t>(node, name);
    return v ? *v : dflt;
}

float float_attr(const NodeIR& node, const std::string& name, float dflt)
{
    const auto* v = find_attr<float>(node, name);
    return v ? *v : dflt;
}

template <size_t N>
std::array<int64_t, N> ints_attr(const NodeIR& node, const std::string& name, std::array<int64_t, N> dflt,
                                 int64_t minValue)
{
    const auto* v = find_attr<std::vector<int64_t>>(node, name);
    if (!v)
    {
        return dflt;
    }
    if (v->size() != N)
    {
        throw ShapeError(label(node), "attribute '" + name + "' must have " + std::to_string(N) + " entries");
    }
    std::array<int64_t, N> out{};
    for (size_t i = 0; i < N; ++i)
    {
        if ((*v)[i] < minValue)
        {
            throw ShapeError(label(node), "attribute '" + name + "' has out-of-range entry " +
                                              std::to_string((*v)[i]));
        }
        out[i] = (*v)[i];
    }
    return out;
}

bool explicit_padding(const NodeIR& node)
{
    const auto* autoPad = find_attr<std::string>(node, "auto_pad");
    if (!autoPad || *autoPad == "NOTSET")
    {
        return true;
    }
    if (*autoPad == "VALID")
    {
        return false;
    }
    throw UnsupportedOp(node.op_type + " auto_pad=" + *autoPad);
}

const TensorInfo& required(const NodeIR& node, const std::vector<Operand>& ops, size_t i)
{
    if (i >= ops.size() || !ops[i].info)
    {
        throw ShapeError(label(node), "missing required input #" + std::to_string(i));
    }
    return *ops[i].info;
}

void expect_f32(const NodeIR& node, const TensorInfo& t, const char* what)
{
    if (t.type != ElementType::kFloat32)
    {
        throw ShapeError(label(node), std::string(what) + " must be f32");
    }
}

void expect_rank(const NodeIR& node, const TensorInfo& t, size_t rank, const char* what)
{
    if (t.shape.size() != rank)
    {
        throw ShapeError(label(node), std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                                          shape_to_string(t.shape));
    }
}

const std::vector<int64_t>& constant_i64(const NodeIR& node, const Operand& op, const char* what)
{
    if (!op.value)
    {
        throw ShapeError(label(node), std::string(what) + " must be a constant initializer");
    }
    if (op.value->type != ElementType::kInt64 || op.value->shape.size() != 1)
    {
        throw ShapeError(label(node), std::string(what) + " must be a 1-D i64 tensor");
    }
    return op.value->i64;
}

int64_t ceil_div(int64_t a, int64_t b)
{
    return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

} // namespace

void check_node_schema(const NodeIR& node)
{
    const auto& table = schemas();
    auto it = table.find(node.op_type);
    if (it == table.end())
    {
        throw UnsupportedOp(node.op_type);
    }
    const OpSchema& schema = it->second;
    if (node.inputs.size() < schema.minInputs || node.inputs.size() > schema.maxInputs)
    {
        throw InvariantError("node '" + label(node) + "' (" + node.op_type + ") has " +
                             std::to_string(node.inputs.size()) + " inputs");
    }
    for (size_t i = 0; i < schema.minInputs; ++i)
    {
        if (node.inputs[i].empty())
        {
            throw InvariantError("node '" + label(node) + "' omits required input #" + std::to_string(i));
        }
    }
    if (node.outputs.size() != 1 || node.outputs[0].empty())
    {
        if (node.outputs.size() > 1)
        {
            throw UnsupportedOp(node.op_type + " with " + std::to_string(node.outputs.size()) + " outputs");
        }
        throw InvariantError("node '" + label(node) + "' must have exactly one output");
    }
    for (const auto& [name, value] : node.attributes)
    {
        auto a = std::find_if(schema.attributes.begin(), schema.attributes.end(),
                              [&](const auto& p) { return p.first == name; });
        if (a == schema.attributes.end())
        {
            throw InvariantError("attribute '" + name + "' is not defined for " + node.op_type);
        }
        if (value.index() != a->second)
        {
            throw InvariantError("attribute '" + name + "' of " + node.op_type + " has the wrong value kind");
        }
    }
    if (node.op_type == "MaxPool" && int_attr(node, "storage_order", 0) != 0)
    {
        throw UnsupportedOp("MaxPool storage_order=1");
    }
}

ConvAttrs conv_attrs(const NodeIR& node, const Shape& weightShape)
{
    if (weightShape.size() != 4)
    {
        throw ShapeError(label(node), "Conv weight must have rank 4 (only 2-D convolution is supported)");
    }
    ConvAttrs a;
    a.kernel = {weightShape[2], weightShape[3]};
    if (find_attr<std::vector<int64_t>>(node, "kernel_shape") &&
        ints_attr<2>(node, "kernel_shape", a.kernel, 1) != a.kernel)
    {
        throw ShapeError(label(node), "kernel_shape disagrees with weight shape " + shape_to_string(weightShape));
    }
    a.strides = ints_attr<2>(node, "strides", a.strides, 1);
    a.dilations = ints_attr<2>(node, "dilations", a.dilations, 1);
    a.pads = explicit_padding(node) ? ints_attr<4>(node, "pads", a.pads, 0) : std::array<int64_t, 4>{};
    a.group = int_attr(node, "group", 1);
    if (a.group < 1)
    {
        throw ShapeError(label(node), "group must be positive");
    }
    return a;
}

PoolAttrs pool_attrs(const NodeIR& node)
{
    PoolAttrs a;
    if (!find_attr<std::vector<int64_t>>(node, "kernel_shape"))
    {
        throw ShapeError(label(node), node.op_type + " requires kernel_shape");
    }
    a.kernel = ints_attr<2>(node, "kernel_shape", a.kernel, 1);
    a.strides = ints_attr<2>(node, "strides", a.strides, 1);
    a.dilations = ints_attr<2>(node, "dilations", a.dilations, 1);
    a.pads = explicit_padding(node) ? ints_attr<4>(node, "pads", a.pads, 0) : std::array<int64_t, 4>{};
    a.ceilMode = int_attr(node, "ceil_mode", 0) != 0;
    a.countIncludePad = int_attr(node, "count_include_pad", 0) != 0;
    return a;
}

int64_t window_output(const NodeIR& node, int64_t in, int64_t kernel, int64_t stride, int64_t dilation,
                      int64_t padBegin, int64_t padEnd, bool ceilMode)
{
    const int64_t span = dilation * (kernel - 1) + 1;
    const int64_t numer = in + padBegin + padEnd - span;
    if (numer < 0)
    {
        throw ShapeError(label(node), "window of extent " + std::to_string(span) + " exceeds padded input " +
                                          std::to_string(in + padBegin + padEnd));
    }
    int64_t out = (ceilMode ? ceil_div(numer, stride) : numer / stride) + 1;
    if (ceilMode && (out - 1) * stride >= in + padBegin)
    {
        --out;
    }
    return out;
}

LrnAttrs lrn_attrs(const NodeIR& node)
{
    LrnAttrs a;
    a.alpha = float_attr(node, "alpha", a.alpha);
    a.beta = float_attr(node, "beta", a.beta);
    a.bias = float_attr(node, "bias", a.bias);
    const auto* size = find_attr<int64_t>(node, "size");
    if (!size || *size < 1)
    {
        throw ShapeError(label(node), "LRN requires a positive size");
    }
    a.size = *size;
    return a;
}

GemmAttrs gemm_attrs(const NodeIR& node)
{
    GemmAttrs a;
    a.alpha = float_attr(node, "alpha", a.alpha);
    a.beta = float_attr(node, "beta", a.beta);
    a.transA = int_attr(node, "transA", 0) != 0;
    a.transB = int_attr(node, "transB", 0) != 0;
    return a;
}

int64_t axis_attr(const NodeIR& node, int64_t rank, int64_t defaultAxis, bool allowRank)
{
    const auto* v = find_attr<int64_t>(node, "axis");
    if (!v && node.op_type == "Concat")
    {
        throw ShapeError(label(node), "Concat requires an axis");
    }
    int64_t axis = v ? *v : defaultAxis;
    const int64_t hi = allowRank ? rank : rank - 1;
    if (axis < -rank || axis > hi)
    {
        throw ShapeError(label(node), "axis " + std::to_string(axis) + " out of range for rank " +
                                          std::to_string(rank));
    }
    return axis < 0 ? axis + rank : axis;
}

SliceWindow slice_window(const NodeIR& node, const Shape& in, const std::vector<int64_t>& starts,
                         const std::vector<int64_t>& ends, const std::vector<int64_t>* axes,
                         const std::vector<int64_t>* steps)
{
    const auto rank = static_cast<int64_t>(in.size());
    const size_t n = starts.size();
    if (ends.size() != n || (axes && axes->size() != n) || (steps && steps->size() != n))
    {
        throw ShapeError(label(node), "Slice starts/ends/axes/steps lengths differ");
    }
    SliceWindow w;
    w.start.assign(in.size(), 0);
    w.step.assign(in.size(), 1);
    w.outShape = in;
    std::vector<bool> seen(in.size(), false);
    for (size_t i = 0; i < n; ++i)
    {
        int64_t axis = axes ? (*axes)[i] : static_cast<int64_t>(i);
        if (axis < -rank || axis >= rank)
        {
            throw ShapeError(label(node), "Slice axis out of range");
        }
        if (axis < 0)
        {
            axis += rank;
        }
        if (seen[axis])
        {
            throw ShapeError(label(node), "Slice repeats an axis");
        }
        seen[axis] = true;
        const int64_t dim = in[axis];
        const int64_t step = steps ? (*steps)[i] : 1;
        if (step == 0)
        {
            throw ShapeError(label(node), "Slice step must be non-zero");
        }
        int64_t s = starts[i];
        int64_t e = ends[i];
        if (s < 0)
        {
            s = s < -dim ? -1 - dim : s;
            s += dim;
        }
        if (e < 0)
        {
            e = e < -dim ? -1 - dim : e;
            e += dim;
        }
        int64_t count = 0;
        if (step > 0)
        {
            s = std::clamp<int64_t>(s, 0, dim);
            e = std::clamp<int64_t>(e, 0, dim);
            count = e > s ? (e - s + step - 1) / step : 0;
        }
        else
        {
            s = std::clamp<int64_t>(s, 0, dim - 1);
            e = std::clamp<int64_t>(e, -1, dim - 1);
            count = s > e ? (s - e + (-step) - 1) / (-step) : 0;
        }
        w.start[axis] = s;
        w.step[axis] = step;
        w.outShape[axis] = count;
    }
    return w;
}

Shape reshape_target(const NodeIR& node, const Shape& in, const std::vector<int64_t>& spec, bool allowZero)
{
    Shape out(spec.size());
    int64_t inferIndex = -1;
    int64_t known = 1;
    for (size_t i = 0; i < spec.size(); ++i)
    {
        int64_t d = spec[i];
        if (d == 0 && !allowZero)
        {
            if (i >= in.size())
            {
                throw ShapeError(label(node), "Reshape copies a dimension the input does not have");
            }
            d = in[i];
        }
        if (d == -1)
        {
            if (inferIndex >= 0)
            {
                throw ShapeError(label(node), "Reshape has more than one -1");
            }
            inferIndex = static_cast<int64_t>(i);
            continue;
        }
        if (d < 0)
        {
            throw ShapeError(label(node), "Reshape dimension " + std::to_string(d) + " is invalid");
        }
        out[i] = d;
        known *= d;
    }
    const int64_t total = element_count(in);
    if (inferIndex >= 0)
    {
        if (known == 0 || total % known != 0)
        {
            throw ShapeError(label(node), "Reshape cannot infer -1 for " + shape_to_string(in));
        }
        out[inferIndex] = total / known;
    }
    if (element_count(out) != total)
    {
        throw ShapeError(label(node), "Reshape " + shape_to_string(in) + " -> " + shape_to_string(out) +
                                          " changes the element count");
    }
    return out;
}

Shape broadcast_shapes(const NodeIR& node, const Shape& a, const Shape& b)
{
    const size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (size_t i = 0; i < rank; ++i)
    {
        const int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
        {
            throw ShapeError(label(node), "cannot broadcast " + shape_to_string(a) + " with " + shape_to_string(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

std::map<std::string, AttributeValue> normalized_attributes(const NodeIR& node, const std::vector<Operand>& operands)
{
    std::map<std::string, AttributeValue> out;
    auto vec = [](auto arr) { return std::vector<int64_t>(arr.begin(), arr.end()); };
    const std::string& op = node.op_type;
    if (op == "Conv")
    {
        const auto a = conv_attrs(node, required(node, operands, 1).shape);
        out["kernel_shape"] = vec(a.kernel);
        out["strides"] = vec(a.strides);
        out["dilations"] = vec(a.dilations);
        out["pads"] = vec(a.pads);
        out["group"] = a.group;
    }
    else if (op == "MaxPool" || op == "AveragePool")
    {
        const auto a = pool_attrs(node);
        out["kernel_shape"] = vec(a.kernel);
        out["strides"] = vec(a.strides);
        out["pads"] = vec(a.pads);
        out["ceil_mode"] = int64_t{a.ceilMode};
        if (op == "MaxPool")
        {
            out["dilations"] = vec(a.dilations);
        }
        else
        {
            out["count_include_pad"] = int64_t{a.countIncludePad};
        }
    }
    else if (op == "LRN")
    {
        const auto a = lrn_attrs(node);
        out["alpha"] = a.alpha;
        out["beta"] = a.beta;
        out["bias"] = a.bias;
        out["size"] = a.size;
    }
    else if (op == "Gemm")
    {
        const auto a = gemm_attrs(node);
        out["alpha"] = a.alpha;
        out["beta"] = a.beta;
        out["transA"] = int64_t{a.transA};
        out["transB"] = int64_t{a.transB};
    }
    else if (op == "Flatten" || op == "Concat" || op == "Softmax")
    {
        const auto rank = static_cast<int64_t>(required(node, operands, 0).shape.size());
        const int64_t dflt = op == "Flatten" ? 1 : -1;
        out["axis"] = axis_attr(node, rank, dflt, op == "Flatten");
    }
    else if (op == "Reshape")
    {
        out["allowzero"] = int_attr(node, "allowzero", 0);
    }
    else if (op == "Dropout")
    {
        if (const auto* seed = find_attr<int64_t>(node, "seed"))
        {
            out["seed"] = *seed;
        }
    }
    return out;
}

TensorInfo infer_node(const NodeIR& node, const std::vector<Operand>& operands)
{
    const std::string& op = node.op_type;
    const TensorInfo& x = required(node, operands, 0);

    if (op == "Relu" || op == "Dropout" || op == "LRN" || op == "Softmax")
    {
        expect_f32(node, x, "input");
        if (op == "LRN")
        {
            expect_rank(node, x, 4, "input");
            lrn_attrs(node);
        }
        if (op == "Softmax")
        {
            axis_attr(node, static_cast<int64_t>(x.shape.size()), -1, false);
        }
        return x;
    }
    if (op == "Conv")
    {
        const TensorInfo& w = required(node, operands, 1);
        expect_f32(node, x, "input");
        expect_f32(node, w, "weight");
        expect_rank(node, x, 4, "input");
        const auto a = conv_attrs(node, w.shape);
        const int64_t m = w.shape[0];
        if (x.shape[1] != w.shape[1] * a.group || m % a.group != 0)
        {
            throw ShapeError(label(node), "input " + shape_to_string(x.shape) + " incompatible with weight " +
                                              shape_to_string(w.shape) + " at group " + std::to_string(a.group));
        }
        if (operands.size() > 2 && operands[2].info)
        {
            const TensorInfo& b = *operands[2].info;
            expect_f32(node, b, "bias");
            if (b.shape != Shape{m})
            {
                throw ShapeError(label(node), "bias shape " + shape_to_string(b.shape) + " must be [" +
                                                  std::to_string(m) + "]");
            }
        }
        const int64_t oh = window_output(node, x.shape[2], a.kernel[0], a.strides[0], a.dilations[0], a.pads[0],
                                         a.pads[2], false);
        const int64_t ow = window_output(node, x.shape[3], a.kernel[1], a.strides[1], a.dilations[1], a.pads[1],
                                         a.pads[3], false);
        return {ElementType::kFloat32, {x.shape[0], m, oh, ow}};
    }
    if (op == "MaxPool" || op == "AveragePool")
    {
        expect_f32(node, x, "input");
        expect_rank(node, x, 4, "input");
        const auto a = pool_attrs(node);
        const int64_t oh = window_output(node, x.shape[2], a.kernel[0], a.strides[0], a.dilations[0], a.pads[0],
                                         a.pads[2], a.ceilMode);
        const int64_t ow = window_output(node, x.shape[3], a.kernel[1], a.strides[1], a.dilations[1], a.pads[1],
                                         a.pads[3], a.ceilMode);
        return {ElementType::kFloat32, {x.shape[0], x.shape[1], oh, ow}};
    }
    if (op == "Flatten")
    {
        const int64_t axis = axis_attr(node, static_cast<int64_t>(x.shape.size()), 1, true);
        int64_t outer = 1;
        int64_t inner = 1;
        for (size_t i = 0; i < x.shape.size(); ++i)
        {
            (static_cast<int64_t>(i) < axis ? outer : inner) *= x.shape[i];
        }
        return {x.type, {outer, inner}};
    }
    if (op == "Reshape")
    {
        const auto& spec = constant_i64(node, operands.at(1), "Reshape shape");
        return {x.type, reshape_target(node, x.shape, spec, int_attr(node, "allowzero", 0) != 0)};
    }
    if (op == "Gemm" || op == "MatMul")
    {
        const TensorInfo& b = required(node, operands, 1);
        expect_f32(node, x, "A");
        expect_f32(node, b, "B");
        expect_rank(node, x, 2, "A");
        expect_rank(node, b, 2, "B");
        const auto a = op == "Gemm" ? gemm_attrs(node) : GemmAttrs{};
        const int64_t m = a.transA ? x.shape[1] : x.shape[0];
        const int64_t k = a.transA ? x.shape[0] : x.shape[1];
        const int64_t kb = a.transB ? b.shape[1] : b.shape[0];
        const int64_t n = a.transB ? b.shape[0] : b.shape[1];
        if (k != kb)
        {
            throw ShapeError(label(node), "inner dimensions differ: " + shape_to_string(x.shape) + " x " +
                                              shape_to_string(b.shape));
        }
        if (operands.size() > 2 && operands[2].info)
        {
            const TensorInfo& c = *operands[2].info;
            expect_f32(node, c, "C");
            if (c.shape.size() > 2 || broadcast_shapes(node, c.shape, {m, n}) != Shape{m, n})
            {
                throw ShapeError(label(node), "C " + shape_to_string(c.shape) + " does not broadcast to [" +
                                                  std::to_string(m) + "," + std::to_string(n) + "]");
            }
        }
        return {ElementType::kFloat32, {m, n}};
    }
    if (op == "Add")
    {
        const TensorInfo& b = required(node, operands, 1);
        if (x.type != b.type)
        {
            throw ShapeError(label(node), "operand element types differ");
        }
        return {x.type, broadcast_shapes(node, x.shape, b.shape)};
    }
    if (op == "Concat")
    {
        const int64_t axis = axis_attr(node, static_cast<int64_t>(x.shape.size()), -1, false);
        Shape out = x.shape;
        out[axis] = 0;
        for (size_t i = 0; i < operands.size(); ++i)
        {
            const TensorInfo& t = required(node, operands, i);
            if (t.type != x.type || t.shape.size() != x.shape.size())
            {
                throw ShapeError(label(node), "Concat operands disagree in type or rank");
            }
            for (size_t d = 0; d < out.size(); ++d)
            {
                if (static_cast<int64_t>(d) != axis && t.shape[d] != x.shape[d])
                {
                    throw ShapeError(label(node), "Concat operand " + shape_to_string(t.shape) +
                                                      " disagrees with " + shape_to_string(x.shape));
                }
            }
            out[axis] += t.shape[axis];
        }
        return {x.type, out};
    }
    if (op == "Slice")
    {
        const auto& starts = constant_i64(node, operands.at(1), "Slice starts");
        const auto& ends = constant_i64(node, operands.at(2), "Slice ends");
        const std::vector<int64_t>* axes = nullptr;
        const std::vector<int64_t>* steps = nullptr;
        if (operands.size() > 3 && operands[3].info)
        {
            axes = &constant_i64(node, operands[3], "Slice axes");
        }
        if (operands.size() > 4 && operands[4].info)
        {
            steps = &constant_i64(node, operands[4], "Slice steps");
        }
        return {x.type, slice_window(node, x.shape, starts, ends, axes, steps).outShape};
    }
    throw UnsupportedOp(op);
}

} // namespace saiw::ops
