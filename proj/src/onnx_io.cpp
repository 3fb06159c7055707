#include "saiw/onnx_io.hpp"

#include "wire.hpp"

#include "saiw/errors.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace saiw {

namespace {

using wire::Reader;
using wire::WireType;
using wire::Writer;

// ONNX field numbers (onnx.proto).
namespace model_f {
constexpr uint32_t kIrVersion = 1, kProducerName = 2, kProducerVersion = 3, kGraph = 7, kOpsetImport = 8,
                   kMetadataProps = 14;
}
namespace graph_f {
constexpr uint32_t kNode = 1, kName = 2, kInitializer = 5, kInput = 11, kOutput = 12, kSparseInitializer = 15;
}
namespace node_f {
constexpr uint32_t kInput = 1, kOutput = 2, kName = 3, kOpType = 4, kAttribute = 5, kDomain = 7;
}
namespace attr_f {
constexpr uint32_t kName = 1, kF = 2, kI = 3, kS = 4, kT = 5, kG = 6, kFloats = 7, kInts = 8, kStrings = 9,
                   kTensors = 10, kGraphs = 11, kType = 20;
}
namespace tensor_f {
constexpr uint32_t kDims = 1, kDataType = 2, kFloatData = 4, kInt64Data = 7, kName = 8, kRawData = 9,
                   kExternalData = 13, kDataLocation = 14;
}

enum AttrType : int64_t
{
    kAttrFloat = 1,
    kAttrInt = 2,
    kAttrString = 3,
    kAttrTensor = 4,
    kAttrGraph = 5,
    kAttrFloats = 6,
    kAttrInts = 7,
    kAttrStrings = 8,
};

std::string onnx_type_name(int64_t code)
{
    static const char* names[] = {"UNDEFINED", "FLOAT",  "UINT8",  "INT8",      "UINT16",     "INT16",
                                  "INT32",     "INT64",  "STRING", "BOOL",      "FLOAT16",    "DOUBLE",
                                  "UINT32",    "UINT64", "COMPLEX64", "COMPLEX128", "BFLOAT16"};
    if (code >= 0 && code < static_cast<int64_t>(std::size(names)))
    {
        return names[code];
    }
    return "type " + std::to_string(code);
}

ElementType element_type(int64_t code, const Reader& r)
{
    if (code == static_cast<int64_t>(ElementType::kFloat32))
    {
        return ElementType::kFloat32;
    }
    if (code == static_cast<int64_t>(ElementType::kInt64))
    {
        return ElementType::kInt64;
    }
    (void)r;
    throw UnsupportedOp("element type " + onnx_type_name(code));
}

TensorData read_tensor(Reader r, std::string* name)
{
    Shape dims;
    std::optional<int64_t> dataType;
    std::vector<float> floats;
    std::vector<int64_t> ints;
    std::optional<std::string> raw;
    const size_t start = r.offset();
    uint32_t field;
    WireType type;
    while (r.tag(field, type))
    {
        switch (field)
        {
            case tensor_f::kDims:
                r.repeated_int64(type, field, dims);
                break;
            case tensor_f::kDataType:
                r.expect(type, wire::kVarint, field);
                dataType = static_cast<int64_t>(r.varint());
                break;
            case tensor_f::kFloatData:
                r.repeated_float(type, field, floats);
                break;
            case tensor_f::kInt64Data:
                r.repeated_int64(type, field, ints);
                break;
            case tensor_f::kName:
                r.expect(type, wire::kLengthDelimited, field);
                if (name)
                {
                    *name = r.bytes();
                }
                else
                {
                    r.skip(type);
                }
                break;
            case tensor_f::kRawData:
                r.expect(type, wire::kLengthDelimited, field);
                raw = r.bytes();
                break;
            case tensor_f::kExternalData:
                throw UnsupportedOp("tensor with external data");
            case tensor_f::kDataLocation:
                r.expect(type, wire::kVarint, field);
                if (r.varint() != 0)
                {
                    throw UnsupportedOp("tensor with external data");
                }
                break;
            default:
                r.skip(type);
        }
    }
    if (!dataType)
    {
        throw ParseError("tensor has no data_type", start);
    }
    TensorData t;
    t.type = element_type(*dataType, r);
    t.shape = std::move(dims);
    for (int64_t d : t.shape)
    {
        if (d < 0)
        {
            throw ParseError("tensor has a negative dimension", start);
        }
    }
    const auto n = static_cast<size_t>(element_count(t.shape));
    if (raw)
    {
        const size_t width = t.type == ElementType::kFloat32 ? 4 : 8;
        if (raw->size() != n * width)
        {
            throw ParseError("raw_data holds " + std::to_string(raw->size()) + " bytes, shape " +
                                 shape_to_string(t.shape) + " needs " + std::to_string(n * width),
                             start);
        }
        if (t.type == ElementType::kFloat32)
        {
            t.f32.resize(n);
            std::memcpy(t.f32.data(), raw->data(), raw->size());
        }
        else
        {
            t.i64.resize(n);
            std::memcpy(t.i64.data(), raw->data(), raw->size());
        }
    }
    else if (t.type == ElementType::kFloat32)
    {
        t.f32 = std::move(floats);
    }
    else
    {
        t.i64 = std::move(ints);
    }
    try
    {
        t.check();
    }
    catch (const InvariantError& e)
    {
        throw ParseError(e.what(), start);
    }
    return t;
}

struct ParsedValueInfo
{
    ValueInfo info;
    bool typed = false;
};

ParsedValueInfo read_value_info(Reader r)
{
    ParsedValueInfo out;
    uint32_t field;
    WireType type;
    while (r.tag(field, type))
    {
        if (field == 1)
        {
            r.expect(type, wire::kLengthDelimited, field);
            out.info.name = r.bytes();
        }
        else if (field == 2)
        {
            r.expect(type, wire::kLengthDelimited, field);
            Reader tp = r.sub();
            uint32_t tf;
            WireType tt;
            while (tp.tag(tf, tt))
            {
                if (tf != 1)
                {
                    if (tf == 6) // denotation
                    {
                        tp.skip(tt);
                        continue;
                    }
                    throw UnsupportedOp("non-tensor value type for '" + out.info.name + "'");
                }
                tp.expect(tt, wire::kLengthDelimited, tf);
                Reader tensor = tp.sub();
                uint32_t f;
                WireType t;
                bool haveShape = false;
                std::optional<int64_t> elem;
                while (tensor.tag(f, t))
                {
                    if (f == 1)
                    {
                        tensor.expect(t, wire::kVarint, f);
                        elem = static_cast<int64_t>(tensor.varint());
                    }
                    else if (f == 2)
                    {
                        tensor.expect(t, wire::kLengthDelimited, f);
                        haveShape = true;
                        Reader shape = tensor.sub();
                        uint32_t sf;
                        WireType st;
                        while (shape.tag(sf, st))
                        {
                            if (sf != 1)
                            {
                                shape.skip(st);
                                continue;
                            }
                            shape.expect(st, wire::kLengthDelimited, sf);
                            Reader dim = shape.sub();
                            std::optional<int64_t> value;
                            uint32_t df;
                            WireType dt;
                            while (dim.tag(df, dt))
                            {
                                if (df == 1)
                                {
                                    dim.expect(dt, wire::kVarint, df);
                                    value = static_cast<int64_t>(dim.varint());
                                }
                                else if (df == 2)
                                {
                                    throw UnsupportedOp("symbolic dimension on '" + out.info.name + "'");
                                }
                                else
                                {
                                    dim.skip(dt);
                                }
                            }
                            if (!value || *value < 0)
                            {
                                throw UnsupportedOp("dynamic dimension on '" + out.info.name + "'");
                            }
                            out.info.shape.push_back(*value);
                        }
                    }
                    else
                    {
                        tensor.skip(t);
                    }
                }
                if (elem)
                {
                    out.info.type = element_type(*elem, tensor);
                    out.typed = haveShape;
                }
            }
        }
        else
        {
            r.skip(type);
        }
    }
    return out;
}

AttributeValue read_attribute(Reader r, std::string& name)
{
    std::optional<int64_t> declared;
    std::optional<float> f;
    std::optional<int64_t> i;
    std::optional<std::string> s;
    std::vector<float> floats;
    std::vector<int64_t> ints;
    bool sawFloats = false;
    bool sawInts = false;
    const size_t start = r.offset();
    uint32_t field;
    WireType type;
    while (r.tag(field, type))
    {
        switch (field)
        {
            case attr_f::kName:
                r.expect(type, wire::kLengthDelimited, field);
                name = r.bytes();
                break;
            case attr_f::kType:
                r.expect(type, wire::kVarint, field);
                declared = static_cast<int64_t>(r.varint());
                break;
            case attr_f::kF:
                r.expect(type, wire::kFixed32, field);
                f = std::bit_cast<float>(r.fixed32());
                break;
            case attr_f::kI:
                r.expect(type, wire::kVarint, field);
                i = static_cast<int64_t>(r.varint());
                break;
            case attr_f::kS:
                r.expect(type, wire::kLengthDelimited, field);
                s = r.bytes();
                break;
            case attr_f::kFloats:
                sawFloats = true;
                r.repeated_float(type, field, floats);
                break;
            case attr_f::kInts:
                sawInts = true;
                r.repeated_int64(type, field, ints);
                break;
            case attr_f::kT:
            case attr_f::kG:
            case attr_f::kStrings:
            case attr_f::kTensors:
            case attr_f::kGraphs:
                throw UnsupportedOp("attribute '" + name + "' of field kind " + std::to_string(field));
            default:
                r.skip(type);
        }
    }
    if (!declared)
    {
        // Pre-IR3 files omit the type; infer it from the populated field.
        declared = f ? kAttrFloat
                 : i ? kAttrInt
                 : s ? kAttrString
                 : sawFloats ? kAttrFloats
                 : kAttrInts;
    }
    switch (*declared)
    {
        case kAttrFloat:
            return f.value_or(0.0f);
        case kAttrInt:
            return i.value_or(0);
        case kAttrString:
            return s.value_or(std::string{});
        case kAttrFloats:
            return floats;
        case kAttrInts:
            return ints;
        default:
            break;
    }
    (void)sawInts;
    (void)start;
    throw UnsupportedOp("attribute '" + name + "' of type " + std::to_string(*declared));
}

NodeIR read_node(Reader r)
{
    NodeIR node;
    std::string domain;
    std::vector<Reader> attributes;
    uint32_t field;
    WireType type;
    while (r.tag(field, type))
    {
        switch (field)
        {
            case node_f::kInput:
                r.expect(type, wire::kLengthDelimited, field);
                node.inputs.push_back(r.bytes());
                break;
            case node_f::kOutput:
                r.expect(type, wire::kLengthDelimited, field);
                node.outputs.push_back(r.bytes());
                break;
            case node_f::kName:
                r.expect(type, wire::kLengthDelimited, field);
                node.name = r.bytes();
                break;
            case node_f::kOpType:
                r.expect(type, wire::kLengthDelimited, field);
                node.op_type = r.bytes();
                break;
            case node_f::kAttribute:
                r.expect(type, wire::kLengthDelimited, field);
                attributes.push_back(r.sub());
                break;
            case node_f::kDomain:
                r.expect(type, wire::kLengthDelimited, field);
                domain = r.bytes();
                break;
            default:
                r.skip(type);
        }
    }
    if (!domain.empty() && domain != "ai.onnx")
    {
        throw UnsupportedOp(domain + "::" + node.op_type);
    }
    if (!is_supported_op(node.op_type))
    {
        throw UnsupportedOp(node.op_type);
    }
    for (auto& a : attributes)
    {
        std::string name;
        const size_t at = a.offset();
        AttributeValue v = read_attribute(a, name);
        if (!node.attributes.emplace(name, std::move(v)).second)
        {
            throw ParseError("duplicate attribute '" + name + "'", at);
        }
    }
    return node;
}

void read_graph(Reader r, GraphIR& g, std::set<std::string>& untypedOutputs)
{
    uint32_t field;
    WireType type;
    std::vector<ParsedValueInfo> inputs;
    while (r.tag(field, type))
    {
        switch (field)
        {
            case graph_f::kNode:
                r.expect(type, wire::kLengthDelimited, field);
                g.nodes.push_back(read_node(r.sub()));
                break;
            case graph_f::kName:
                r.expect(type, wire::kLengthDelimited, field);
                g.name = r.bytes();
                break;
            case graph_f::kInitializer: {
                r.expect(type, wire::kLengthDelimited, field);
                const size_t at = r.offset();
                std::string name;
                TensorData t = read_tensor(r.sub(), &name);
                if (!g.initializers.emplace(name, std::move(t)).second)
                {
                    throw InvariantError("initializer '" + name + "' is defined twice (at byte " +
                                         std::to_string(at) + ")");
                }
                break;
            }
            case graph_f::kInput:
                r.expect(type, wire::kLengthDelimited, field);
                inputs.push_back(read_value_info(r.sub()));
                break;
            case graph_f::kOutput: {
                r.expect(type, wire::kLengthDelimited, field);
                ParsedValueInfo out = read_value_info(r.sub());
                if (!out.typed)
                {
                    untypedOutputs.insert(out.info.name);
                }
                g.outputs.push_back(std::move(out.info));
                break;
            }
            case graph_f::kSparseInitializer:
                throw UnsupportedOp("sparse initializer");
            default:
                r.skip(type);
        }
    }
    for (auto& in : inputs)
    {
        // IR < 4 lists initializers among the graph inputs.
        if (g.initializers.count(in.info.name))
        {
            continue;
        }
        if (!in.typed)
        {
            throw UnsupportedOp("graph input '" + in.info.name + "' without a concrete tensor type");
        }
        g.inputs.push_back(std::move(in.info));
    }
}

void write_tensor(Writer& w, const TensorData& t, const std::string& name)
{
    t.check();
    if (!t.shape.empty())
    {
        w.packed_int64(tensor_f::kDims, t.shape);
    }
    w.int_field(tensor_f::kDataType, static_cast<int64_t>(t.type));
    if (!name.empty())
    {
        w.bytes_field(tensor_f::kName, name);
    }
    std::string raw;
    if (t.type == ElementType::kFloat32)
    {
        raw.resize(t.f32.size() * 4);
        std::memcpy(raw.data(), t.f32.data(), raw.size());
    }
    else
    {
        raw.resize(t.i64.size() * 8);
        std::memcpy(raw.data(), t.i64.data(), raw.size());
    }
    w.bytes_field(tensor_f::kRawData, raw);
}

Writer value_info(const ValueInfo& v)
{
    Writer shape;
    for (int64_t d : v.shape)
    {
        Writer dim;
        dim.int_field(1, d);
        shape.message_field(1, dim);
    }
    Writer tensor;
    tensor.int_field(1, static_cast<int64_t>(v.type));
    tensor.message_field(2, shape);
    Writer typeProto;
    typeProto.message_field(1, tensor);
    Writer w;
    w.bytes_field(1, v.name);
    w.message_field(2, typeProto);
    return w;
}

Writer attribute(const std::string& name, const AttributeValue& v)
{
    Writer w;
    w.bytes_field(attr_f::kName, name);
    int64_t type = 0;
    if (const auto* f = std::get_if<float>(&v))
    {
        w.float_field(attr_f::kF, *f);
        type = kAttrFloat;
    }
    else if (const auto* i = std::get_if<int64_t>(&v))
    {
        w.int_field(attr_f::kI, *i);
        type = kAttrInt;
    }
    else if (const auto* s = std::get_if<std::string>(&v))
    {
        w.bytes_field(attr_f::kS, *s);
        type = kAttrString;
    }
    else if (const auto* fs = std::get_if<std::vector<float>>(&v))
    {
        if (!fs->empty())
        {
            w.packed_float(attr_f::kFloats, *fs);
        }
        type = kAttrFloats;
    }
    else
    {
        const auto& is = std::get<std::vector<int64_t>>(v);
        if (!is.empty())
        {
            w.packed_int64(attr_f::kInts, is);
        }
        type = kAttrInts;
    }
    w.int_field(attr_f::kType, type);
    return w;
}

} // namespace

ModelFile load_model(std::string_view bytes)
{
    ModelFile m;
    Reader r(bytes);
    uint32_t field;
    WireType type;
    bool haveGraph = false;
    std::optional<int64_t> opset;
    std::set<std::string> untypedOutputs;
    while (r.tag(field, type))
    {
        switch (field)
        {
            case model_f::kIrVersion:
                r.expect(type, wire::kVarint, field);
                m.ir_version = static_cast<int64_t>(r.varint());
                break;
            case model_f::kProducerName:
                r.expect(type, wire::kLengthDelimited, field);
                m.producer_name = r.bytes();
                break;
            case model_f::kProducerVersion:
                r.expect(type, wire::kLengthDelimited, field);
                m.producer_version = r.bytes();
                break;
            case model_f::kGraph:
                r.expect(type, wire::kLengthDelimited, field);
                read_graph(r.sub(), m.graph, untypedOutputs);
                haveGraph = true;
                break;
            case model_f::kOpsetImport: {
                r.expect(type, wire::kLengthDelimited, field);
                Reader op = r.sub();
                std::string domain;
                int64_t version = 0;
                uint32_t f;
                WireType t;
                while (op.tag(f, t))
                {
                    if (f == 1)
                    {
                        op.expect(t, wire::kLengthDelimited, f);
                        domain = op.bytes();
                    }
                    else if (f == 2)
                    {
                        op.expect(t, wire::kVarint, f);
                        version = static_cast<int64_t>(op.varint());
                    }
                    else
                    {
                        op.skip(t);
                    }
                }
                if (domain.empty() || domain == "ai.onnx")
                {
                    opset = version;
                }
                break;
            }
            case model_f::kMetadataProps: {
                r.expect(type, wire::kLengthDelimited, field);
                Reader kv = r.sub();
                std::string key;
                std::string value;
                uint32_t f;
                WireType t;
                while (kv.tag(f, t))
                {
                    if (f == 1 || f == 2)
                    {
                        kv.expect(t, wire::kLengthDelimited, f);
                        (f == 1 ? key : value) = kv.bytes();
                    }
                    else
                    {
                        kv.skip(t);
                    }
                }
                m.graph.metadata[key] = value;
                break;
            }
            default:
                r.skip(type);
        }
    }
    if (!haveGraph)
    {
        throw ParseError("model has no graph", bytes.size());
    }
    if (!opset)
    {
        throw InvariantError("model imports no default-domain opset");
    }
    m.graph.opset_version = *opset;
    validate(m.graph);
    if (!untypedOutputs.empty())
    {
        for (auto& out : m.graph.outputs)
        {
            out.type = ElementType::kFloat32;
            out.shape.clear();
        }
        GraphIR probe = m.graph;
        probe.outputs.clear();
        const auto types = infer_types(probe);
        for (auto& out : m.graph.outputs)
        {
            const auto& t = types.at(out.name);
            out.type = t.type;
            out.shape = t.shape;
        }
    }
    return m;
}

std::string save_model(const ModelFile& model)
{
    const GraphIR& g = model.graph;
    validate(g);

    Writer graph;
    for (const auto& node : g.nodes)
    {
        Writer n;
        for (const auto& in : node.inputs)
        {
            n.bytes_field(node_f::kInput, in);
        }
        for (const auto& out : node.outputs)
        {
            n.bytes_field(node_f::kOutput, out);
        }
        if (!node.name.empty())
        {
            n.bytes_field(node_f::kName, node.name);
        }
        n.bytes_field(node_f::kOpType, node.op_type);
        for (const auto& [name, value] : node.attributes)
        {
            n.message_field(node_f::kAttribute, attribute(name, value));
        }
        graph.message_field(graph_f::kNode, n);
    }
    if (!g.name.empty())
    {
        graph.bytes_field(graph_f::kName, g.name);
    }
    for (const auto& [name, t] : g.initializers)
    {
        Writer tw;
        write_tensor(tw, t, name);
        graph.message_field(graph_f::kInitializer, tw);
    }
    for (const auto& in : g.inputs)
    {
        graph.message_field(graph_f::kInput, value_info(in));
    }
    for (const auto& out : g.outputs)
    {
        graph.message_field(graph_f::kOutput, value_info(out));
    }

    Writer w;
    w.int_field(model_f::kIrVersion, model.ir_version);
    if (!model.producer_name.empty())
    {
        w.bytes_field(model_f::kProducerName, model.producer_name);
    }
    if (!model.producer_version.empty())
    {
        w.bytes_field(model_f::kProducerVersion, model.producer_version);
    }
    w.message_field(model_f::kGraph, graph);
    Writer opset;
    opset.int_field(2, g.opset_version);
    w.message_field(model_f::kOpsetImport, opset);
    for (const auto& [key, value] : g.metadata)
    {
        Writer kv;
        kv.bytes_field(1, key);
        kv.bytes_field(2, value);
        w.message_field(model_f::kMetadataProps, kv);
    }
    return w.data();
}

TensorData load_tensor(std::string_view bytes, std::string* name)
{
    return read_tensor(Reader(bytes), name);
}

std::string save_tensor(const TensorData& tensor, const std::string& name)
{
    Writer w;
    write_tensor(w, tensor, name);
    return w.data();
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        throw Error("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
    {
        throw Error("failed writing '" + path.string() + "'");
    }
}

ModelFile load_model_file(const std::filesystem::path& path)
{
    return load_model(read_file(path));
}

void save_model_file(const std::filesystem::path& path, const ModelFile& model)
{
    write_file(path, save_model(model));
}

} // namespace saiw
