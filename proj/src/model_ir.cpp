#include "saiw/model_ir.hpp"

#include "saiw/errors.hpp"
#include "saiw/hash.hpp"
#include "saiw/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <unordered_map>

namespace saiw {

namespace {

constexpr std::array<std::string_view, 14> kSupportedOps = {
    "Conv",   "Relu", "MaxPool", "AveragePool", "LRN", "Dropout", "Flatten",
    "Reshape", "Gemm", "MatMul", "Add",         "Concat", "Slice", "Softmax",
};

std::string float_to_string(float v)
{
    if (std::isnan(v))
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "nan(0x%08x)", float_bits(v));
        return buf;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

std::string node_label(const NodeIR& node, size_t index)
{
    return node.name.empty() ? node.op_type + "#" + std::to_string(index) : node.name;
}

// Producer node of every node-produced tensor.
std::unordered_map<std::string, size_t> producers(const GraphIR& graph)
{
    std::unordered_map<std::string, size_t> out;
    for (size_t i = 0; i < graph.nodes.size(); ++i)
    {
        for (const auto& o : graph.nodes[i].outputs)
        {
            out.emplace(o, i);
        }
    }
    return out;
}

} // namespace

bool attribute_equal(const AttributeValue& a, const AttributeValue& b)
{
    if (a.index() != b.index())
    {
        return false;
    }
    if (const auto* fa = std::get_if<float>(&a))
    {
        return bit_equal(*fa, std::get<float>(b));
    }
    if (const auto* va = std::get_if<std::vector<float>>(&a))
    {
        const auto& vb = std::get<std::vector<float>>(b);
        return va->size() == vb.size() && std::equal(va->begin(), va->end(), vb.begin(), bit_equal);
    }
    return a == b;
}

std::string attribute_to_string(const AttributeValue& v)
{
    struct Printer
    {
        std::string operator()(int64_t i) const { return std::to_string(i); }
        std::string operator()(float f) const { return float_to_string(f); }
        std::string operator()(const std::string& s) const
        {
            std::string out = "\"";
            for (char c : s)
            {
                if (c == '"' || c == '\\')
                {
                    out += '\\';
                }
                out += c;
            }
            return out + "\"";
        }
        std::string operator()(const std::vector<int64_t>& v) const { return shape_to_string(v); }
        std::string operator()(const std::vector<float>& v) const
        {
            std::string out = "[";
            for (size_t i = 0; i < v.size(); ++i)
            {
                out += (i ? "," : "") + float_to_string(v[i]);
            }
            return out + "]";
        }
    };
    return std::visit(Printer{}, v);
}

bool operator==(const NodeIR& a, const NodeIR& b)
{
    if (a.name != b.name || a.op_type != b.op_type || a.inputs != b.inputs || a.outputs != b.outputs ||
        a.attributes.size() != b.attributes.size())
    {
        return false;
    }
    for (auto ia = a.attributes.begin(), ib = b.attributes.begin(); ia != a.attributes.end(); ++ia, ++ib)
    {
        if (ia->first != ib->first || !attribute_equal(ia->second, ib->second))
        {
            return false;
        }
    }
    return true;
}

std::span<const std::string_view> supported_ops()
{
    return kSupportedOps;
}

bool is_supported_op(std::string_view op_type)
{
    return std::find(kSupportedOps.begin(), kSupportedOps.end(), op_type) != kSupportedOps.end();
}

void validate(const GraphIR& graph)
{
    std::set<std::string> defined;
    auto define = [&](const std::string& name, const std::string& what) {
        if (name.empty())
        {
            throw InvariantError(what + " has an empty tensor name");
        }
        if (!defined.insert(name).second)
        {
            throw InvariantError("tensor '" + name + "' has more than one producer");
        }
    };
    for (const auto& in : graph.inputs)
    {
        define(in.name, "graph input");
    }
    for (const auto& [name, tensor] : graph.initializers)
    {
        define(name, "initializer");
        tensor.check();
    }
    for (size_t i = 0; i < graph.nodes.size(); ++i)
    {
        const NodeIR& node = graph.nodes[i];
        ops::check_node_schema(node);
        for (const auto& o : node.outputs)
        {
            define(o, "output of node '" + node_label(node, i) + "'");
        }
    }
    for (size_t i = 0; i < graph.nodes.size(); ++i)
    {
        for (const auto& in : graph.nodes[i].inputs)
        {
            if (!in.empty() && !defined.count(in))
            {
                throw InvariantError("node '" + node_label(graph.nodes[i], i) + "' consumes undefined tensor '" +
                                     in + "'");
            }
        }
    }
    std::set<std::string> outs;
    for (const auto& out : graph.outputs)
    {
        if (!defined.count(out.name) || graph.initializers.count(out.name))
        {
            throw InvariantError("graph output '" + out.name + "' is not produced by a node or graph input");
        }
        if (!outs.insert(out.name).second)
        {
            throw InvariantError("graph output '" + out.name + "' is listed twice");
        }
    }
    topo_sort(graph);
}

std::vector<size_t> topo_sort(const GraphIR& graph)
{
    const size_t n = graph.nodes.size();
    const auto prod = producers(graph);
    std::vector<std::vector<size_t>> consumers(n);
    std::vector<size_t> pending(n, 0);
    for (size_t i = 0; i < n; ++i)
    {
        for (const auto& in : graph.nodes[i].inputs)
        {
            auto it = prod.find(in);
            if (it != prod.end())
            {
                consumers[it->second].push_back(i);
                ++pending[i];
            }
        }
    }
    std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
    for (size_t i = 0; i < n; ++i)
    {
        if (pending[i] == 0)
        {
            ready.push(i);
        }
    }
    std::vector<size_t> order;
    order.reserve(n);
    while (!ready.empty())
    {
        const size_t v = ready.top();
        ready.pop();
        order.push_back(v);
        for (size_t c : consumers[v])
        {
            if (--pending[c] == 0)
            {
                ready.push(c);
            }
        }
    }
    if (order.size() == n)
    {
        return order;
    }

    // Walk backwards through unfinished producers until a node repeats; that closes a cycle.
    size_t v = 0;
    while (pending[v] == 0)
    {
        ++v;
    }
    std::vector<size_t> path;
    std::vector<int64_t> seenAt(n, -1);
    std::vector<std::string> via;
    while (seenAt[v] < 0)
    {
        seenAt[v] = static_cast<int64_t>(path.size());
        path.push_back(v);
        for (const auto& in : graph.nodes[v].inputs)
        {
            auto it = prod.find(in);
            if (it != prod.end() && pending[it->second] > 0)
            {
                via.push_back(in);
                v = it->second;
                break;
            }
        }
    }
    std::vector<std::string> cycle(via.begin() + seenAt[v], via.end());
    std::reverse(cycle.begin(), cycle.end());
    throw CycleError(std::move(cycle));
}

std::map<std::string, TensorInfo> infer_types(const GraphIR& graph)
{
    std::map<std::string, TensorInfo> info;
    for (const auto& in : graph.inputs)
    {
        for (int64_t d : in.shape)
        {
            if (d < 0)
            {
                throw ShapeError(in.name, "graph input has a non-concrete dimension");
            }
        }
        info[in.name] = {in.type, in.shape};
    }
    for (const auto& [name, t] : graph.initializers)
    {
        info[name] = {t.type, t.shape};
    }
    for (size_t idx : topo_sort(graph))
    {
        const NodeIR& node = graph.nodes[idx];
        if (!is_supported_op(node.op_type))
        {
            throw UnsupportedOp(node.op_type);
        }
        std::vector<ops::Operand> operands;
        for (const auto& in : node.inputs)
        {
            ops::Operand op;
            if (!in.empty())
            {
                auto it = info.find(in);
                if (it == info.end())
                {
                    throw ShapeError(node_label(node, idx), "input '" + in + "' is undefined");
                }
                op.info = &it->second;
                auto init = graph.initializers.find(in);
                if (init != graph.initializers.end())
                {
                    op.value = &init->second;
                }
            }
            operands.push_back(op);
        }
        TensorInfo out = ops::infer_node(node, operands);
        info[node.outputs.at(0)] = std::move(out);
    }
    for (const auto& out : graph.outputs)
    {
        auto it = info.find(out.name);
        if (it == info.end())
        {
            throw ShapeError(out.name, "graph output is never produced");
        }
        if (it->second.type != out.type || it->second.shape != out.shape)
        {
            throw ShapeError(out.name, "graph output declared " + std::string(to_string(out.type)) +
                                           shape_to_string(out.shape) + " but computes " +
                                           std::string(to_string(it->second.type)) +
                                           shape_to_string(it->second.shape));
        }
    }
    return info;
}

std::map<std::string, Shape> infer_shapes(const GraphIR& graph)
{
    std::map<std::string, Shape> out;
    for (auto& [name, t] : infer_types(graph))
    {
        out.emplace(name, std::move(t.shape));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Canonical form
// ---------------------------------------------------------------------------

std::string CanonicalForm::text() const
{
    std::string out;
    for (const auto* block : {&header_lines, &node_lines, &footer_lines})
    {
        for (const auto& line : *block)
        {
            out += line;
            out += '\n';
        }
    }
    return out;
}

namespace detail {

namespace {

enum RefKind : int64_t
{
    kRefNode = 0,
    kRefInput = 1,
    kRefInit = 2,
    kRefNone = 3,
};

std::string tensor_descriptor(const TensorData& t)
{
    std::string s = std::string(to_string(t.type)) + shape_to_string(t.shape);
    if (t.type == ElementType::kInt64)
    {
        // Integer constants (shape vectors, slice bounds) are structure, not trainable weights.
        s += "=" + shape_to_string(t.i64);
    }
    return s;
}

struct GraphIndex
{
    std::unordered_map<std::string, size_t> producer;
    std::unordered_map<std::string, size_t> inputIndex;
    std::vector<std::vector<std::pair<size_t, size_t>>> consumers; // (consumer node, slot)
};

GraphIndex index_graph(const GraphIR& graph)
{
    GraphIndex gi;
    gi.producer = producers(graph);
    for (size_t i = 0; i < graph.inputs.size(); ++i)
    {
        gi.inputIndex.emplace(graph.inputs[i].name, i);
    }
    gi.consumers.resize(graph.nodes.size());
    for (size_t v = 0; v < graph.nodes.size(); ++v)
    {
        const auto& ins = graph.nodes[v].inputs;
        for (size_t s = 0; s < ins.size(); ++s)
        {
            auto it = gi.producer.find(ins[s]);
            if (it != gi.producer.end())
            {
                gi.consumers[it->second].emplace_back(v, s);
            }
        }
    }
    return gi;
}

} // namespace

LabelledGraph label_nodes(const GraphIR& graph)
{
    const size_t n = graph.nodes.size();
    const auto types = infer_types(graph);
    const GraphIndex gi = index_graph(graph);
    const auto order = topo_sort(graph);

    std::unordered_map<std::string, std::vector<size_t>> outputSlots;
    for (size_t j = 0; j < graph.outputs.size(); ++j)
    {
        outputSlots[graph.outputs[j].name].push_back(j);
    }

    LabelledGraph lg;
    lg.depth.assign(n, 0);
    lg.label.resize(n);
    lg.color.resize(n);
    for (size_t v : order)
    {
        for (const auto& in : graph.nodes[v].inputs)
        {
            auto it = gi.producer.find(in);
            if (it != gi.producer.end())
            {
                lg.depth[v] = std::max(lg.depth[v], lg.depth[it->second] + 1);
            }
        }
    }
    for (size_t v = 0; v < n; ++v)
    {
        const NodeIR& node = graph.nodes[v];
        std::vector<ops::Operand> operands;
        std::string ins;
        for (const auto& in : node.inputs)
        {
            ops::Operand op;
            if (!in.empty())
            {
                op.info = &types.at(in);
                auto init = graph.initializers.find(in);
                if (init != graph.initializers.end())
                {
                    op.value = &init->second;
                }
            }
            operands.push_back(op);
            if (!ins.empty())
            {
                ins += ",";
            }
            if (in.empty())
            {
                ins += "_";
            }
            else if (auto init = graph.initializers.find(in); init != graph.initializers.end())
            {
                ins += "@" + tensor_descriptor(init->second);
            }
            else if (auto gin = gi.inputIndex.find(in); gin != gi.inputIndex.end())
            {
                ins += "$" + std::to_string(gin->second);
            }
            else
            {
                ins += "%";
            }
        }
        std::string attrs;
        for (const auto& [name, value] : ops::normalized_attributes(node, operands))
        {
            attrs += (attrs.empty() ? "" : ",") + name + "=" + attribute_to_string(value);
        }
        const auto& out = types.at(node.outputs.at(0));
        std::string label = node.op_type + "{" + attrs + "}(" + ins + ")->" + std::string(to_string(out.type)) +
                            shape_to_string(out.shape);
        if (auto os = outputSlots.find(node.outputs[0]); os != outputSlots.end())
        {
            for (size_t j : os->second)
            {
                label += " out" + std::to_string(j);
            }
        }
        lg.label[v] = std::move(label);
        lg.color[v] = Fnv1a().add(lg.label[v]).value();
    }

    // Colour refinement over producer slots and consumer (colour, slot) multisets.
    auto classes = [](const std::vector<uint64_t>& c) { return std::set<uint64_t>(c.begin(), c.end()).size(); };
    size_t numClasses = classes(lg.color);
    for (size_t round = 0; round < n; ++round)
    {
        std::vector<uint64_t> next(n);
        for (size_t v = 0; v < n; ++v)
        {
            Fnv1a h;
            h.add(lg.color[v]);
            const auto& ins = graph.nodes[v].inputs;
            for (size_t s = 0; s < ins.size(); ++s)
            {
                auto it = gi.producer.find(ins[s]);
                h.add(s).add(it != gi.producer.end() ? lg.color[it->second] : 0);
            }
            std::vector<std::pair<uint64_t, size_t>> cons;
            for (const auto& [c, s] : gi.consumers[v])
            {
                cons.emplace_back(lg.color[c], s);
            }
            std::sort(cons.begin(), cons.end());
            h.add("|");
            for (const auto& [c, s] : cons)
            {
                h.add(c).add(s);
            }
            next[v] = h.value();
        }
        const size_t nextClasses = classes(next);
        lg.color = std::move(next);
        if (nextClasses == numClasses)
        {
            break;
        }
        numClasses = nextClasses;
    }
    return lg;
}

namespace {

// Placement state shared by the oracle-facing key builder and the search.
struct Placement
{
    const GraphIR& graph;
    const LabelledGraph& labels;
    const GraphIndex& gi;
    std::vector<int64_t> position;
    std::unordered_map<std::string, int64_t> initIndex;
    std::vector<std::string> initOrder;

    Placement(const GraphIR& g, const LabelledGraph& l, const GraphIndex& i)
        : graph(g)
        , labels(l)
        , gi(i)
        , position(g.nodes.size(), -1)
    {}

    std::vector<int64_t> ref(const std::string& tensor) const
    {
        if (tensor.empty())
        {
            return {kRefNone};
        }
        if (auto it = gi.producer.find(tensor); it != gi.producer.end())
        {
            return {kRefNode, position[it->second]};
        }
        if (auto it = gi.inputIndex.find(tensor); it != gi.inputIndex.end())
        {
            return {kRefInput, static_cast<int64_t>(it->second)};
        }
        auto it = initIndex.find(tensor);
        return {kRefInit, it != initIndex.end() ? it->second : static_cast<int64_t>(initOrder.size())};
    }

    OrderKey key(size_t v) const
    {
        OrderKey k{labels.depth[v], labels.label[v], labels.color[v], {}};
        std::unordered_map<std::string, int64_t> pendingInits;
        for (const auto& in : graph.nodes[v].inputs)
        {
            auto r = ref(in);
            if (r[0] == kRefInit && !initIndex.count(in))
            {
                // Several fresh initializers on one node are numbered in slot order.
                auto [it, fresh] =
                    pendingInits.emplace(in, static_cast<int64_t>(initOrder.size() + pendingInits.size()));
                r[1] = it->second;
            }
            k.refs.push_back(std::move(r));
        }
        return k;
    }

    void place(size_t v, int64_t pos)
    {
        position[v] = pos;
        for (const auto& in : graph.nodes[v].inputs)
        {
            if (graph.initializers.count(in) && !initIndex.count(in))
            {
                initIndex.emplace(in, static_cast<int64_t>(initOrder.size()));
                initOrder.push_back(in);
            }
        }
    }

    size_t unplace(size_t v, size_t initsBefore)
    {
        position[v] = -1;
        while (initOrder.size() > initsBefore)
        {
            initIndex.erase(initOrder.back());
            initOrder.pop_back();
        }
        return v;
    }

    std::vector<OrderKey> output_keys() const
    {
        std::vector<OrderKey> out;
        for (const auto& o : graph.outputs)
        {
            OrderKey k{std::numeric_limits<int64_t>::max(), "", 0, {ref(o.name)}};
            out.push_back(std::move(k));
        }
        return out;
    }
};

constexpr size_t kLeafBudget = 20000;

struct Search
{
    Placement& state;
    std::vector<OrderKey> current;
    std::vector<size_t> currentOrder;
    std::vector<OrderKey> best;
    std::vector<size_t> bestOrder;
    size_t leaves = 0;

    void run(size_t k, bool belowBest)
    {
        const size_t n = state.graph.nodes.size();
        if (k == n)
        {
            ++leaves;
            auto tail = state.output_keys();
            std::vector<OrderKey> full = current;
            full.insert(full.end(), tail.begin(), tail.end());
            if (best.empty() || full < best)
            {
                best = std::move(full);
                bestOrder = currentOrder;
            }
            return;
        }
        // Candidates: unplaced nodes of minimal (depth, label, colour); their producers are placed.
        std::vector<size_t> cands;
        for (size_t v = 0; v < n; ++v)
        {
            if (state.position[v] >= 0)
            {
                continue;
            }
            if (cands.empty())
            {
                cands.push_back(v);
                continue;
            }
            const auto& l = state.labels;
            const auto a = std::tie(l.depth[v], l.label[v], l.color[v]);
            const auto b = std::tie(l.depth[cands[0]], l.label[cands[0]], l.color[cands[0]]);
            if (a < b)
            {
                cands.assign(1, v);
            }
            else if (a == b)
            {
                cands.push_back(v);
            }
        }
        std::vector<OrderKey> keys;
        keys.reserve(cands.size());
        for (size_t v : cands)
        {
            keys.push_back(state.key(v));
        }
        const OrderKey minKey = *std::min_element(keys.begin(), keys.end());
        if (!belowBest && !best.empty() && best[k] < minKey)
        {
            return;
        }
        const bool nowBelow = belowBest || best.empty() || minKey < best[k];
        for (size_t i = 0; i < cands.size(); ++i)
        {
            if (!(keys[i] == minKey))
            {
                continue;
            }
            const size_t initsBefore = state.initOrder.size();
            state.place(cands[i], static_cast<int64_t>(k));
            current.push_back(keys[i]);
            currentOrder.push_back(cands[i]);
            run(k + 1, nowBelow);
            current.pop_back();
            currentOrder.pop_back();
            state.unplace(cands[i], initsBefore);
            if (leaves >= kLeafBudget)
            {
                // Residual ties beyond the budget are treated as automorphic.
                break;
            }
        }
    }
};

} // namespace

std::vector<OrderKey> order_keys(const GraphIR& graph, const LabelledGraph& labels, const std::vector<size_t>& order)
{
    const GraphIndex gi = index_graph(graph);
    Placement state(graph, labels, gi);
    for (size_t k = 0; k < order.size(); ++k)
    {
        state.position[order[k]] = static_cast<int64_t>(k);
    }
    // References to later positions are legal here; the oracle permutes freely.
    std::vector<OrderKey> keys;
    for (size_t k = 0; k < order.size(); ++k)
    {
        keys.push_back(state.key(order[k]));
        for (const auto& in : graph.nodes[order[k]].inputs)
        {
            if (graph.initializers.count(in) && !state.initIndex.count(in))
            {
                state.initIndex.emplace(in, static_cast<int64_t>(state.initOrder.size()));
                state.initOrder.push_back(in);
            }
        }
    }
    auto tail = state.output_keys();
    keys.insert(keys.end(), tail.begin(), tail.end());
    return keys;
}

} // namespace detail

CanonicalForm canonicalize(const GraphIR& graph)
{
    using namespace detail;
    const LabelledGraph labels = label_nodes(graph);
    const GraphIndex gi = index_graph(graph);
    const auto types = infer_types(graph);

    Placement state(graph, labels, gi);
    Search search{state, {}, {}, {}, {}, 0};
    search.run(0, false);

    CanonicalForm form;
    form.order = search.bestOrder;

    // Replay the winning order to number positions and initializers.
    Placement replay(graph, labels, gi);
    for (size_t k = 0; k < form.order.size(); ++k)
    {
        replay.place(form.order[k], static_cast<int64_t>(k));
    }
    auto refText = [&](const std::string& tensor) -> std::string {
        const auto r = replay.ref(tensor);
        switch (r[0])
        {
            case kRefNode:
                return "%" + std::to_string(r[1]);
            case kRefInput:
                return "$" + std::to_string(r[1]);
            case kRefInit:
                return "@" + std::to_string(r[1]);
            default:
                return "_";
        }
    };

    form.header_lines.push_back("opset " + std::to_string(graph.opset_version));
    for (size_t i = 0; i < graph.inputs.size(); ++i)
    {
        const auto& in = graph.inputs[i];
        form.header_lines.push_back("input $" + std::to_string(i) + " " + std::string(to_string(in.type)) +
                                    shape_to_string(in.shape));
    }
    for (size_t k = 0; k < form.order.size(); ++k)
    {
        const NodeIR& node = graph.nodes[form.order[k]];
        // The label already carries op, attributes, operand descriptors and output type.
        std::string line = "%" + std::to_string(k) + " = " + labels.label[form.order[k]] + " <-";
        for (const auto& in : node.inputs)
        {
            line += " " + refText(in);
        }
        form.node_lines.push_back(std::move(line));
    }
    for (size_t j = 0; j < replay.initOrder.size(); ++j)
    {
        form.footer_lines.push_back("init @" + std::to_string(j) + " " +
                                    tensor_descriptor(graph.initializers.at(replay.initOrder[j])));
    }
    std::vector<std::string> unused;
    for (const auto& [name, t] : graph.initializers)
    {
        if (!replay.initIndex.count(name))
        {
            unused.push_back("init unused " + tensor_descriptor(t));
        }
    }
    std::sort(unused.begin(), unused.end());
    form.footer_lines.insert(form.footer_lines.end(), unused.begin(), unused.end());
    for (size_t j = 0; j < graph.outputs.size(); ++j)
    {
        const auto& out = graph.outputs[j];
        const auto& t = types.at(out.name);
        form.footer_lines.push_back("output " + std::to_string(j) + " " + refText(out.name) + " " +
                                    std::string(to_string(t.type)) + shape_to_string(t.shape));
    }
    return form;
}

} // namespace saiw
