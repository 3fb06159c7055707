#pragma once

#include "saiw/tensor.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace saiw {

using AttributeValue = std::variant<int64_t, float, std::string, std::vector<int64_t>, std::vector<float>>;

/// Bit-exact for float payloads.
bool attribute_equal(const AttributeValue& a, const AttributeValue& b);

/// Stable textual form; floats print with enough digits to round-trip and NaNs carry their bits.
std::string attribute_to_string(const AttributeValue& v);

struct ValueInfo
{
    std::string name;
    ElementType type = ElementType::kFloat32;
    Shape shape;

    friend bool operator==(const ValueInfo&, const ValueInfo&) = default;
};

struct NodeIR
{
    std::string name;
    std::string op_type;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::map<std::string, AttributeValue> attributes;

    friend bool operator==(const NodeIR& a, const NodeIR& b);
};

/// In-memory computation graph. Node order as stored need not be topological.
struct GraphIR
{
    std::string name;
    std::vector<NodeIR> nodes;
    std::vector<ValueInfo> inputs;
    std::vector<ValueInfo> outputs;
    std::map<std::string, TensorData> initializers;
    std::map<std::string, std::string> metadata;
    int64_t opset_version = 13;

    friend bool operator==(const GraphIR&, const GraphIR&) = default;
};

/// The fourteen operators this toolchain reasons about.
std::span<const std::string_view> supported_ops();
bool is_supported_op(std::string_view op_type);

/// Checks every GraphIR invariant: supported operators and attribute kinds, single static
/// assignment, resolvable inputs, produced outputs and acyclicity.
/// Throws UnsupportedOp, InvariantError or CycleError.
void validate(const GraphIR& graph);

/// Kahn ordering; among ready nodes the lowest stored index goes first, so an already
/// sorted graph maps to the identity permutation. Throws CycleError.
std::vector<size_t> topo_sort(const GraphIR& graph);

struct TensorInfo
{
    ElementType type = ElementType::kFloat32;
    Shape shape;

    friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

/// Type and shape of every tensor (graph inputs, initializers, node outputs).
/// Throws ShapeError, UnsupportedOp or CycleError.
std::map<std::string, TensorInfo> infer_types(const GraphIR& graph);
std::map<std::string, Shape> infer_shapes(const GraphIR& graph);

/// Weight-, name- and order-independent canonical form of a graph.
struct CanonicalForm
{
    /// Stored node indices in canonical order.
    std::vector<size_t> order;
    /// One human-readable line per node, in canonical order.
    std::vector<std::string> node_lines;
    /// Graph-level lines (opset, inputs, initializers, outputs).
    std::vector<std::string> header_lines;
    std::vector<std::string> footer_lines;

    std::string text() const;
};

CanonicalForm canonicalize(const GraphIR& graph);

namespace detail {

/// One element of the sequence that canonical ordering minimizes. Exposed for the
/// exhaustive-permutation oracle in the test suite.
struct OrderKey
{
    int64_t depth = 0;
    std::string label;
    uint64_t color = 0;
    std::vector<std::vector<int64_t>> refs;

    friend auto operator<=>(const OrderKey&, const OrderKey&) = default;
};

struct LabelledGraph
{
    std::vector<int64_t> depth;
    std::vector<std::string> label;
    std::vector<uint64_t> color;
};

LabelledGraph label_nodes(const GraphIR& graph);

/// Full key sequence (node records followed by graph-output records) for a given order.
std::vector<OrderKey> order_keys(const GraphIR& graph, const LabelledGraph& labels,
                                 const std::vector<size_t>& order);

} // namespace detail

} // namespace saiw
