#pragma once

// Attribute decoding and output-shape rules for the supported operator subset.
// Shared by shape inference, canonical labelling and the reference executor so that
// all three agree on defaults.

#include "saiw/model_ir.hpp"

#include <array>
#include <vector>

namespace saiw::ops {

/// Operand of a node: type/shape, plus the value when it is known statically.
struct Operand
{
    const TensorInfo* info = nullptr; // null for an omitted optional input
    const TensorData* value = nullptr;
};

/// Rejects unknown attribute names and wrong value kinds. Throws InvariantError, UnsupportedOp.
void check_node_schema(const NodeIR& node);

struct ConvAttrs
{
    std::array<int64_t, 2> kernel{};
    std::array<int64_t, 2> strides{1, 1};
    std::array<int64_t, 2> dilations{1, 1};
    std::array<int64_t, 4> pads{}; // top, left, bottom, right
    int64_t group = 1;
};

ConvAttrs conv_attrs(const NodeIR& node, const Shape& weightShape);

struct PoolAttrs
{
    std::array<int64_t, 2> kernel{};
    std::array<int64_t, 2> strides{1, 1};
    std::array<int64_t, 2> dilations{1, 1};
    std::array<int64_t, 4> pads{};
    bool ceilMode = false;
    bool countIncludePad = false;
};

PoolAttrs pool_attrs(const NodeIR& node);

/// Output spatial extent of a sliding window; throws ShapeError when empty.
int64_t window_output(const NodeIR& node, int64_t in, int64_t kernel, int64_t stride, int64_t dilation,
                      int64_t padBegin, int64_t padEnd, bool ceilMode);

struct LrnAttrs
{
    float alpha = 1e-4f;
    float beta = 0.75f;
    float bias = 1.0f;
    int64_t size = 0;
};

LrnAttrs lrn_attrs(const NodeIR& node);

struct GemmAttrs
{
    float alpha = 1.0f;
    float beta = 1.0f;
    bool transA = false;
    bool transB = false;
};

GemmAttrs gemm_attrs(const NodeIR& node);

/// Axis attribute normalized into [0, rank) (Concat/Softmax) or [0, rank] (Flatten).
int64_t axis_attr(const NodeIR& node, int64_t rank, int64_t defaultAxis, bool allowRank);

/// Resolved per-dimension slice: element i of dimension d is start[d] + i * step[d].
struct SliceWindow
{
    std::vector<int64_t> start;
    std::vector<int64_t> step;
    Shape outShape;
};

SliceWindow slice_window(const NodeIR& node, const Shape& in, const std::vector<int64_t>& starts,
                         const std::vector<int64_t>& ends, const std::vector<int64_t>* axes,
                         const std::vector<int64_t>* steps);

Shape reshape_target(const NodeIR& node, const Shape& in, const std::vector<int64_t>& spec, bool allowZero);

/// Multidirectional (numpy) broadcast.
Shape broadcast_shapes(const NodeIR& node, const Shape& a, const Shape& b);

/// Attributes with defaults made explicit, for architecture comparison.
std::map<std::string, AttributeValue> normalized_attributes(const NodeIR& node,
                                                            const std::vector<Operand>& operands);

/// Output type/shape of a node. Throws ShapeError / UnsupportedOp.
TensorInfo infer_node(const NodeIR& node, const std::vector<Operand>& operands);

} // namespace saiw::ops
