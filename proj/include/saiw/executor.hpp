#pragma once

// Reference interpreter. Every kernel accumulates in f32 in a fixed loop order with no
// reassociation, so results are reproducible bit for bit.

#include "saiw/onnx_io.hpp"
#include "saiw/ops.hpp"

#include <map>
#include <string>
#include <vector>

namespace saiw {

struct PartitionManifest;

using TensorEnv = std::map<std::string, TensorData>;

/// out[n,m,y,x] = bias[m] + sum over (c, i, j) in that nesting order. Taps falling in the
/// zero padding are skipped. Throws ShapeError.
TensorData conv2d(const TensorData& input, const TensorData& weight, const TensorData* bias,
                  const ops::ConvAttrs& attrs);

/// Evaluates one node reading operands from `env`. Throws UnsupportedOp, ShapeError, MissingInput.
std::vector<TensorData> eval_node(const NodeIR& node, const TensorEnv& env);

/// Runs the graph and returns its outputs. Throws MissingInput, ShapeError.
TensorEnv run(const GraphIR& graph, const TensorEnv& inputs);
inline TensorEnv run(const ModelFile& m, const TensorEnv& inputs) { return run(m.graph, inputs); }

/// Executes D and E in separate environments that exchange only the manifest's boundary
/// tensors, and returns C's outputs. The manifest is verified before any compute.
/// Throws ManifestMismatch, MissingInput, InvariantError (boundary deadlock).
TensorEnv run_joint(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest,
                    const TensorEnv& inputs);

namespace detail {

struct JointResult
{
    TensorEnv d;
    TensorEnv e;
};

/// Scheduling core of run_joint, without manifest verification: nodes run as soon as their
/// operands are present and each boundary tensor is copied to the other side once produced.
JointResult exchange_run(const GraphIR& d, const GraphIR& e, const std::vector<std::string>& boundary,
                         const TensorEnv& inputs);

} // namespace detail

} // namespace saiw
