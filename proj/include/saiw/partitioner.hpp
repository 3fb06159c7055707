#pragma once

#include "saiw/arch_validator.hpp"
#include "saiw/onnx_io.hpp"

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace saiw {

enum class Reliability
{
    kReliable,
    kNonReliable,
};

std::string_view to_string(Reliability r);

struct Assignment
{
    /// Node name, or index into the canonical node order of C.
    std::variant<std::string, int64_t> node;
    Reliability partition = Reliability::kNonReliable;
    /// Half-open output-channel range; Conv only, partition must be reliable.
    std::optional<std::array<int64_t, 2>> channels;
};

/// The reliability-attribute file.
struct PartitionSpec
{
    int64_t version = 1;
    std::string model_arch;
    Reliability default_partition = Reliability::kNonReliable;
    std::vector<Assignment> assignments;
};

/// Parses and self-checks a JSON spec. Throws SpecError carrying a JSON pointer.
PartitionSpec parse_spec(std::string_view json);
std::string spec_to_json(const PartitionSpec& spec);

struct BoundaryTensor
{
    std::string name;
    std::string producer_partition; // "D" or "E"
    ElementType element_type = ElementType::kFloat32;
    Shape shape;

    friend bool operator==(const BoundaryTensor&, const BoundaryTensor&) = default;
};

struct ChannelSegment
{
    std::string node;
    std::string partition;
    int64_t start = 0;
    int64_t end = 0;

    friend bool operator==(const ChannelSegment&, const ChannelSegment&) = default;
};

struct ChannelSplit
{
    std::string original_node; // name in C (may be empty)
    int64_t source_index = 0;  // position in C's node list
    std::string original_output;
    std::string original_weight;
    std::string original_bias; // empty when the Conv has no bias
    int64_t out_channels = 0;
    std::array<int64_t, 2> reliable_range{};
    std::string reliable_node_in_D;
    std::vector<std::string> remainder_nodes_in_E;
    std::string merge_node;
    std::string merge_partition;
    /// Segments in output-channel order; they tile [0, out_channels).
    std::vector<ChannelSegment> channel_order;

    friend bool operator==(const ChannelSplit&, const ChannelSplit&) = default;
};

struct ReassemblyEntry
{
    std::string partition; // "D" or "E"
    std::string node;      // node name inside that partition
    int64_t source_index = 0;
    std::string source_name;
    std::string role; // "whole", "reliable-slice", "remainder", "merge"

    friend bool operator==(const ReassemblyEntry&, const ReassemblyEntry&) = default;
};

struct PartitionManifest
{
    int64_t version = 1;
    std::string source_arch;
    std::string d_arch;
    std::string e_arch;
    std::string d_content_sha256;
    std::string e_content_sha256;
    std::vector<std::string> source_inputs;
    std::vector<std::string> source_outputs;
    std::vector<BoundaryTensor> boundary_tensors;
    /// D outputs published for the protected-channel validator.
    std::vector<std::string> exports;
    std::vector<ChannelSplit> channel_splits;
    std::vector<ReassemblyEntry> reassembly;
    std::optional<std::string> validator_ref;

    friend bool operator==(const PartitionManifest&, const PartitionManifest&) = default;
};

/// Deterministic JSON (sorted keys). `indent` < 0 gives the compact form.
std::string manifest_to_json(const PartitionManifest& m, int indent = 2);
/// Throws ManifestMismatch when the document is malformed.
PartitionManifest parse_manifest(std::string_view json);

/// Channel split of one Conv: pieces, their sliced initializers and the restoring Concat.
struct ConvSplit
{
    NodeIR reliable;
    std::vector<NodeIR> remainders;
    NodeIR merge;
    std::map<std::string, TensorData> initializers;
    std::vector<ChannelSegment> order; // partition fields are left empty
};

/// Splits node `index` of `graph` at output channels [s, e). Names for new nodes and tensors
/// derive from `base` and avoid everything in `taken`. Throws NodeKindError, RangeError.
ConvSplit split_conv_channels(const GraphIR& graph, size_t index, int64_t s, int64_t e, const std::string& base,
                              std::set<std::string>& taken);

struct PartitionResult
{
    ModelFile d;
    ModelFile e;
    PartitionManifest manifest;
};

/// Throws SpecMismatch, UnknownNode, NodeKindError, RangeError.
PartitionResult partition(const ModelFile& c, const PartitionSpec& spec);

/// Checks D and E against the manifest (signatures, content hashes, embedded copies,
/// boundary and reassembly consistency). Throws ManifestMismatch.
void verify_manifest(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest);

/// Splices D and E back into one graph equal to C up to metadata. Throws ManifestMismatch.
GraphIR recombine(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest);

struct RecombinationReport
{
    VerdictReport verdict;
    /// Every recombined initializer is bit-identical to C's.
    bool weights_identical = false;
};

RecombinationReport validate_recombination(const ModelFile& d, const ModelFile& e,
                                           const PartitionManifest& manifest, const ModelFile& c);

} // namespace saiw
