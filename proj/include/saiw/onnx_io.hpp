#pragma once

#include "saiw/model_ir.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace saiw {

/// A deserialized ONNX model. ModelProto.metadata_props live in `graph.metadata`.
struct ModelFile
{
    GraphIR graph;
    std::string producer_name;
    std::string producer_version;
    int64_t ir_version = 7;

    friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

/// Reserved metadata keys.
namespace meta {
inline constexpr std::string_view kPrefix = "saiw.";
inline constexpr std::string_view kAttestArch = "saiw.attest.arch";
inline constexpr std::string_view kAttestTool = "saiw.attest.tool";
inline constexpr std::string_view kAttestTime = "saiw.attest.time";
inline constexpr std::string_view kManifest = "saiw.manifest";
inline constexpr std::string_view kManifestSource = "saiw.manifest.source";
inline constexpr std::string_view kPartition = "saiw.partition";
} // namespace meta

/// Parses a serialized ModelProto. Graph inputs that duplicate initializers are dropped and
/// untyped graph outputs are typed by shape inference; the result satisfies validate().
/// Throws ParseError, UnsupportedOp, InvariantError.
ModelFile load_model(std::string_view bytes);

/// Deterministic serialization (fields in number order, maps in key order, tensors as
/// little-endian raw_data). Throws InvariantError when the graph is invalid.
std::string save_model(const ModelFile& model);

/// TensorProto I/O; `name` receives the stored tensor name when non-null.
TensorData load_tensor(std::string_view bytes, std::string* name = nullptr);
std::string save_tensor(const TensorData& tensor, const std::string& name = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

ModelFile load_model_file(const std::filesystem::path& path);
void save_model_file(const std::filesystem::path& path, const ModelFile& model);

} // namespace saiw
