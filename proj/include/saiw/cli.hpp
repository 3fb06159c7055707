#pragma once

// Command-line front end. Each workflow step is a separate command; the cmd_* functions are
// the commands without argument parsing so they can be driven from tests.

#include "saiw/arch_validator.hpp"
#include "saiw/partitioner.hpp"
#include "saiw/spcp.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace saiw::cli {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kError = 1;
inline constexpr int kUsage = 2;
inline constexpr int kNegative = 3;
} // namespace exit_code

struct CommandResult
{
    int exit_code = exit_code::kOk;
    /// Machine-readable report (a JSON object, pretty-printed).
    std::string json;
    /// The same report for humans.
    std::string text;
};

using Path = std::filesystem::path;
using NamedInput = std::pair<std::string, Path>;

struct SpcpRun
{
    Decision decision;
    std::string cnn_class;
    std::string edge_tensor;
};

/// The runtime path behind cmd_spcp: verifies the manifest, runs D and E exchanging boundary
/// tensors, takes E's top class (labels from the "class_labels" metadata of E) and lets the
/// validator decide on D's first exported tensor. Throws ManifestMismatch, Error.
SpcpRun spcp_pipeline(const ModelFile& d, const ModelFile& e, const PartitionManifest& manifest,
                      const TemplateSet& templates, const TensorData& image, const SpcpParams& params = {});

CommandResult cmd_validate_arch(const Path& a, const Path& b, const std::optional<Path>& emitC, const Clock& clock);
CommandResult cmd_signature(const Path& model);
CommandResult cmd_partition(const Path& c, const Path& spec, const Path& d, const Path& e, const Path& manifest);
CommandResult cmd_validate_recombination(const Path& d, const Path& e, const Path& manifest, const Path& c);
CommandResult cmd_run(const Path& model, const std::vector<NamedInput>& inputs, const std::optional<Path>& outDir);
CommandResult cmd_run_joint(const Path& d, const Path& e, const Path& manifest, const std::vector<NamedInput>& inputs,
                            const std::optional<Path>& outDir);
/// Runs D on the image, gives D's exported edge tensor to the validator and the boundary
/// tensors to E, and decides on E's top class. Exit 0 on ACCEPT, 3 on REJECT.
CommandResult cmd_spcp(const Path& d, const Path& e, const Path& manifest, const Path& templates, const Path& image,
                       const std::optional<Path>& decisionOut);
/// Writes the demo models, specs, templates and sample inputs used in the README walkthrough.
CommandResult cmd_make_fixtures(const Path& dir);

/// Parses `args` (without the program name), runs the command and writes its report to `out`
/// (text, or JSON with --json). Diagnostics go to `err`. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace saiw::cli
