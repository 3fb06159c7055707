#pragma once

#include "saiw/onnx_io.hpp"

#include <functional>
#include <string>
#include <vector>

namespace saiw {

struct ArchSignature
{
    /// Lowercase hex SHA-256 of `canonical_text`.
    std::string digest;
    std::string canonical_text;

    friend bool operator==(const ArchSignature&, const ArchSignature&) = default;
};

ArchSignature signature(const GraphIR& graph);
inline ArchSignature signature(const ModelFile& model) { return signature(model.graph); }

enum class Verdict
{
    kEqual,
    kDiffer,
};

std::string_view to_string(Verdict v);

enum class DiffKind
{
    kNodeCount,
    kOpType,
    kAttribute,
    kEdge,
    kIoShape,
    kOpset,
};

std::string_view to_string(DiffKind k);

struct Difference
{
    DiffKind kind;
    /// Canonical coordinates, e.g. "node %3/%3 attr strides", "input $0", "output 1".
    std::string location;
    std::string lhs;
    std::string rhs;

    friend bool operator==(const Difference&, const Difference&) = default;
};

struct VerdictReport
{
    Verdict verdict = Verdict::kEqual;
    std::vector<Difference> differences;
    std::string lhs_digest;
    std::string rhs_digest;
};

/// EQUAL exactly when the signatures agree; otherwise lists the divergences found by aligning
/// the two canonical node listings (longest common subsequence over node labels).
VerdictReport compare(const GraphIR& a, const GraphIR& b);
inline VerdictReport compare(const ModelFile& a, const ModelFile& b) { return compare(a.graph, b.graph); }

/// Human-readable multi-line rendering.
std::string report_text(const VerdictReport& report);

/// Source of ISO-8601 UTC timestamps ("YYYY-MM-DDTHH:MM:SSZ").
using Clock = std::function<std::string()>;
Clock system_clock();
Clock fixed_clock(std::string timestamp);
/// True for strings of the form YYYY-MM-DDTHH:MM:SSZ with plausible field ranges.
bool is_iso8601_utc(std::string_view s);

inline constexpr std::string_view kToolName = "saiw-arch-validator";
inline constexpr std::string_view kToolVersion = "1.0.0";

/// File C: `b` plus attestation metadata. Throws AttestationError when signature(b) != against.
ModelFile emit_qualified(const ModelFile& b, const ArchSignature& against, const Clock& clock);

} // namespace saiw
