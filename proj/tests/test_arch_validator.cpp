#include "support/graph_gen.hpp"

#include "saiw/arch_validator.hpp"
#include "saiw/errors.hpp"
#include "saiw/fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace saiw {
namespace {

bool has_kind(const VerdictReport& r, DiffKind k)
{
    return std::any_of(r.differences.begin(), r.differences.end(), [&](const Difference& d) { return d.kind == k; });
}

TEST(ArchValidator, ReweightedModelIsEqual)
{
    const VerdictReport r = compare(fixtures::alexnet(1), fixtures::alexnet(2));
    EXPECT_EQ(r.verdict, Verdict::kEqual);
    EXPECT_TRUE(r.differences.empty());
    EXPECT_EQ(r.lhs_digest, r.rhs_digest);
    EXPECT_EQ(r.lhs_digest.size(), 64u);
}

TEST(ArchValidator, StrideChangeIsAnAttributeDifference)
{
    const ModelFile a = fixtures::conv_relu(1);
    ModelFile b = a;
    b.graph.nodes[0].attributes["strides"] = std::vector<int64_t>{2, 2};
    b.graph.outputs[0].shape = {1, 1, 2, 2};
    const VerdictReport r = compare(a, b);
    EXPECT_EQ(r.verdict, Verdict::kDiffer);
    const auto it = std::find_if(r.differences.begin(), r.differences.end(),
                                 [](const Difference& d) { return d.kind == DiffKind::kAttribute; });
    ASSERT_NE(it, r.differences.end());
    EXPECT_NE(it->location.find("strides"), std::string::npos);
    EXPECT_EQ(it->lhs, "[1,1]");
    EXPECT_EQ(it->rhs, "[2,2]");
}

TEST(ArchValidator, ExtraReluIsANodeCountDifference)
{
    const ModelFile a = fixtures::conv_relu(1);
    ModelFile b = a;
    NodeIR extra;
    extra.name = "relu_extra";
    extra.op_type = "Relu";
    extra.inputs = {b.graph.outputs[0].name};
    extra.outputs = {"extra_out"};
    b.graph.nodes.push_back(extra);
    b.graph.outputs[0].name = "extra_out";
    const VerdictReport r = compare(a, b);
    EXPECT_EQ(r.verdict, Verdict::kDiffer);
    EXPECT_TRUE(has_kind(r, DiffKind::kNodeCount));
}

TEST(ArchValidator, OpsetMismatchIsAVerdict)
{
    const ModelFile a = fixtures::conv_relu(1);
    ModelFile b = a;
    b.graph.opset_version = 11;
    const VerdictReport r = compare(a, b);
    EXPECT_EQ(r.verdict, Verdict::kDiffer);
    EXPECT_TRUE(has_kind(r, DiffKind::kOpset));
}

TEST(ArchValidator, InputShapeChangeIsAnIoDifference)
{
    const ModelFile a = fixtures::conv_relu(1);
    ModelFile b = a;
    b.graph.inputs[0].shape = {1, 1, 6, 6};
    b.graph.outputs[0].shape = {1, 1, 4, 4};
    const VerdictReport r = compare(a, b);
    EXPECT_EQ(r.verdict, Verdict::kDiffer);
    EXPECT_TRUE(has_kind(r, DiffKind::kIoShape));
}

TEST(ArchValidator, OpTypeChangeIsReported)
{
    const ModelFile a = fixtures::alexnet(1);
    ModelFile b = a;
    for (auto& n : b.graph.nodes)
    {
        if (n.name == "pool1")
        {
            n.op_type = "AveragePool";
        }
    }
    const VerdictReport r = compare(a, b);
    EXPECT_EQ(r.verdict, Verdict::kDiffer);
    EXPECT_TRUE(has_kind(r, DiffKind::kOpType));
}

TEST(ArchValidator, DifferencesAlwaysAccompanyDiffer)
{
    gen::Rng rng(41);
    for (int i = 0; i < 100; ++i)
    {
        const ModelFile g = gen::random_graph(rng);
        for (gen::Mutation kind : gen::kAllMutations)
        {
            const auto m = gen::mutate(g, kind, rng);
            if (!m)
            {
                continue;
            }
            const VerdictReport r = compare(g, *m);
            EXPECT_EQ(r.verdict, Verdict::kDiffer) << gen::to_string(kind);
            EXPECT_FALSE(r.differences.empty()) << gen::to_string(kind);
        }
    }
}

TEST(ArchValidator, CompareIsSymmetric)
{
    gen::Rng rng(43);
    for (int i = 0; i < 60; ++i)
    {
        const ModelFile a = gen::random_graph(rng);
        const ModelFile b = i % 2 ? gen::random_graph(rng) : gen::rename_all(a, rng);
        const VerdictReport ab = compare(a, b);
        const VerdictReport ba = compare(b, a);
        EXPECT_EQ(ab.verdict, ba.verdict);
        EXPECT_EQ(ab.lhs_digest, ba.rhs_digest);
        EXPECT_EQ(ab.differences.empty(), ba.differences.empty());
    }
}

TEST(ArchValidator, VerdictAgreesWithIsomorphismOracle)
{
    gen::Rng rng(47);
    int equal = 0, differ = 0;
    for (int i = 0; i < 300; ++i)
    {
        const ModelFile a = gen::random_graph(rng);
        // Alternate composed structure-preserving mutations with independent graphs.
        const ModelFile b = i % 2 ? gen::random_graph(rng)
                                  : gen::resample_weights(gen::shuffle_nodes(gen::rename_all(a, rng), rng), rng);
        const bool iso = gen::isomorphic(a.graph, b.graph);
        EXPECT_EQ(compare(a, b).verdict == Verdict::kEqual, iso) << "pair " << i;
        (iso ? equal : differ) += 1;
    }
    EXPECT_GT(equal, 0);
    EXPECT_GT(differ, 0);
}

TEST(ArchValidator, ReportTextNamesVerdictAndKinds)
{
    ModelFile b = fixtures::conv_relu(1);
    b.graph.opset_version = 12;
    const std::string text = report_text(compare(fixtures::conv_relu(1), b));
    EXPECT_NE(text.find("DIFFER"), std::string::npos);
    EXPECT_NE(text.find("opset"), std::string::npos);
}

TEST(ArchValidator, EmitQualifiedAddsOnlyAttestationMetadata)
{
    const ModelFile a = fixtures::alexnet(1);
    const ModelFile b = fixtures::alexnet(2);
    const ModelFile c = emit_qualified(b, signature(a), fixed_clock("2026-05-04T03:02:01Z"));
    const auto& md = c.graph.metadata;
    EXPECT_EQ(md.at(std::string(meta::kAttestArch)), signature(a).digest);
    EXPECT_EQ(md.at(std::string(meta::kAttestTime)), "2026-05-04T03:02:01Z");
    EXPECT_EQ(md.at(std::string(meta::kAttestTool)), "saiw-arch-validator 1.0.0");
    ModelFile stripped = c;
    for (const auto& key : {meta::kAttestArch, meta::kAttestTime, meta::kAttestTool})
    {
        stripped.graph.metadata.erase(std::string(key));
    }
    EXPECT_EQ(stripped, b);
    EXPECT_EQ(signature(c), signature(b));
}

TEST(ArchValidator, EmitQualifiedIsDeterministicUnderPinnedClock)
{
    const ModelFile b = fixtures::conv_relu(2);
    const Clock clock = fixed_clock("2026-01-01T00:00:00Z");
    EXPECT_EQ(save_model(emit_qualified(b, signature(b), clock)), save_model(emit_qualified(b, signature(b), clock)));
}

TEST(ArchValidator, EmitQualifiedRefusesForeignSignature)
{
    ModelFile other = fixtures::conv_relu(1);
    other.graph.opset_version = 12;
    EXPECT_THROW(emit_qualified(fixtures::conv_relu(1), signature(other), fixed_clock("2026-01-01T00:00:00Z")),
                 AttestationError);
}

TEST(ArchValidator, ClockValidation)
{
    EXPECT_TRUE(is_iso8601_utc("2026-01-01T00:00:00Z"));
    EXPECT_FALSE(is_iso8601_utc("2026-01-01 00:00:00"));
    EXPECT_FALSE(is_iso8601_utc("2026-13-01T00:00:00Z"));
    EXPECT_FALSE(is_iso8601_utc("2026-01-01T00:00:00+01:00"));
    EXPECT_THROW(fixed_clock("yesterday"), Error);
    EXPECT_TRUE(is_iso8601_utc(system_clock()()));
}

TEST(ArchValidator, SignatureIgnoresMetadata)
{
    ModelFile m = fixtures::conv_relu(1);
    const ArchSignature before = signature(m);
    m.graph.metadata["anything"] = "else";
    m.producer_name = "other";
    EXPECT_EQ(signature(m), before);
}

} // namespace
} // namespace saiw
