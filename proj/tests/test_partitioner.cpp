#include "support/graph_gen.hpp"

#include "saiw/arch_validator.hpp"
#include "saiw/errors.hpp"
#include "saiw/executor.hpp"
#include "saiw/fixtures.hpp"
#include "saiw/partitioner.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

namespace saiw {
namespace {

/// x[1,2,5,5] -> Conv(4 filters, 3x3, pad 1, bias) -> Relu.
ModelFile four_filter_conv()
{
    ModelFile m;
    GraphIR& g = m.graph;
    g.inputs.push_back({"x", ElementType::kFloat32, {1, 2, 5, 5}});
    g.initializers["W"] = fixtures::random_tensor(1, {4, 2, 3, 3});
    g.initializers["B"] = fixtures::random_tensor(2, {4});
    NodeIR conv;
    conv.name = "conv";
    conv.op_type = "Conv";
    conv.inputs = {"x", "W", "B"};
    conv.outputs = {"c"};
    conv.attributes = {{"kernel_shape", std::vector<int64_t>{3, 3}}, {"pads", std::vector<int64_t>{1, 1, 1, 1}}};
    NodeIR relu;
    relu.name = "relu";
    relu.op_type = "Relu";
    relu.inputs = {"c"};
    relu.outputs = {"y"};
    g.nodes = {conv, relu};
    g.outputs.push_back({"y", ElementType::kFloat32, {1, 4, 5, 5}});
    return m;
}

PartitionSpec spec_for(const ModelFile& c)
{
    PartitionSpec s;
    s.model_arch = signature(c).digest;
    return s;
}

std::vector<float> rows(const TensorData& w, int64_t from, int64_t to)
{
    const int64_t per = element_count(w.shape) / w.shape[0];
    return {w.f32.begin() + from * per, w.f32.begin() + to * per};
}

TEST(Spec, JsonRoundTrip)
{
    PartitionSpec s;
    s.model_arch = std::string(64, 'a');
    s.default_partition = Reliability::kReliable;
    s.assignments.push_back({std::string("conv"), Reliability::kReliable, std::array<int64_t, 2>{1, 3}});
    s.assignments.push_back({int64_t{4}, Reliability::kNonReliable, std::nullopt});
    const PartitionSpec back = parse_spec(spec_to_json(s));
    EXPECT_EQ(spec_to_json(back), spec_to_json(s));
    ASSERT_EQ(back.assignments.size(), 2u);
    EXPECT_EQ(std::get<int64_t>(back.assignments[1].node), 4);
}

std::string spec_json(const std::string& assignments, const std::string& extra = "")
{
    return R"({"version":1,"model_arch":")" + std::string(64, 'a') + R"(","default_partition":"nonreliable",)" +
           extra + R"("assignments":[)" + assignments + "]}";
}

std::string pointer_of(const std::string& json)
{
    try
    {
        parse_spec(json);
    }
    catch (const SpecError& e)
    {
        return e.pointer();
    }
    return "<accepted>";
}

TEST(Spec, UnknownFieldIsRejectedWithPointer)
{
    EXPECT_EQ(pointer_of(spec_json(R"({"node":"a","partition":"reliable","colour":1})")), "/assignments/0/colour");
    EXPECT_EQ(pointer_of(spec_json("", R"("extra":true,)")), "/extra");
}

TEST(Spec, ChannelsRequireReliablePartition)
{
    EXPECT_EQ(pointer_of(spec_json(R"({"node":"a","partition":"nonreliable","channels":[0,1]})")),
              "/assignments/0/partition");
}

TEST(Spec, EmptyChannelRangeIsRejected)
{
    EXPECT_EQ(pointer_of(spec_json(R"({"node":"a","partition":"reliable","channels":[3,3]})")),
              "/assignments/0/channels");
}

TEST(Spec, DuplicateAssignmentIsRejected)
{
    EXPECT_EQ(pointer_of(spec_json(R"({"node":"a","partition":"reliable"},{"node":"a","partition":"nonreliable"})")),
              "/assignments/1/node");
}

TEST(Spec, MalformedValuesAreRejected)
{
    EXPECT_EQ(pointer_of(spec_json(R"({"node":"a","partition":"maybe"})")), "/assignments/0/partition");
    EXPECT_EQ(pointer_of(spec_json(R"({"node":-1,"partition":"reliable"})")), "/assignments/0/node");
    EXPECT_THROW(parse_spec("{"), SpecError);
    EXPECT_THROW(parse_spec(R"({"version":2})"), SpecError);
}

TEST(Split, FourFilterConvAtOneToThreeSlicesRows)
{
    const ModelFile m = four_filter_conv();
    std::set<std::string> taken{"x", "W", "B", "c", "y", "conv", "relu"};
    const ConvSplit s = split_conv_channels(m.graph, 0, 1, 3, "conv", taken);
    const TensorData& w = m.graph.initializers.at("W");
    const TensorData& b = m.graph.initializers.at("B");

    const TensorData& rw = s.initializers.at(s.reliable.inputs[1]);
    EXPECT_EQ(rw.shape, (Shape{2, 2, 3, 3}));
    EXPECT_EQ(rw.f32, rows(w, 1, 3));
    EXPECT_EQ(s.initializers.at(s.reliable.inputs[2]).f32, rows(b, 1, 3));

    ASSERT_EQ(s.remainders.size(), 2u);
    EXPECT_EQ(s.initializers.at(s.remainders[0].inputs[1]).f32, rows(w, 0, 1));
    EXPECT_EQ(s.initializers.at(s.remainders[1].inputs[1]).f32, rows(w, 3, 4));

    EXPECT_EQ(s.merge.op_type, "Concat");
    EXPECT_EQ(s.merge.outputs, std::vector<std::string>{"c"});
    EXPECT_EQ(s.merge.inputs,
              (std::vector<std::string>{s.remainders[0].outputs[0], s.reliable.outputs[0], s.remainders[1].outputs[0]}));
    ASSERT_EQ(s.order.size(), 3u);
    EXPECT_EQ(s.order[0].start, 0);
    EXPECT_EQ(s.order[1].start, 1);
    EXPECT_EQ(s.order[1].end, 3);
    EXPECT_EQ(s.order[2].end, 4);
    EXPECT_EQ(s.reliable.name, "conv__saiw_r");
}

TEST(Split, RangeBeyondFiltersIsRangeError)
{
    const ModelFile m = four_filter_conv();
    std::set<std::string> taken;
    EXPECT_THROW(split_conv_channels(m.graph, 0, 2, 5, "conv", taken), RangeError);
    EXPECT_THROW(split_conv_channels(m.graph, 1, 0, 1, "relu", taken), NodeKindError);
}

TEST(Partition, ChannelSplitPlacesSliceInD)
{
    const ModelFile c = gen::attest(four_filter_conv());
    PartitionSpec s = spec_for(c);
    s.assignments.push_back({std::string("conv"), Reliability::kReliable, std::array<int64_t, 2>{1, 3}});
    const PartitionResult r = partition(c, s);
    ASSERT_EQ(r.d.graph.nodes.size(), 1u);
    EXPECT_EQ(r.d.graph.nodes[0].name, "conv__saiw_r");
    EXPECT_EQ(r.e.graph.nodes.size(), 4u); // two remainders, merge, relu
    ASSERT_EQ(r.manifest.boundary_tensors.size(), 1u);
    EXPECT_EQ(r.manifest.boundary_tensors[0].producer_partition, "D");
    EXPECT_EQ(r.manifest.boundary_tensors[0].shape, (Shape{1, 2, 5, 5}));
    ASSERT_EQ(r.manifest.channel_splits.size(), 1u);
    EXPECT_EQ(r.manifest.channel_splits[0].out_channels, 4);
    EXPECT_EQ(r.manifest.exports, std::vector<std::string>{r.manifest.boundary_tensors[0].name});
    EXPECT_EQ(r.d.graph.metadata.at(std::string(meta::kPartition)), "D");
    EXPECT_EQ(r.e.graph.metadata.at(std::string(meta::kPartition)), "E");
}

TEST(Partition, FullRangeKeepsTheNodeWhole)
{
    const ModelFile c = gen::attest(four_filter_conv());
    PartitionSpec s = spec_for(c);
    s.assignments.push_back({std::string("conv"), Reliability::kReliable, std::array<int64_t, 2>{0, 4}});
    const PartitionResult r = partition(c, s);
    EXPECT_TRUE(r.manifest.channel_splits.empty());
    ASSERT_EQ(r.d.graph.nodes.size(), 1u);
    EXPECT_EQ(r.d.graph.nodes[0].name, "conv");
}

TEST(Partition, DefaultOnlySpecLeavesDEmpty)
{
    const ModelFile c = gen::attest(fixtures::alexnet(1));
    const PartitionResult r = partition(c, spec_for(c));
    EXPECT_TRUE(r.d.graph.nodes.empty());
    EXPECT_EQ(r.e.graph.nodes.size(), c.graph.nodes.size());
    EXPECT_TRUE(r.manifest.boundary_tensors.empty());
    const RecombinationReport rep = validate_recombination(r.d, r.e, r.manifest, c);
    EXPECT_EQ(rep.verdict.verdict, Verdict::kEqual);
    EXPECT_TRUE(rep.weights_identical);
}

TEST(Partition, DigestMismatchIsSpecMismatch)
{
    const ModelFile c = gen::attest(four_filter_conv());
    PartitionSpec s = spec_for(c);
    s.model_arch = std::string(64, '0');
    EXPECT_THROW(partition(c, s), SpecMismatch);
}

TEST(Partition, UnattestedModelIsSpecMismatch)
{
    const ModelFile c = four_filter_conv();
    EXPECT_THROW(partition(c, spec_for(c)), SpecMismatch);
}

TEST(Partition, UnknownNodeByNameOrIndex)
{
    const ModelFile c = gen::attest(four_filter_conv());
    PartitionSpec byName = spec_for(c);
    byName.assignments.push_back({std::string("nope"), Reliability::kReliable, std::nullopt});
    EXPECT_THROW(partition(c, byName), UnknownNode);
    PartitionSpec byIndex = spec_for(c);
    byIndex.assignments.push_back({int64_t{7}, Reliability::kReliable, std::nullopt});
    EXPECT_THROW(partition(c, byIndex), UnknownNode);
}

TEST(Partition, ChannelsOnNonConvIsNodeKindError)
{
    const ModelFile c = gen::attest(four_filter_conv());
    PartitionSpec s = spec_for(c);
    s.assignments.push_back({std::string("relu"), Reliability::kReliable, std::array<int64_t, 2>{0, 1}});
    EXPECT_THROW(partition(c, s), NodeKindError);
}

TEST(Partition, RangePastFiltersIsRangeError)
{
    const ModelFile c = gen::attest(four_filter_conv());
    PartitionSpec s = spec_for(c);
    s.assignments.push_back({std::string("conv"), Reliability::kReliable, std::array<int64_t, 2>{2, 9}});
    EXPECT_THROW(partition(c, s), RangeError);
}

TEST(Partition, ManifestJsonRoundTrip)
{
    const ModelFile c = gen::attest(fixtures::alexnet(1));
    PartitionSpec s = spec_for(c);
    s.assignments.push_back({std::string("conv1"), Reliability::kReliable, std::array<int64_t, 2>{0, 1}});
    const PartitionResult r = partition(c, s);
    EXPECT_EQ(parse_manifest(manifest_to_json(r.manifest)), r.manifest);
    EXPECT_EQ(parse_manifest(manifest_to_json(r.manifest, -1)), r.manifest);
    EXPECT_THROW(parse_manifest("{}"), ManifestMismatch);
}

TEST(Partition, RecombineRestoresTheOriginalGraph)
{
    gen::Rng rng(61);
    for (int i = 0; i < 60; ++i)
    {
        const ModelFile c = gen::attest(gen::random_graph(rng));
        const PartitionResult r = partition(c, gen::random_spec(c, rng));
        GraphIR back = recombine(r.d, r.e, r.manifest);
        GraphIR expected = c.graph;
        back.metadata.clear();
        expected.metadata.clear();
        back.name = expected.name;
        EXPECT_EQ(back.nodes, expected.nodes) << "graph " << i;
        EXPECT_EQ(back.initializers, expected.initializers) << "graph " << i;
        EXPECT_EQ(back.inputs, expected.inputs) << "graph " << i;
        EXPECT_EQ(back.outputs, expected.outputs) << "graph " << i;
    }
}

TEST(Partition, JointExecutionMatchesMonolithicOnRandomGraphs)
{
    gen::Rng rng(67);
    for (int i = 0; i < 60; ++i)
    {
        const ModelFile c = gen::attest(gen::random_graph(rng));
        const PartitionResult r = partition(c, gen::random_spec(c, rng));
        TensorEnv in;
        for (size_t k = 0; k < c.graph.inputs.size(); ++k)
        {
            in[c.graph.inputs[k].name] =
                fixtures::random_tensor(static_cast<uint32_t>(100 * i + k), c.graph.inputs[k].shape);
        }
        EXPECT_EQ(run_joint(r.d, r.e, r.manifest, in), run(c, in)) << "graph " << i;
    }
}

TEST(Partition, DeterministicOutput)
{
    const ModelFile c = gen::attest(fixtures::shape_cnn(1, 0));
    PartitionSpec s = spec_for(c);
    s.assignments.push_back({std::string("conv1"), Reliability::kReliable, std::array<int64_t, 2>{0, 2}});
    const PartitionResult a = partition(c, s);
    const PartitionResult b = partition(c, s);
    EXPECT_EQ(save_model(a.d), save_model(b.d));
    EXPECT_EQ(save_model(a.e), save_model(b.e));
    EXPECT_EQ(manifest_to_json(a.manifest), manifest_to_json(b.manifest));
}

class Tamper : public ::testing::Test
{
protected:
    void SetUp() override
    {
        c = gen::attest(four_filter_conv());
        PartitionSpec s = spec_for(c);
        s.assignments.push_back({std::string("conv"), Reliability::kReliable, std::array<int64_t, 2>{1, 3}});
        r = partition(c, s);
    }

    ModelFile c;
    PartitionResult r;
};

TEST_F(Tamper, UntouchedFilesVerify)
{
    EXPECT_NO_THROW(verify_manifest(r.d, r.e, r.manifest));
    const RecombinationReport rep = validate_recombination(r.d, r.e, r.manifest, c);
    EXPECT_EQ(rep.verdict.verdict, Verdict::kEqual);
    EXPECT_TRUE(rep.weights_identical);
}

TEST_F(Tamper, WeightChangeInDIsCaught)
{
    for (auto& [name, t] : r.d.graph.initializers)
    {
        t.f32[0] += 1.0f;
    }
    EXPECT_THROW(verify_manifest(r.d, r.e, r.manifest), ManifestMismatch);
}

TEST_F(Tamper, SwappedFilesAreCaught) { EXPECT_THROW(verify_manifest(r.e, r.d, r.manifest), ManifestMismatch); }

TEST_F(Tamper, ManifestFieldChangeIsCaught)
{
    PartitionManifest m = r.manifest;
    m.channel_splits[0].reliable_range = {0, 2};
    EXPECT_THROW(verify_manifest(r.d, r.e, m), ManifestMismatch);
    m = r.manifest;
    m.boundary_tensors[0].shape[1] = 3;
    EXPECT_THROW(verify_manifest(r.d, r.e, m), ManifestMismatch);
}

TEST_F(Tamper, RemovedEmbeddedManifestIsCaught)
{
    r.e.graph.metadata.erase(std::string(meta::kManifest));
    EXPECT_THROW(verify_manifest(r.d, r.e, r.manifest), ManifestMismatch);
}

TEST_F(Tamper, RecombinationAgainstDifferentCIsNotEqual)
{
    ModelFile other = c;
    other.graph.initializers.at("W").f32[5] = 42.0f;
    const RecombinationReport rep = validate_recombination(r.d, r.e, r.manifest, other);
    EXPECT_FALSE(rep.weights_identical);
}

} // namespace
} // namespace saiw
