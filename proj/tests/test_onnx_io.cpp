#include "support/graph_gen.hpp"
#include "support/proto_writer.hpp"

#include "saiw/errors.hpp"
#include "saiw/fixtures.hpp"
#include "saiw/onnx_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace saiw {
namespace {

std::string relu_graph_bytes(const std::string& op = "Relu")
{
    proto::Msg g;
    g.msg(1, proto::node(op, {"x"}, {"y"}, "n0"))
        .bytes(2, "g")
        .msg(11, proto::value_info("x", {1, 2}))
        .msg(12, proto::value_info("y", {1, 2}));
    return proto::model(g);
}

TEST(OnnxIo, LoadsHandEncodedModel)
{
    const ModelFile m = load_model(relu_graph_bytes());
    ASSERT_EQ(m.graph.nodes.size(), 1u);
    EXPECT_EQ(m.graph.nodes[0].op_type, "Relu");
    EXPECT_EQ(m.graph.nodes[0].name, "n0");
    EXPECT_EQ(m.graph.inputs[0].shape, (Shape{1, 2}));
    EXPECT_EQ(m.graph.opset_version, 13);
    EXPECT_EQ(m.ir_version, 7);
}

TEST(OnnxIo, AlexnetRoundTripIsExact)
{
    const ModelFile m = fixtures::alexnet(3);
    const std::string bytes = save_model(m);
    const ModelFile back = load_model(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(save_model(back), bytes);
}

TEST(OnnxIo, RandomGraphsRoundTrip)
{
    gen::Rng rng(11);
    for (int i = 0; i < 60; ++i)
    {
        ModelFile m = gen::random_graph(rng);
        m.graph.metadata["k" + std::to_string(i)] = "v";
        const std::string bytes = save_model(m);
        EXPECT_EQ(load_model(bytes), m) << "graph " << i;
    }
}

TEST(OnnxIo, SaveIsIndependentOfNodeListCopies)
{
    const ModelFile m = fixtures::conv_relu(5);
    EXPECT_EQ(save_model(m), save_model(ModelFile(m)));
}

TEST(OnnxIo, TruncationRaisesParseErrorWithOffset)
{
    const std::string bytes = save_model(fixtures::conv_relu(1));
    for (size_t cut : {size_t{1}, size_t{5}, bytes.size() / 3, bytes.size() / 2, bytes.size() - 1})
    {
        const std::string prefix = bytes.substr(0, cut);
        try
        {
            load_model(prefix);
            ADD_FAILURE() << "truncation at " << cut << " was accepted";
        }
        catch (const ParseError& e)
        {
            EXPECT_LE(e.offset(), prefix.size());
        }
        catch (const Error&)
        {
            // A cut that lands on a field boundary yields a well-formed but incomplete model.
        }
    }
}

TEST(OnnxIo, EmptyInputHasNoGraph) { EXPECT_THROW(load_model(""), ParseError); }

TEST(OnnxIo, ControlFlowOpIsUnsupported)
{
    try
    {
        load_model(relu_graph_bytes("If"));
        FAIL() << "If was accepted";
    }
    catch (const UnsupportedOp& e)
    {
        EXPECT_EQ(e.subject(), "If");
    }
}

TEST(OnnxIo, ForeignDomainIsUnsupported)
{
    proto::Msg n = proto::node("Relu", {"x"}, {"y"});
    n.bytes(7, "com.example");
    proto::Msg g;
    g.msg(1, n).msg(11, proto::value_info("x", {1})).msg(12, proto::value_info("y", {1}));
    EXPECT_THROW(load_model(proto::model(g)), UnsupportedOp);
}

TEST(OnnxIo, Float16InitializerIsUnsupported)
{
    proto::Msg t;
    t.varint(1, 2).varint(2, 10).bytes(8, "w").bytes(9, std::string(4, '\0'));
    proto::Msg g;
    g.msg(1, proto::node("Add", {"x", "w"}, {"y"}))
        .msg(5, t)
        .msg(11, proto::value_info("x", {2}))
        .msg(12, proto::value_info("y", {2}));
    try
    {
        load_model(proto::model(g));
        FAIL() << "FLOAT16 was accepted";
    }
    catch (const UnsupportedOp& e)
    {
        EXPECT_NE(std::string(e.what()).find("FLOAT16"), std::string::npos);
    }
}

TEST(OnnxIo, SymbolicDimensionIsUnsupported)
{
    proto::Msg shape;
    shape.msg(1, proto::Msg().bytes(2, "batch"));
    proto::Msg tensorType;
    tensorType.varint(1, 1).msg(2, shape);
    proto::Msg in;
    in.bytes(1, "x").msg(2, proto::Msg().msg(1, tensorType));
    proto::Msg g;
    g.msg(1, proto::node("Relu", {"x"}, {"y"})).msg(11, in).msg(12, proto::value_info("y", {1}));
    EXPECT_THROW(load_model(proto::model(g)), UnsupportedOp);
}

TEST(OnnxIo, MissingDefaultOpsetIsAnInvariantError)
{
    proto::Msg g;
    g.msg(1, proto::node("Relu", {"x"}, {"y"})).msg(11, proto::value_info("x", {1})).msg(12, proto::value_info("y", {1}));
    EXPECT_THROW(load_model(proto::model(g, -1)), InvariantError);
}

TEST(OnnxIo, UntypedOutputIsFilledByInference)
{
    proto::Msg g;
    g.msg(1, proto::node("Relu", {"x"}, {"y"}))
        .msg(11, proto::value_info("x", {3, 4}))
        .msg(12, proto::Msg().bytes(1, "y"));
    const ModelFile m = load_model(proto::model(g));
    EXPECT_EQ(m.graph.outputs[0].shape, (Shape{3, 4}));
}

TEST(OnnxIo, InitializerListedAsInputIsDropped)
{
    proto::Msg t;
    t.varint(1, 2).varint(2, 1).bytes(8, "w").packed_floats(4, {1.0f, 2.0f});
    proto::Msg g;
    g.msg(1, proto::node("Add", {"x", "w"}, {"y"}))
        .msg(5, t)
        .msg(11, proto::value_info("x", {2}))
        .msg(11, proto::value_info("w", {2}))
        .msg(12, proto::value_info("y", {2}));
    const ModelFile m = load_model(proto::model(g));
    ASSERT_EQ(m.graph.inputs.size(), 1u);
    EXPECT_EQ(m.graph.initializers.at("w").f32, (std::vector<float>{1.0f, 2.0f}));
}

TEST(OnnxIo, FloatDataPackedAndUnpackedBothLoad)
{
    proto::Msg packed;
    packed.varint(1, 3).varint(2, 1).packed_floats(4, {1.5f, -2.0f, 0.25f});
    proto::Msg unpacked;
    unpacked.varint(1, 3).varint(2, 1).fixed32(4, 1.5f).fixed32(4, -2.0f).fixed32(4, 0.25f);
    const TensorData a = load_tensor(packed.str());
    const TensorData b = load_tensor(unpacked.str());
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.f32, (std::vector<float>{1.5f, -2.0f, 0.25f}));
}

TEST(OnnxIo, ScalarTensorRoundTrip)
{
    const TensorData s = TensorData::make_f32({}, {3.25f});
    std::string name;
    const TensorData back = load_tensor(save_tensor(s, "s"), &name);
    EXPECT_EQ(back, s);
    EXPECT_TRUE(back.shape.empty());
    EXPECT_EQ(name, "s");
}

TEST(OnnxIo, Int64TensorRoundTrip)
{
    const TensorData t = TensorData::make_i64({3}, {-1, 0, std::numeric_limits<int64_t>::max()});
    EXPECT_EQ(load_tensor(save_tensor(t)), t);
}

TEST(OnnxIo, SpecialFloatsSurviveBitExactly)
{
    const float nan = std::numeric_limits<float>::quiet_NaN();
    const TensorData t = TensorData::make_f32({4}, {-0.0f, nan, std::numeric_limits<float>::infinity(), 1e-45f});
    const TensorData back = load_tensor(save_tensor(t));
    EXPECT_EQ(back, t);
    EXPECT_TRUE(std::signbit(back.f32[0]));
}

TEST(OnnxIo, MetadataRoundTrip)
{
    ModelFile m = fixtures::conv_relu(1);
    m.graph.metadata["a"] = "1";
    m.graph.metadata["saiw.partition"] = "D";
    EXPECT_EQ(load_model(save_model(m)).graph.metadata, m.graph.metadata);
}

TEST(OnnxIo, SaveRejectsInvalidGraph)
{
    ModelFile m = fixtures::conv_relu(1);
    m.graph.nodes[1].inputs[0] = "nowhere";
    EXPECT_THROW(save_model(m), InvariantError);
}

} // namespace
} // namespace saiw
