#include "saiw/fixtures.hpp"

#include "saiw/errors.hpp"
#include "saiw/spcp.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace saiw::fixtures {

std::vector<float> uniform(uint32_t seed, size_t count, float lo, float hi)
{
    // mt19937 output is fixed by the standard; std::uniform_real_distribution is not.
    std::mt19937 rng(seed);
    std::vector<float> out(count);
    for (auto& v : out)
    {
        const float u = static_cast<float>(rng() >> 8) * 0x1p-24f;
        v = lo + (hi - lo) * u;
    }
    return out;
}

TensorData random_tensor(uint32_t seed, Shape shape, float lo, float hi)
{
    const auto n = static_cast<size_t>(element_count(shape));
    return TensorData::make_f32(std::move(shape), uniform(seed, n, lo, hi));
}

namespace {

class Builder
{
public:
    Builder(uint32_t seed, std::string name)
        : m_Seed(seed)
    {
        m_Model.producer_name = "saiw-fixtures";
        m_Model.producer_version = "1";
        m_Model.graph.name = std::move(name);
    }

    void input(const std::string& name, Shape shape)
    {
        m_Model.graph.inputs.push_back({name, ElementType::kFloat32, std::move(shape)});
        m_Last = name;
    }

    std::string param(const std::string& name, Shape shape, float scale)
    {
        m_Model.graph.initializers[name] = random_tensor(m_Seed + m_Counter++, std::move(shape), -scale, scale);
        return name;
    }

    std::string node(const std::string& name, const std::string& op, std::vector<std::string> extra,
                     std::map<std::string, AttributeValue> attrs = {})
    {
        NodeIR n;
        n.name = name;
        n.op_type = op;
        n.inputs.push_back(m_Last);
        n.inputs.insert(n.inputs.end(), extra.begin(), extra.end());
        n.outputs = {name + "_out"};
        n.attributes = std::move(attrs);
        m_Model.graph.nodes.push_back(std::move(n));
        m_Last = name + "_out";
        return m_Last;
    }

    std::string conv(const std::string& name, int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad)
    {
        const float scale = std::sqrt(3.0f / static_cast<float>(cin * k * k));
        const auto w = param(name + "_W", {cout, cin, k, k}, scale);
        const auto b = param(name + "_B", {cout}, 0.1f);
        return node(name, "Conv", {w, b},
                    {{"kernel_shape", std::vector<int64_t>{k, k}},
                     {"strides", std::vector<int64_t>{stride, stride}},
                     {"pads", std::vector<int64_t>{pad, pad, pad, pad}}});
    }

    std::string gemm(const std::string& name, int64_t in, int64_t out)
    {
        const float scale = std::sqrt(3.0f / static_cast<float>(in));
        const auto w = param(name + "_W", {out, in}, scale);
        const auto b = param(name + "_B", {out}, 0.1f);
        return node(name, "Gemm", {w, b}, {{"transB", int64_t{1}}});
    }

    std::string pool(const std::string& name, int64_t k, int64_t s)
    {
        return node(name, "MaxPool", {},
                    {{"kernel_shape", std::vector<int64_t>{k, k}}, {"strides", std::vector<int64_t>{s, s}}});
    }

    std::string lrn(const std::string& name)
    {
        return node(name, "LRN", {},
                    {{"size", int64_t{5}}, {"alpha", 1e-4f}, {"beta", 0.75f}, {"bias", 2.0f}});
    }

    ModelFile finish()
    {
        const auto types = infer_types(m_Model.graph);
        const auto& t = types.at(m_Last);
        m_Model.graph.outputs.push_back({m_Last, t.type, t.shape});
        validate(m_Model.graph);
        return m_Model;
    }

    ModelFile& model() { return m_Model; }
    const std::string& last() const { return m_Last; }

private:
    uint32_t m_Seed;
    uint32_t m_Counter = 0;
    ModelFile m_Model;
    std::string m_Last;
};

} // namespace

ModelFile alexnet(uint32_t seed, int64_t classes)
{
    Builder b(seed, "alexnet_small");
    b.input("image", {1, 3, 67, 67});
    b.conv("conv1", 3, 96, 11, 4, 2); // 16x16
    b.node("relu1", "Relu", {});
    b.lrn("norm1");
    b.pool("pool1", 3, 2); // 7x7
    b.conv("conv2", 96, 256, 5, 1, 2);
    b.node("relu2", "Relu", {});
    b.lrn("norm2");
    b.pool("pool2", 3, 2); // 3x3
    b.conv("conv3", 256, 384, 3, 1, 1);
    b.node("relu3", "Relu", {});
    b.conv("conv4", 384, 384, 3, 1, 1);
    b.node("relu4", "Relu", {});
    b.conv("conv5", 384, 256, 3, 1, 1);
    b.node("relu5", "Relu", {});
    b.pool("pool5", 3, 2); // 1x1
    b.node("flatten", "Flatten", {}, {{"axis", int64_t{1}}});
    b.node("drop6", "Dropout", {});
    b.gemm("fc6", 256, 512);
    b.node("relu6", "Relu", {});
    b.node("drop7", "Dropout", {});
    b.gemm("fc7", 512, 512);
    b.node("relu7", "Relu", {});
    b.gemm("fc8", 512, classes);
    b.node("prob", "Softmax", {}, {{"axis", int64_t{1}}});
    return b.finish();
}

ModelFile conv_relu(uint32_t seed)
{
    Builder b(seed, "conv_relu");
    b.input("x", {1, 1, 5, 5});
    const auto w = b.param("W", {1, 1, 3, 3}, 1.0f);
    b.node("conv", "Conv", {w}, {{"kernel_shape", std::vector<int64_t>{3, 3}}});
    b.node("relu", "Relu", {});
    return b.finish();
}

const std::vector<std::string>& shape_labels()
{
    static const std::vector<std::string> labels{"square", "circle", "triangle"};
    return labels;
}

ModelFile shape_cnn(uint32_t seed, int64_t claimed)
{
    const auto& labels = shape_labels();
    if (claimed < 0 || claimed >= static_cast<int64_t>(labels.size()))
    {
        throw Error("claimed class index out of range");
    }
    Builder b(seed, "shape_cnn");
    b.input("image", {1, 1, 64, 64});
    b.conv("conv1", 1, 8, 3, 1, 1);
    // Filters 0 and 1 are the Sobel pair; the rest stay random.
    auto& inits = b.model().graph.initializers;
    const TensorData sob = sobel_weight();
    std::copy(sob.f32.begin(), sob.f32.end(), inits.at("conv1_W").f32.begin());
    inits.at("conv1_B").f32[0] = 0.0f;
    inits.at("conv1_B").f32[1] = 0.0f;
    b.node("relu1", "Relu", {});
    b.pool("pool1", 2, 2); // 32x32
    b.conv("conv2", 8, 8, 3, 1, 1);
    b.node("relu2", "Relu", {});
    b.pool("pool2", 4, 4); // 8x8
    b.node("flatten", "Flatten", {}, {{"axis", int64_t{1}}});
    b.gemm("fc", 512, static_cast<int64_t>(labels.size()));
    auto& fc = inits.at("fc_W");
    for (auto& v : fc.f32)
    {
        v *= 1e-3f;
    }
    auto& bias = inits.at("fc_B");
    for (size_t i = 0; i < bias.f32.size(); ++i)
    {
        bias.f32[i] = static_cast<int64_t>(i) == claimed ? 4.0f : 0.0f;
    }
    b.node("prob", "Softmax", {}, {{"axis", int64_t{1}}});
    ModelFile m = b.finish();
    std::string joined;
    for (const auto& l : labels)
    {
        joined += (joined.empty() ? "" : ",") + l;
    }
    m.graph.metadata[kLabelsKey] = joined;
    return m;
}

namespace {

template <typename Inside>
TensorData render(int64_t h, int64_t w, Inside inside)
{
    TensorData t = TensorData::zeros({1, 1, h, w});
    for (int64_t y = 0; y < h; ++y)
    {
        for (int64_t x = 0; x < w; ++x)
        {
            t.f32[y * w + x] = inside(y + 0.5, x + 0.5) ? 1.0f : 0.0f;
        }
    }
    return t;
}

} // namespace

TensorData render_square(int64_t h, int64_t w, double cy, double cx, double half)
{
    return render(h, w, [&](double y, double x) { return std::fabs(y - cy) <= half && std::fabs(x - cx) <= half; });
}

TensorData render_circle(int64_t h, int64_t w, double cy, double cx, double radius)
{
    return render(h, w, [&](double y, double x) { return std::hypot(y - cy, x - cx) <= radius; });
}

TensorData render_triangle(int64_t h, int64_t w, double cy, double cx, double radius)
{
    std::array<std::array<double, 2>, 3> v{};
    for (int k = 0; k < 3; ++k)
    {
        const double angle = -std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3; // apex up
        v[k] = {cy + radius * std::sin(angle), cx + radius * std::cos(angle)};
    }
    return render(h, w, [&](double y, double x) {
        bool neg = false, pos = false;
        for (int k = 0; k < 3; ++k)
        {
            const auto& p = v[k];
            const auto& q = v[(k + 1) % 3];
            const double cross = (q[1] - p[1]) * (y - p[0]) - (q[0] - p[0]) * (x - p[1]);
            neg |= cross < 0;
            pos |= cross > 0;
        }
        return !(neg && pos);
    });
}

TensorData render_shape(const std::string& label, int64_t h, int64_t w, double cy, double cx, double size)
{
    if (label == "square")
    {
        return render_square(h, w, cy, cx, size);
    }
    if (label == "circle")
    {
        return render_circle(h, w, cy, cx, size);
    }
    if (label == "triangle")
    {
        return render_triangle(h, w, cy, cx, size);
    }
    throw Error("unknown shape '" + label + "'");
}

TemplateSet shape_templates(int64_t side, const SpcpParams& params)
{
    std::map<std::string, std::vector<TensorData>> clean;
    const double c = static_cast<double>(side) / 2;
    for (const auto& label : shape_labels())
    {
        clean[label].push_back(sobel_xy(render_shape(label, side, side, c, c, static_cast<double>(side) / 4)));
    }
    return build_templates(clean, params);
}

} // namespace saiw::fixtures
