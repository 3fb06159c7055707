#include "saiw/tensor.hpp"

#include "saiw/errors.hpp"

#include <bit>
#include <limits>

namespace saiw {

std::string_view to_string(ElementType type)
{
    switch (type)
    {
        case ElementType::kFloat32:
            return "f32";
        case ElementType::kInt64:
            return "i64";
    }
    return "?";
}

std::optional<ElementType> element_type_from_string(std::string_view s)
{
    if (s == "f32")
    {
        return ElementType::kFloat32;
    }
    if (s == "i64")
    {
        return ElementType::kInt64;
    }
    return std::nullopt;
}

int64_t element_count(const Shape& shape)
{
    int64_t n = 1;
    for (int64_t d : shape)
    {
        if (d < 0)
        {
            throw InvariantError("negative dimension in shape " + shape_to_string(shape));
        }
        if (d != 0 && n > std::numeric_limits<int64_t>::max() / d)
        {
            throw InvariantError("shape " + shape_to_string(shape) + " overflows element count");
        }
        n *= d;
    }
    return n;
}

std::string shape_to_string(const Shape& shape)
{
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i)
    {
        if (i)
        {
            s += ",";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

TensorData TensorData::make_f32(Shape shape, std::vector<float> values)
{
    TensorData t;
    t.type = ElementType::kFloat32;
    t.shape = std::move(shape);
    t.f32 = std::move(values);
    t.check();
    return t;
}

TensorData TensorData::make_i64(Shape shape, std::vector<int64_t> values)
{
    TensorData t;
    t.type = ElementType::kInt64;
    t.shape = std::move(shape);
    t.i64 = std::move(values);
    t.check();
    return t;
}

TensorData TensorData::zeros(Shape shape)
{
    const auto n = static_cast<size_t>(element_count(shape));
    return make_f32(std::move(shape), std::vector<float>(n, 0.0f));
}

int64_t TensorData::size() const
{
    return element_count(shape);
}

void TensorData::check() const
{
    const auto n = static_cast<size_t>(element_count(shape));
    const bool isF32 = type == ElementType::kFloat32;
    const size_t have = isF32 ? f32.size() : i64.size();
    const size_t other = isF32 ? i64.size() : f32.size();
    if (have != n || other != 0)
    {
        throw InvariantError("tensor buffer holds " + std::to_string(have) + " values but shape " +
                             shape_to_string(shape) + " requires " + std::to_string(n));
    }
}

uint32_t float_bits(float v)
{
    return std::bit_cast<uint32_t>(v);
}

bool bit_equal(float a, float b)
{
    return float_bits(a) == float_bits(b);
}

bool operator==(const TensorData& a, const TensorData& b)
{
    if (a.type != b.type || a.shape != b.shape || a.i64 != b.i64 || a.f32.size() != b.f32.size())
    {
        return false;
    }
    for (size_t i = 0; i < a.f32.size(); ++i)
    {
        if (!bit_equal(a.f32[i], b.f32[i]))
        {
            return false;
        }
    }
    return true;
}

} // namespace saiw
