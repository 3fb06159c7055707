#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace saiw {

using Shape = std::vector<int64_t>;

/// Element types carried by the supported subset. Values are the ONNX DataType codes.
enum class ElementType : int32_t
{
    kFloat32 = 1,
    kInt64 = 7,
};

std::string_view to_string(ElementType type);
std::optional<ElementType> element_type_from_string(std::string_view s);

/// Product of the dimensions; 1 for a scalar. Throws InvariantError on negative dims or overflow.
int64_t element_count(const Shape& shape);

std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor. Exactly one of `f32` / `i64` holds data, selected by `type`.
struct TensorData
{
    ElementType type = ElementType::kFloat32;
    Shape shape;
    std::vector<float> f32;
    std::vector<int64_t> i64;

    static TensorData make_f32(Shape shape, std::vector<float> values);
    static TensorData make_i64(Shape shape, std::vector<int64_t> values);
    static TensorData zeros(Shape shape);

    int64_t size() const;

    /// Throws InvariantError unless the active buffer length equals the shape product
    /// and the inactive buffer is empty.
    void check() const;

    /// Bit-exact comparison (NaN payloads and signed zeros are distinguished).
    friend bool operator==(const TensorData& a, const TensorData& b);
};

bool bit_equal(float a, float b);
uint32_t float_bits(float v);

} // namespace saiw
