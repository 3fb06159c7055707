#pragma once

// Deterministic models and images used by the tests, the acceptance suite and
// `saiw make-fixtures`.

#include "saiw/onnx_io.hpp"
#include "saiw/spcp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace saiw::fixtures {

/// Uniform floats in [lo, hi) from mt19937, identical on every conforming platform.
std::vector<float> uniform(uint32_t seed, size_t count, float lo, float hi);

TensorData random_tensor(uint32_t seed, Shape shape, float lo = -1.0f, float hi = 1.0f);

/// AlexNet-shaped classifier on a 1x3x67x67 input: five convolutions (conv1 keeps its 96
/// 11x11 stride-4 filters), two LRNs, three max-pools, three Gemms with dropout, softmax over
/// `classes` outputs. Weights are derived from `seed`.
ModelFile alexnet(uint32_t seed = 1, int64_t classes = 10);

/// Conv -> Relu on a 1x1x5x5 input with a single 3x3 filter.
ModelFile conv_relu(uint32_t seed = 1);

/// Class labels of the shape classifier, in output order.
const std::vector<std::string>& shape_labels();

/// Metadata key holding the comma-separated class labels of a classifier.
inline constexpr const char* kLabelsKey = "class_labels";

/// Small shape classifier on a 1x1x64x64 grayscale input. conv1 filters 0 and 1 are the
/// Sobel x/y kernels (the edge map shared with the validator); the final bias makes the
/// classifier claim `claimed` (an index into shape_labels()).
ModelFile shape_cnn(uint32_t seed = 1, int64_t claimed = 0);

/// Filled shapes (1 inside, 0 outside) on a 1x1xHxW canvas; (cy, cx) is the centre.
TensorData render_square(int64_t h, int64_t w, double cy, double cx, double half);
TensorData render_circle(int64_t h, int64_t w, double cy, double cx, double radius);
/// Upward-pointing equilateral triangle with circumradius `radius`.
TensorData render_triangle(int64_t h, int64_t w, double cy, double cx, double radius);
TensorData render_shape(const std::string& label, int64_t h, int64_t w, double cy, double cx, double size);

/// Templates from one clean, centred rendering per class (size side/4) on a side x side canvas,
/// with tau calibrated by build_templates.
TemplateSet shape_templates(int64_t side = 64, const SpcpParams& params = {});

} // namespace saiw::fixtures
