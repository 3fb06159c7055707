#pragma once

// Protected-channel validator: Sobel edge map, contour extraction, SAX shape words and the
// template decision that gates the classifier.

#include "saiw/tensor.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace saiw {

/// Standard normal quantile. Throws ParamError unless 0 < p < 1.
double inverse_normal_cdf(double p);

/// The a-1 equiprobable N(0,1) breakpoints for alphabet size a in [2, 10].
std::vector<double> gaussian_breakpoints(int a);

/// 1x2x3x3 weight holding the x and y Sobel kernels, for use as a Conv initializer.
TensorData sobel_weight();

/// Gradient components (channel 0 = Gx, channel 1 = Gy) via conv2d with pad 1. Throws ShapeError.
TensorData sobel_xy(const TensorData& image);

/// Gradient magnitude sqrt(Gx^2 + Gy^2), shape 1x1xHxW. Throws ShapeError.
TensorData sobel(const TensorData& image);

struct Point
{
    int64_t y = 0;
    int64_t x = 0;

    friend bool operator==(const Point&, const Point&) = default;
};

/// Outer boundary of the largest 8-connected foreground component of a binary image
/// (row-major, `h` x `w`), traced clockwise by Moore-neighbour tracing from the topmost,
/// then leftmost pixel. Empty when the mask has no foreground.
std::vector<Point> trace_largest_boundary(const std::vector<uint8_t>& mask, int64_t h, int64_t w,
                                          bool* touchesBorder = nullptr, int64_t* componentSize = nullptr);

struct ShapeSeries
{
    std::vector<float> values;
};

/// Centroid-distance profile sampled at `n` equal arc-length steps around a closed polygon,
/// starting at the vertex farthest from the centroid. Near-ties for that vertex are resolved by
/// taking the lexicographically largest resulting series, so the result does not depend on
/// where the point list starts.
ShapeSeries series_from_boundary(const std::vector<std::array<double, 2>>& points, int n);

struct Contour
{
    std::vector<Point> boundary;
    bool touches_border = false;
    int64_t component_size = 0;
};

/// Binarizes an edge tensor at theta_frac * max and traces the largest component.
/// Accepts 1x1xHxW magnitudes or 1x2xHxW gradient pairs (combined as a hypotenuse).
/// Throws ParamError, ShapeError, EmptyShape, DegenerateShape (< 8 boundary pixels).
Contour extract_contour(const TensorData& edges, float thetaFrac);

ShapeSeries contour_series(const TensorData& edges, float thetaFrac, int n);

struct SaxWord
{
    std::vector<int> symbols;
    int a = 4;
    int n = 0;

    friend bool operator==(const SaxWord&, const SaxWord&) = default;
};

/// Piecewise aggregate approximation. Throws ParamError unless w divides the length.
std::vector<double> paa(const std::vector<double>& series, int w);

/// z-normalize, PAA to w segments, map each mean to the number of breakpoints <= it.
/// Series with population std < 1e-8 map to the all-(ceil(a/2)-1) word. Throws ParamError.
SaxWord sax_encode(const ShapeSeries& s, int w, int a);
SaxWord flat_word(int w, int a, int n);

/// SAX MINDIST lower bound. Throws ParamError on (w, a, n) mismatch.
double mindist(const SaxWord& u, const SaxWord& v);

struct TemplateSet
{
    int w = 16;
    int a = 4;
    int n = 128;
    double tau = 0.0;
    std::map<std::string, std::vector<SaxWord>> classes;
};

/// JSON: {"w","a","n","tau","classes":{label:[[symbols...],...]}}. Throws ParamError.
TemplateSet parse_templates(std::string_view json);
std::string templates_to_json(const TemplateSet& t);

struct SpcpParams
{
    int n = 128;
    int w = 16;
    int a = 4;
    float theta_frac = 0.25f;
    /// Profiles whose coefficient of variation is below this are treated as flat (round shapes).
    double flat_cv = 0.05;
    /// Components smaller than this many boundary pixels are noise.
    int64_t min_boundary = 24;
};

/// Shape word of an edge tensor with the pipeline guards applied. Throws EmptyShape or
/// DegenerateShape for blank, border-touching or tiny components.
SaxWord shape_word(const TensorData& edges, const SpcpParams& params);

struct Decision
{
    bool accept = false;
    std::string cls;
    /// "match", "shape-mismatch", "unknown-class", "param-mismatch" or "no-shape".
    std::string reason;
    double min_distance = 0.0; // +inf when nothing was compared
    double threshold = 0.0;
    std::vector<float> cnn_scores;
};

/// The protected channel decides; the classifier's scores are recorded but never consulted.
Decision spcp_decide(const std::string& cnnClass, const std::vector<float>& cnnScores, const SaxWord& word,
                     const TemplateSet& templates);

/// Full validator: edge tensor -> shape word -> decision. Never throws for shape problems;
/// those become REJECT("no-shape").
Decision spcp_validate(const TensorData& edges, const std::string& cnnClass, const std::vector<float>& cnnScores,
                       const TemplateSet& templates, const SpcpParams& params = {});

std::string decision_json(const Decision& d);

/// Templates from clean renderings: tau = 0.5 * the smallest MINDIST between words of
/// different classes.
TemplateSet build_templates(const std::map<std::string, std::vector<TensorData>>& edgeMaps,
                            const SpcpParams& params = {});

} // namespace saiw
