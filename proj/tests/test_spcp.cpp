#include "saiw/errors.hpp"
#include "saiw/fixtures.hpp"
#include "saiw/spcp.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace saiw {
namespace {

/// Standard normal quantile by bisection on erfc, independent of the library's rational approximation.
double quantile_by_bisection(double p)
{
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i)
    {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<std::array<double, 2>> square_polygon(int perSide, int rotate)
{
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < perSide; ++i)
        pts.push_back({-1.0, -1.0 + 2.0 * i / perSide});
    for (int i = 0; i < perSide; ++i)
        pts.push_back({-1.0 + 2.0 * i / perSide, 1.0});
    for (int i = 0; i < perSide; ++i)
        pts.push_back({1.0, 1.0 - 2.0 * i / perSide});
    for (int i = 0; i < perSide; ++i)
        pts.push_back({1.0 - 2.0 * i / perSide, -1.0});
    std::rotate(pts.begin(), pts.begin() + rotate, pts.end());
    return pts;
}

SaxWord word(std::vector<int> symbols, int a = 4, int n = 4)
{
    return SaxWord{std::move(symbols), a, n};
}

TEST(Sax, BreakpointsForFourSymbols)
{
    const auto bp = gaussian_breakpoints(4);
    ASSERT_EQ(bp.size(), 3u);
    EXPECT_NEAR(bp[0], -0.6744897501960817, 1e-12);
    EXPECT_NEAR(bp[1], 0.0, 1e-12);
    EXPECT_NEAR(bp[2], 0.6744897501960817, 1e-12);
}

TEST(Sax, BreakpointsMatchBisectionQuantiles)
{
    for (int a = 2; a <= 10; ++a)
    {
        const auto bp = gaussian_breakpoints(a);
        ASSERT_EQ(bp.size(), static_cast<size_t>(a - 1));
        for (int k = 1; k < a; ++k)
        {
            EXPECT_NEAR(bp[k - 1], quantile_by_bisection(static_cast<double>(k) / a), 1e-9) << "a=" << a;
        }
    }
}

TEST(Sax, OutOfRangeParametersAreRejected)
{
    EXPECT_THROW(gaussian_breakpoints(1), ParamError);
    EXPECT_THROW(gaussian_breakpoints(11), ParamError);
    EXPECT_THROW(inverse_normal_cdf(0.0), ParamError);
    EXPECT_THROW(inverse_normal_cdf(1.0), ParamError);
}

TEST(Sax, EvenlySpacedRampUsesEveryLetter)
{
    EXPECT_EQ(sax_encode(ShapeSeries{{-1.5f, -0.5f, 0.5f, 1.5f}}, 4, 4).symbols, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Sax, PaaAveragesEqualSegments)
{
    EXPECT_EQ(paa({1, 2, 3, 4, 5, 6}, 3), (std::vector<double>{1.5, 3.5, 5.5}));
    EXPECT_EQ(paa({1, 2, 3, 4}, 4), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_THROW(paa({1, 2, 3, 4, 5}, 2), ParamError);
}

TEST(Sax, EncodingIgnoresScaleAndOffset)
{
    std::vector<float> base(32), moved(32);
    for (int i = 0; i < 32; ++i)
    {
        base[i] = std::sin(0.4f * static_cast<float>(i)) + 0.1f * static_cast<float>(i % 5);
        moved[i] = 3.0f * base[i] + 7.0f;
    }
    EXPECT_EQ(sax_encode(ShapeSeries{base}, 8, 5), sax_encode(ShapeSeries{moved}, 8, 5));
}

TEST(Sax, FlatSeriesMapsToMiddleLetter)
{
    const SaxWord w = sax_encode(ShapeSeries{std::vector<float>(16, 2.0f)}, 4, 4);
    EXPECT_EQ(w.symbols, (std::vector<int>{1, 1, 1, 1}));
    EXPECT_EQ(w, flat_word(4, 4, 16));
}

TEST(Sax, MindistOfFarLettersMatchesHandValue)
{
    // dist(0, 3) = beta_3 - beta_1 = 2 * 0.6744897..., one differing segment, n / w = 1.
    EXPECT_NEAR(mindist(word({0, 0, 0, 0}), word({3, 0, 0, 0})), 2 * 0.6744897501960817, 1e-12);
    EXPECT_NEAR(mindist(word({0, 0}, 4, 8), word({3, 3}, 4, 8)), std::sqrt(4.0 * 2.0) * 1.3489795003921634, 1e-12);
}

TEST(Sax, AdjacentLettersAreAtDistanceZero)
{
    EXPECT_EQ(mindist(word({0, 1, 2, 3}), word({1, 2, 3, 2})), 0.0);
    EXPECT_EQ(mindist(word({2, 2, 2, 2}), word({2, 2, 2, 2})), 0.0);
}

TEST(Sax, MindistRejectsMismatchedWords)
{
    EXPECT_THROW(mindist(word({0, 1, 2, 3}), word({0, 1, 2, 3}, 5)), ParamError);
    EXPECT_THROW(mindist(word({0, 1, 2, 3}), word({0, 1}, 4, 4)), ParamError);
}

TEST(ShapeSeries, SquareProfileRatioIsInverseRootTwo)
{
    const ShapeSeries s = series_from_boundary(square_polygon(50, 0), 128);
    ASSERT_EQ(s.values.size(), 128u);
    const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
    EXPECT_NEAR(*lo / *hi, 1.0 / std::numbers::sqrt2, 0.01);
    EXPECT_NEAR(s.values.front(), *hi, 1e-6);
}

TEST(ShapeSeries, StartingVertexDoesNotMatter)
{
    const ShapeSeries ref = series_from_boundary(square_polygon(25, 0), 64);
    for (int r : {1, 13, 37, 60, 99})
    {
        const ShapeSeries s = series_from_boundary(square_polygon(25, r), 64);
        ASSERT_EQ(s.values.size(), ref.values.size());
        for (size_t i = 0; i < s.values.size(); ++i)
        {
            EXPECT_NEAR(s.values[i], ref.values[i], 1e-5) << "rotation " << r << " index " << i;
        }
    }
}

TEST(ShapeSeries, RenderedCircleIsNearlyFlat)
{
    const TensorData edges = sobel_xy(fixtures::render_shape("circle", 64, 64, 32, 32, 16));
    const ShapeSeries s = contour_series(edges, 0.25f, 128);
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / s.values.size();
    double var = 0.0;
    for (float v : s.values)
    {
        var += (v - mean) * (v - mean);
    }
    EXPECT_LT(std::sqrt(var / s.values.size()) / mean, 0.05);
}

TEST(Contour, BlankEdgeMapIsEmpty)
{
    EXPECT_THROW(extract_contour(TensorData::zeros({1, 2, 16, 16}), 0.25f), EmptyShape);
}

TEST(Contour, BlockBoundaryIsTracedClockwise)
{
    std::vector<uint8_t> mask(25, 0);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x)
            mask[y * 5 + x] = 1;
    bool border = true;
    int64_t size = 0;
    const auto b = trace_largest_boundary(mask, 5, 5, &border, &size);
    const std::vector<Point> expected{{1, 1}, {1, 2}, {1, 3}, {2, 3}, {3, 3}, {3, 2}, {3, 1}, {2, 1}};
    EXPECT_EQ(b, expected);
    EXPECT_FALSE(border);
    EXPECT_EQ(size, 9);
}

TEST(Contour, LargestComponentWins)
{
    std::vector<uint8_t> mask(100, 0);
    mask[0] = 1; // lone pixel touching the border
    for (int y = 4; y <= 8; ++y)
        for (int x = 4; x <= 8; ++x)
            mask[y * 10 + x] = 1;
    bool border = true;
    const auto b = trace_largest_boundary(mask, 10, 10, &border);
    EXPECT_EQ(b.size(), 16u);
    EXPECT_EQ(b.front(), (Point{4, 4}));
    EXPECT_FALSE(border);
}

TEST(Contour, NoForegroundGivesEmptyBoundary)
{
    EXPECT_TRUE(trace_largest_boundary(std::vector<uint8_t>(9, 0), 3, 3).empty());
}

class Decide : public ::testing::Test
{
protected:
    TemplateSet templates = fixtures::shape_templates();

    TensorData edges(const std::string& label) const
    {
        return sobel_xy(fixtures::render_shape(label, 64, 64, 30, 34, 14));
    }
};

TEST_F(Decide, MatchingShapeIsAccepted)
{
    for (const auto& label : fixtures::shape_labels())
    {
        const Decision d = spcp_validate(edges(label), label, {0.9f}, templates);
        EXPECT_TRUE(d.accept) << label;
        EXPECT_EQ(d.reason, "match");
        EXPECT_LE(d.min_distance, d.threshold);
        EXPECT_EQ(d.cnn_scores, (std::vector<float>{0.9f}));
    }
}

TEST_F(Decide, WrongClaimIsAShapeMismatch)
{
    const Decision d = spcp_validate(edges("circle"), "square", {}, templates);
    EXPECT_FALSE(d.accept);
    EXPECT_EQ(d.reason, "shape-mismatch");
    EXPECT_GT(d.min_distance, d.threshold);
}

TEST_F(Decide, UnknownClassIsRejected)
{
    const Decision d = spcp_validate(edges("square"), "hexagon", {}, templates);
    EXPECT_FALSE(d.accept);
    EXPECT_EQ(d.reason, "unknown-class");
}

TEST_F(Decide, ParameterMismatchIsRejected)
{
    const Decision d = spcp_decide("square", {}, word({0, 1, 2, 3}), templates);
    EXPECT_FALSE(d.accept);
    EXPECT_EQ(d.reason, "param-mismatch");
}

TEST_F(Decide, BlankImageHasNoShape)
{
    const Decision d = spcp_validate(sobel_xy(TensorData::zeros({1, 1, 64, 64})), "square", {}, templates);
    EXPECT_FALSE(d.accept);
    EXPECT_EQ(d.reason, "no-shape");
    EXPECT_TRUE(std::isinf(d.min_distance));
}

TEST_F(Decide, ShapeTouchingTheBorderHasNoShape)
{
    const TensorData e = sobel_xy(fixtures::render_shape("square", 64, 64, 8, 32, 14));
    EXPECT_EQ(spcp_validate(e, "square", {}, templates).reason, "no-shape");
}

TEST_F(Decide, ScoresNeverChangeTheOutcome)
{
    const Decision a = spcp_validate(edges("triangle"), "square", {0.0f, 0.0f, 1.0f}, templates);
    const Decision b = spcp_validate(edges("triangle"), "square", {1.0f, 0.0f, 0.0f}, templates);
    EXPECT_EQ(a.accept, b.accept);
    EXPECT_EQ(a.min_distance, b.min_distance);
}

TEST_F(Decide, DecisionJsonCarriesTheVerdict)
{
    const auto j = nlohmann::json::parse(decision_json(spcp_validate(edges("square"), "square", {0.5f}, templates)));
    EXPECT_EQ(j.at("decision"), "ACCEPT");
    EXPECT_EQ(j.at("class"), "square");
    EXPECT_EQ(j.at("reason"), "match");
}

TEST(Templates, JsonRoundTrip)
{
    const TemplateSet t = fixtures::shape_templates();
    const TemplateSet back = parse_templates(templates_to_json(t));
    EXPECT_EQ(back.w, t.w);
    EXPECT_EQ(back.a, t.a);
    EXPECT_EQ(back.n, t.n);
    EXPECT_EQ(back.tau, t.tau);
    EXPECT_EQ(back.classes, t.classes);
}

TEST(Templates, MalformedJsonIsAParamError)
{
    EXPECT_THROW(parse_templates("{"), ParamError);
    EXPECT_THROW(parse_templates(R"({"w":4,"a":4,"n":8,"tau":1,"classes":{"x":[[0,1,2,9]]}})"), ParamError);
    EXPECT_THROW(parse_templates(R"({"w":4,"a":4,"n":8,"tau":1,"classes":{},"bogus":1})"), ParamError);
    EXPECT_THROW(parse_templates(R"({"w":3,"a":4,"n":8,"tau":1,"classes":{}})"), ParamError);
}

TEST(Templates, TauIsHalfTheClosestInterClassDistance)
{
    const TemplateSet t = fixtures::shape_templates();
    double closest = std::numeric_limits<double>::infinity();
    for (const auto& [la, wa] : t.classes)
        for (const auto& [lb, wb] : t.classes)
            if (la != lb)
                for (const auto& u : wa)
                    for (const auto& v : wb)
                        closest = std::min(closest, mindist(u, v));
    EXPECT_DOUBLE_EQ(t.tau, 0.5 * closest);
    EXPECT_GT(t.tau, 0.0);
}

TEST(Sobel, WeightIsTheTwoStandardKernels)
{
    const TensorData w = sobel_weight();
    EXPECT_EQ(w.shape, (Shape{2, 1, 3, 3}));
    EXPECT_EQ(w.f32, (std::vector<float>{-1, 0, 1, -2, 0, 2, -1, 0, 1, -1, -2, -1, 0, 0, 0, 1, 2, 1}));
}

} // namespace
} // namespace saiw
