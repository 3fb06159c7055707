#include "saiw/spcp.hpp"

#include "saiw/errors.hpp"
#include "saiw/executor.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace saiw {

using nlohmann::json;

double inverse_normal_cdf(double p)
{
    if (!(p > 0.0 && p < 1.0))
    {
        throw ParamError("normal quantile needs 0 < p < 1, got " + std::to_string(p));
    }
    // Acklam's rational approximation (relative error < 1.2e-9) ...
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double pLow = 0.02425;
    double x = 0.0;
    if (p < pLow)
    {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    else if (p <= 1.0 - pLow)
    {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    else
    {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // ... polished by one Halley step against erfc to full double precision.
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

std::vector<double> gaussian_breakpoints(int a)
{
    if (a < 2 || a > 10)
    {
        throw ParamError("alphabet size must lie in [2, 10], got " + std::to_string(a));
    }
    std::vector<double> beta;
    for (int k = 1; k < a; ++k)
    {
        beta.push_back(inverse_normal_cdf(static_cast<double>(k) / a));
    }
    if (a % 2 == 0)
    {
        beta[a / 2 - 1] = 0.0; // the median is exact
    }
    return beta;
}

TensorData sobel_weight()
{
    return TensorData::make_f32({2, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1, -1, -2, -1, 0, 0, 0, 1, 2, 1});
}

TensorData sobel_xy(const TensorData& image)
{
    if (image.type != ElementType::kFloat32 || image.shape.size() != 4 || image.shape[0] != 1 ||
        image.shape[1] != 1 || image.shape[2] < 3 || image.shape[3] < 3)
    {
        throw ShapeError("sobel", "expects a 1x1xHxW f32 image with H, W >= 3, got " + shape_to_string(image.shape));
    }
    ops::ConvAttrs attrs;
    attrs.kernel = {3, 3};
    attrs.pads = {1, 1, 1, 1};
    return conv2d(image, sobel_weight(), nullptr, attrs);
}

TensorData sobel(const TensorData& image)
{
    const TensorData g = sobel_xy(image);
    const int64_t hw = image.shape[2] * image.shape[3];
    TensorData out = TensorData::zeros(image.shape);
    for (int64_t i = 0; i < hw; ++i)
    {
        const float gx = g.f32[i];
        const float gy = g.f32[hw + i];
        out.f32[i] = std::sqrt(gx * gx + gy * gy);
    }
    return out;
}

std::vector<Point> trace_largest_boundary(const std::vector<uint8_t>& mask, int64_t h, int64_t w, bool* touchesBorder,
                                          int64_t* componentSize)
{
    // Label 8-connected components; keep the largest (first in raster order on ties).
    std::vector<int32_t> label(mask.size(), -1);
    std::vector<int64_t> sizes;
    std::vector<int64_t> stack;
    for (int64_t i = 0; i < h * w; ++i)
    {
        if (!mask[i] || label[i] >= 0)
        {
            continue;
        }
        const auto id = static_cast<int32_t>(sizes.size());
        sizes.push_back(0);
        label[i] = id;
        stack.push_back(i);
        while (!stack.empty())
        {
            const int64_t p = stack.back();
            stack.pop_back();
            ++sizes[id];
            const int64_t py = p / w, px = p % w;
            for (int64_t dy = -1; dy <= 1; ++dy)
            {
                for (int64_t dx = -1; dx <= 1; ++dx)
                {
                    const int64_t y = py + dy, x = px + dx;
                    if (y < 0 || y >= h || x < 0 || x >= w || !mask[y * w + x] || label[y * w + x] >= 0)
                    {
                        continue;
                    }
                    label[y * w + x] = id;
                    stack.push_back(y * w + x);
                }
            }
        }
    }
    if (sizes.empty())
    {
        return {};
    }
    const auto best = static_cast<int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    auto in = [&](int64_t y, int64_t x) { return y >= 0 && y < h && x >= 0 && x < w && label[y * w + x] == best; };
    if (componentSize)
    {
        *componentSize = sizes[best];
    }
    if (touchesBorder)
    {
        *touchesBorder = false;
        for (int64_t i = 0; i < h * w; ++i)
        {
            const int64_t y = i / w, x = i % w;
            if (label[i] == best && (y == 0 || x == 0 || y == h - 1 || x == w - 1))
            {
                *touchesBorder = true;
                break;
            }
        }
    }

    // Clockwise neighbourhood (y grows downwards): W, NW, N, NE, E, SE, S, SW.
    static constexpr int64_t dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    static constexpr int64_t dx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    auto dir_of = [](int64_t oy, int64_t ox) {
        for (int k = 0; k < 8; ++k)
        {
            if (dy[k] == oy && dx[k] == ox)
            {
                return k;
            }
        }
        return -1;
    };

    Point start{};
    for (int64_t i = 0; i < h * w; ++i)
    {
        if (label[i] == best)
        {
            start = {i / w, i % w};
            break;
        }
    }
    std::vector<Point> boundary{start};
    Point cur = start;
    int back = 0; // entered from the west: that neighbour is background
    const int startBack = back;
    const int64_t limit = 8 * sizes[best] + 16;
    for (int64_t step = 0; step < limit; ++step)
    {
        bool moved = false;
        for (int k = 1; k <= 8; ++k)
        {
            const int d = (back + k) % 8;
            const Point p{cur.y + dy[d], cur.x + dx[d]};
            if (!in(p.y, p.x))
            {
                continue;
            }
            const int prev = (d + 7) % 8;
            back = dir_of(cur.y + dy[prev] - p.y, cur.x + dx[prev] - p.x);
            cur = p;
            moved = true;
            break;
        }
        if (!moved)
        {
            break; // isolated pixel
        }
        if (cur == start && back == startBack)
        {
            break; // Jacob's stopping criterion
        }
        boundary.push_back(cur);
    }
    // The walk can revisit the start from another side before the stopping condition holds;
    // drop a trailing copy of the start so the polygon is not closed twice.
    while (boundary.size() > 1 && boundary.back() == start)
    {
        boundary.pop_back();
    }
    return boundary;
}

namespace {

std::vector<float> sample_from(const std::vector<std::array<double, 2>>& pts, size_t startIdx, double cy, double cx,
                               int n)
{
    const size_t m = pts.size();
    std::vector<double> seg(m);
    double total = 0.0;
    for (size_t k = 0; k < m; ++k)
    {
        const auto& p = pts[(startIdx + k) % m];
        const auto& q = pts[(startIdx + k + 1) % m];
        seg[k] = std::hypot(q[0] - p[0], q[1] - p[1]);
        total += seg[k];
    }
    std::vector<float> out(n);
    size_t k = 0;
    double before = 0.0; // arc length at the start of segment k
    for (int i = 0; i < n; ++i)
    {
        const double t = total * i / n;
        while (k + 1 < m && before + seg[k] <= t)
        {
            before += seg[k];
            ++k;
        }
        const auto& p = pts[(startIdx + k) % m];
        const auto& q = pts[(startIdx + k + 1) % m];
        const double f = seg[k] > 0.0 ? std::clamp((t - before) / seg[k], 0.0, 1.0) : 0.0;
        const double y = p[0] + f * (q[0] - p[0]);
        const double x = p[1] + f * (q[1] - p[1]);
        out[i] = static_cast<float>(std::hypot(y - cy, x - cx));
    }
    return out;
}

} // namespace

ShapeSeries series_from_boundary(const std::vector<std::array<double, 2>>& points, int n)
{
    if (n < 2)
    {
        throw ParamError("series length must be at least 2");
    }
    if (points.size() < 3)
    {
        throw DegenerateShape("boundary has fewer than 3 points");
    }
    double cy = 0.0, cx = 0.0;
    for (const auto& p : points)
    {
        cy += p[0];
        cx += p[1];
    }
    cy /= static_cast<double>(points.size());
    cx /= static_cast<double>(points.size());
    double perimeter = 0.0;
    std::vector<double> dist(points.size());
    for (size_t i = 0; i < points.size(); ++i)
    {
        const auto& q = points[(i + 1) % points.size()];
        perimeter += std::hypot(q[0] - points[i][0], q[1] - points[i][1]);
        dist[i] = std::hypot(points[i][0] - cy, points[i][1] - cx);
    }
    if (!(perimeter > 0.0))
    {
        throw DegenerateShape("boundary has zero length");
    }
    const double maxDist = *std::max_element(dist.begin(), dist.end());
    ShapeSeries best;
    for (size_t i = 0; i < points.size(); ++i)
    {
        if (dist[i] < maxDist * (1.0 - 1e-9))
        {
            continue;
        }
        auto candidate = sample_from(points, i, cy, cx, n);
        if (best.values.empty() || candidate > best.values)
        {
            best.values = std::move(candidate);
        }
    }
    return best;
}

Contour extract_contour(const TensorData& edges, float thetaFrac)
{
    if (!(thetaFrac > 0.0f && thetaFrac < 1.0f))
    {
        throw ParamError("threshold fraction must lie in (0, 1)");
    }
    if (edges.type != ElementType::kFloat32 || edges.shape.size() != 4 || edges.shape[0] != 1 ||
        (edges.shape[1] != 1 && edges.shape[1] != 2))
    {
        throw ShapeError("contour", "expects a 1x1xHxW or 1x2xHxW f32 edge tensor, got " +
                                        shape_to_string(edges.shape));
    }
    edges.check();
    const int64_t h = edges.shape[2], w = edges.shape[3], hw = h * w;
    std::vector<float> mag(hw);
    for (int64_t i = 0; i < hw; ++i)
    {
        if (edges.shape[1] == 1)
        {
            mag[i] = std::fabs(edges.f32[i]);
        }
        else
        {
            const float gx = edges.f32[i];
            const float gy = edges.f32[hw + i];
            mag[i] = std::sqrt(gx * gx + gy * gy);
        }
    }
    float mx = 0.0f;
    for (float v : mag)
    {
        mx = v > mx ? v : mx;
    }
    if (!(mx > 0.0f) || !std::isfinite(mx))
    {
        throw EmptyShape("edge map has no foreground");
    }
    const float theta = thetaFrac * mx;
    std::vector<uint8_t> mask(hw);
    for (int64_t i = 0; i < hw; ++i)
    {
        mask[i] = mag[i] > theta;
    }
    Contour c;
    c.boundary = trace_largest_boundary(mask, h, w, &c.touches_border, &c.component_size);
    if (c.boundary.empty())
    {
        throw EmptyShape("no pixel exceeds the threshold");
    }
    if (c.boundary.size() < 8)
    {
        throw DegenerateShape("component boundary has only " + std::to_string(c.boundary.size()) + " pixels");
    }
    return c;
}

ShapeSeries contour_series(const TensorData& edges, float thetaFrac, int n)
{
    const Contour c = extract_contour(edges, thetaFrac);
    std::vector<std::array<double, 2>> pts;
    pts.reserve(c.boundary.size());
    for (const auto& p : c.boundary)
    {
        pts.push_back({static_cast<double>(p.y), static_cast<double>(p.x)});
    }
    return series_from_boundary(pts, n);
}

std::vector<double> paa(const std::vector<double>& series, int w)
{
    if (w < 1 || series.empty() || series.size() % static_cast<size_t>(w) != 0)
    {
        throw ParamError("word length " + std::to_string(w) + " must divide series length " +
                         std::to_string(series.size()));
    }
    const size_t len = series.size() / w;
    std::vector<double> out(w);
    for (int s = 0; s < w; ++s)
    {
        double sum = 0.0;
        for (size_t k = 0; k < len; ++k)
        {
            sum += series[s * len + k];
        }
        out[s] = sum / static_cast<double>(len);
    }
    return out;
}

SaxWord flat_word(int w, int a, int n)
{
    return SaxWord{std::vector<int>(w, (a + 1) / 2 - 1), a, n};
}

SaxWord sax_encode(const ShapeSeries& s, int w, int a)
{
    const auto beta = gaussian_breakpoints(a);
    const int n = static_cast<int>(s.values.size());
    if (w < 1 || n == 0 || n % w != 0)
    {
        throw ParamError("word length " + std::to_string(w) + " must divide series length " + std::to_string(n));
    }
    double mean = 0.0;
    for (float v : s.values)
    {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (float v : s.values)
    {
        var += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(var / n);
    if (sd < 1e-8)
    {
        return flat_word(w, a, n);
    }
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i)
    {
        z[i] = (s.values[i] - mean) / sd;
    }
    SaxWord word{{}, a, n};
    for (double m : paa(z, w))
    {
        word.symbols.push_back(static_cast<int>(std::upper_bound(beta.begin(), beta.end(), m) - beta.begin()));
    }
    return word;
}

double mindist(const SaxWord& u, const SaxWord& v)
{
    if (u.a != v.a || u.n != v.n || u.symbols.size() != v.symbols.size() || u.symbols.empty())
    {
        throw ParamError("SAX words have different parameters");
    }
    const auto beta = gaussian_breakpoints(u.a);
    double sum = 0.0;
    for (size_t k = 0; k < u.symbols.size(); ++k)
    {
        const int i = u.symbols[k];
        const int j = v.symbols[k];
        if (i < 0 || j < 0 || i >= u.a || j >= u.a)
        {
            throw ParamError("SAX symbol outside the alphabet");
        }
        if (std::abs(i - j) <= 1)
        {
            continue;
        }
        const double cell = beta[std::max(i, j) - 1] - beta[std::min(i, j)];
        sum += cell * cell;
    }
    return std::sqrt(static_cast<double>(u.n) / static_cast<double>(u.symbols.size())) * std::sqrt(sum);
}

TemplateSet parse_templates(std::string_view text)
{
    try
    {
        const json doc = json::parse(text);
        for (const auto& [key, value] : doc.items())
        {
            if (key != "w" && key != "a" && key != "n" && key != "tau" && key != "classes")
            {
                throw ParamError("unknown template field '" + key + "'");
            }
        }
        TemplateSet t;
        t.w = doc.at("w").get<int>();
        t.a = doc.at("a").get<int>();
        t.n = doc.at("n").get<int>();
        t.tau = doc.at("tau").get<double>();
        gaussian_breakpoints(t.a);
        if (t.w < 1 || t.n % t.w != 0 || !(t.tau >= 0.0))
        {
            throw ParamError("template parameters are inconsistent");
        }
        for (const auto& [label, words] : doc.at("classes").items())
        {
            auto& list = t.classes[label];
            for (const auto& w : words)
            {
                SaxWord word{w.get<std::vector<int>>(), t.a, t.n};
                if (static_cast<int>(word.symbols.size()) != t.w ||
                    std::any_of(word.symbols.begin(), word.symbols.end(), [&](int s) { return s < 0 || s >= t.a; }))
                {
                    throw ParamError("template word of class '" + label + "' does not fit (w, a)");
                }
                list.push_back(std::move(word));
            }
        }
        return t;
    }
    catch (const json::exception& e)
    {
        throw ParamError(std::string("malformed template file: ") + e.what());
    }
}

std::string templates_to_json(const TemplateSet& t)
{
    json doc;
    doc["w"] = t.w;
    doc["a"] = t.a;
    doc["n"] = t.n;
    doc["tau"] = t.tau;
    doc["classes"] = json::object();
    for (const auto& [label, words] : t.classes)
    {
        json list = json::array();
        for (const auto& w : words)
        {
            list.push_back(w.symbols);
        }
        doc["classes"][label] = std::move(list);
    }
    return doc.dump(2) + "\n";
}

SaxWord shape_word(const TensorData& edges, const SpcpParams& params)
{
    const Contour c = extract_contour(edges, params.theta_frac);
    if (c.touches_border)
    {
        throw DegenerateShape("component touches the image border");
    }
    if (static_cast<int64_t>(c.boundary.size()) < params.min_boundary)
    {
        throw DegenerateShape("component boundary of " + std::to_string(c.boundary.size()) +
                              " pixels is below the minimum");
    }
    std::vector<std::array<double, 2>> pts;
    for (const auto& p : c.boundary)
    {
        pts.push_back({static_cast<double>(p.y), static_cast<double>(p.x)});
    }
    const ShapeSeries s = series_from_boundary(pts, params.n);
    double mean = 0.0;
    for (float v : s.values)
    {
        mean += v;
    }
    mean /= static_cast<double>(s.values.size());
    double var = 0.0;
    for (float v : s.values)
    {
        var += (v - mean) * (v - mean);
    }
    const double cv = mean > 0.0 ? std::sqrt(var / static_cast<double>(s.values.size())) / mean : 0.0;
    if (cv < params.flat_cv)
    {
        return flat_word(params.w, params.a, params.n);
    }
    return sax_encode(s, params.w, params.a);
}

Decision spcp_decide(const std::string& cnnClass, const std::vector<float>& cnnScores, const SaxWord& word,
                     const TemplateSet& templates)
{
    Decision d;
    d.cls = cnnClass;
    d.cnn_scores = cnnScores;
    d.threshold = templates.tau;
    d.min_distance = std::numeric_limits<double>::infinity();
    auto it = templates.classes.find(cnnClass);
    if (it == templates.classes.end() || it->second.empty())
    {
        d.reason = "unknown-class";
        return d;
    }
    if (word.a != templates.a || word.n != templates.n || static_cast<int>(word.symbols.size()) != templates.w)
    {
        d.reason = "param-mismatch";
        return d;
    }
    for (const auto& t : it->second)
    {
        d.min_distance = std::min(d.min_distance, mindist(word, t));
    }
    d.accept = d.min_distance <= templates.tau;
    d.reason = d.accept ? "match" : "shape-mismatch";
    return d;
}

Decision spcp_validate(const TensorData& edges, const std::string& cnnClass, const std::vector<float>& cnnScores,
                       const TemplateSet& templates, const SpcpParams& params)
{
    SpcpParams p = params;
    p.n = templates.n;
    p.w = templates.w;
    p.a = templates.a;
    try
    {
        return spcp_decide(cnnClass, cnnScores, shape_word(edges, p), templates);
    }
    catch (const EmptyShape&)
    {
    }
    catch (const DegenerateShape&)
    {
    }
    Decision d;
    d.cls = cnnClass;
    d.cnn_scores = cnnScores;
    d.threshold = templates.tau;
    d.min_distance = std::numeric_limits<double>::infinity();
    d.reason = "no-shape";
    return d;
}

std::string decision_json(const Decision& d)
{
    json doc;
    doc["decision"] = d.accept ? "ACCEPT" : "REJECT";
    doc["class"] = d.cls;
    doc["reason"] = d.reason;
    doc["min_distance"] = std::isfinite(d.min_distance) ? json(d.min_distance) : json(nullptr);
    doc["threshold"] = d.threshold;
    doc["cnn_scores"] = d.cnn_scores;
    return doc.dump();
}

TemplateSet build_templates(const std::map<std::string, std::vector<TensorData>>& edgeMaps, const SpcpParams& params)
{
    TemplateSet t;
    t.n = params.n;
    t.w = params.w;
    t.a = params.a;
    for (const auto& [label, maps] : edgeMaps)
    {
        auto& words = t.classes[label];
        for (const auto& e : maps)
        {
            SaxWord w = shape_word(e, params);
            if (std::find(words.begin(), words.end(), w) == words.end())
            {
                words.push_back(std::move(w));
            }
        }
    }
    double closest = std::numeric_limits<double>::infinity();
    for (auto a = t.classes.begin(); a != t.classes.end(); ++a)
    {
        for (auto b = std::next(a); b != t.classes.end(); ++b)
        {
            for (const auto& u : a->second)
            {
                for (const auto& v : b->second)
                {
                    closest = std::min(closest, mindist(u, v));
                }
            }
        }
    }
    if (!std::isfinite(closest) || closest <= 0.0)
    {
        throw ParamError("template classes are not separable by MINDIST");
    }
    t.tau = 0.5 * closest;
    return t;
}

} // namespace saiw
