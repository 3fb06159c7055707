#include "saiw/arch_validator.hpp"

#include "saiw/errors.hpp"
#include "saiw/hash.hpp"
#include "saiw/ops.hpp"

#include <algorithm>
#include <ctime>
#include <set>
#include <sstream>
#include <unordered_map>

namespace saiw {

namespace {

struct NodeView
{
    std::string label;
    std::string op;
    std::map<std::string, AttributeValue> attrs;
    std::string io;
    std::vector<std::string> refs;
};

struct GraphView
{
    CanonicalForm form;
    std::vector<NodeView> nodes;
    std::vector<std::string> inputs;  // "f32[1,3,8,8]"
    std::vector<std::string> outputs; // "ref type[shape]"
    std::vector<std::string> inits;   // footer init lines
    int64_t opset = 0;
};

std::vector<std::string> split_words(std::string_view s)
{
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size())
    {
        const size_t j = s.find(' ', i);
        const size_t end = j == std::string_view::npos ? s.size() : j;
        if (end > i)
        {
            out.emplace_back(s.substr(i, end - i));
        }
        i = end + 1;
    }
    return out;
}

GraphView view(const GraphIR& graph)
{
    GraphView v;
    v.form = canonicalize(graph);
    v.opset = graph.opset_version;
    const auto labels = detail::label_nodes(graph);
    const auto types = infer_types(graph);

    std::unordered_map<std::string, std::string> initRef;
    for (const auto& line : v.form.footer_lines)
    {
        if (line.rfind("init @", 0) == 0)
        {
            const auto words = split_words(line);
            initRef[words.at(1)] = "@" + words.at(2);
            v.inits.push_back(line);
        }
        else if (line.rfind("init unused", 0) == 0)
        {
            v.inits.push_back(line);
        }
        else if (line.rfind("output ", 0) == 0)
        {
            const auto words = split_words(line);
            std::string ref = words.at(2);
            if (auto it = initRef.find(ref); it != initRef.end())
            {
                ref = it->second;
            }
            v.outputs.push_back(ref + " " + words.at(3));
        }
    }
    for (const auto& in : graph.inputs)
    {
        v.inputs.push_back(std::string(to_string(in.type)) + shape_to_string(in.shape));
    }
    for (size_t k = 0; k < v.form.order.size(); ++k)
    {
        const NodeIR& node = graph.nodes[v.form.order[k]];
        NodeView nv;
        nv.label = labels.label[v.form.order[k]];
        nv.op = node.op_type;
        std::vector<ops::Operand> operands;
        for (const auto& in : node.inputs)
        {
            ops::Operand op;
            if (!in.empty())
            {
                op.info = &types.at(in);
                if (auto it = graph.initializers.find(in); it != graph.initializers.end())
                {
                    op.value = &it->second;
                }
            }
            operands.push_back(op);
        }
        nv.attrs = ops::normalized_attributes(node, operands);
        std::string attrText;
        for (const auto& [name, value] : nv.attrs)
        {
            attrText += (attrText.empty() ? "" : ",") + name + "=" + attribute_to_string(value);
        }
        nv.io = nv.label.substr(std::min(nv.label.size(), nv.op.size() + attrText.size() + 2));
        const std::string& line = v.form.node_lines[k];
        const size_t arrow = line.rfind(" <-");
        for (auto& ref : split_words(std::string_view(line).substr(arrow + 3)))
        {
            if (auto it = initRef.find(ref); it != initRef.end())
            {
                ref = it->second;
            }
            nv.refs.push_back(std::move(ref));
        }
        v.nodes.push_back(std::move(nv));
    }
    return v;
}

std::string node_loc(size_t i, size_t j)
{
    return "node %" + std::to_string(i) + "/%" + std::to_string(j);
}

class Differ
{
public:
    Differ(const GraphView& a, const GraphView& b, std::vector<Difference>& out)
        : m_A(a)
        , m_B(b)
        , m_Out(out)
    {}

    void run()
    {
        if (m_A.opset != m_B.opset)
        {
            add(DiffKind::kOpset, "graph", std::to_string(m_A.opset), std::to_string(m_B.opset));
        }
        compare_lists("input $", m_A.inputs, m_B.inputs);
        align();
        if (m_A.nodes.size() != m_B.nodes.size())
        {
            add(DiffKind::kNodeCount, "graph", std::to_string(m_A.nodes.size()) + " nodes",
                std::to_string(m_B.nodes.size()) + " nodes");
        }
        for (const auto& [i, j] : m_Pairs)
        {
            compare_edges(i, j);
        }
        compare_outputs();
        if (m_Out.empty() && m_A.inits != m_B.inits)
        {
            add(DiffKind::kIoShape, "initializers", join(m_A.inits), join(m_B.inits));
        }
    }

private:
    void add(DiffKind kind, std::string location, std::string lhs, std::string rhs)
    {
        m_Out.push_back({kind, std::move(location), std::move(lhs), std::move(rhs)});
    }

    static std::string join(const std::vector<std::string>& lines)
    {
        std::string s;
        for (const auto& l : lines)
        {
            s += (s.empty() ? "" : "; ") + l;
        }
        return s;
    }

    void compare_lists(const std::string& prefix, const std::vector<std::string>& a,
                       const std::vector<std::string>& b)
    {
        const size_t n = std::max(a.size(), b.size());
        for (size_t i = 0; i < n; ++i)
        {
            const std::string lhs = i < a.size() ? a[i] : "(absent)";
            const std::string rhs = i < b.size() ? b[i] : "(absent)";
            if (lhs != rhs)
            {
                add(DiffKind::kIoShape, prefix + std::to_string(i), lhs, rhs);
            }
        }
    }

    void align()
    {
        const size_t n = m_A.nodes.size();
        const size_t m = m_B.nodes.size();
        // suffix LCS lengths
        std::vector<std::vector<uint32_t>> lcs(n + 1, std::vector<uint32_t>(m + 1, 0));
        for (size_t i = n; i-- > 0;)
        {
            for (size_t j = m; j-- > 0;)
            {
                lcs[i][j] = m_A.nodes[i].label == m_B.nodes[j].label ? lcs[i + 1][j + 1] + 1
                                                                       : std::max(lcs[i + 1][j], lcs[i][j + 1]);
            }
        }
        size_t i = 0;
        size_t j = 0;
        std::vector<size_t> gapA;
        std::vector<size_t> gapB;
        while (i < n || j < m)
        {
            if (i < n && j < m && m_A.nodes[i].label == m_B.nodes[j].label && lcs[i][j] == lcs[i + 1][j + 1] + 1)
            {
                flush_gap(gapA, gapB);
                m_Pairs.emplace_back(i++, j++);
            }
            else if (j == m || (i < n && lcs[i + 1][j] >= lcs[i][j + 1]))
            {
                gapA.push_back(i++);
            }
            else
            {
                gapB.push_back(j++);
            }
        }
        flush_gap(gapA, gapB);
        for (const auto& [a, b] : m_Pairs)
        {
            m_Map[a] = b;
        }
    }

    void flush_gap(std::vector<size_t>& gapA, std::vector<size_t>& gapB)
    {
        const size_t paired = std::min(gapA.size(), gapB.size());
        for (size_t k = 0; k < paired; ++k)
        {
            compare_nodes(gapA[k], gapB[k]);
            m_Pairs.emplace_back(gapA[k], gapB[k]);
        }
        for (size_t k = paired; k < gapA.size(); ++k)
        {
            add(DiffKind::kNodeCount, "node %" + std::to_string(gapA[k]), m_A.nodes[gapA[k]].label, "(absent)");
        }
        for (size_t k = paired; k < gapB.size(); ++k)
        {
            add(DiffKind::kNodeCount, "node %" + std::to_string(gapB[k]), "(absent)", m_B.nodes[gapB[k]].label);
        }
        gapA.clear();
        gapB.clear();
    }

    void compare_nodes(size_t i, size_t j)
    {
        const NodeView& a = m_A.nodes[i];
        const NodeView& b = m_B.nodes[j];
        if (a.op != b.op)
        {
            add(DiffKind::kOpType, node_loc(i, j), a.op, b.op);
            return;
        }
        bool attrDiff = false;
        std::set<std::string> names;
        for (const auto& [k, v] : a.attrs)
        {
            names.insert(k);
        }
        for (const auto& [k, v] : b.attrs)
        {
            names.insert(k);
        }
        for (const auto& name : names)
        {
            auto ia = a.attrs.find(name);
            auto ib = b.attrs.find(name);
            const bool same = ia != a.attrs.end() && ib != b.attrs.end() && attribute_equal(ia->second, ib->second);
            if (!same)
            {
                attrDiff = true;
                add(DiffKind::kAttribute, node_loc(i, j) + " attr " + name,
                    ia == a.attrs.end() ? "(absent)" : attribute_to_string(ia->second),
                    ib == b.attrs.end() ? "(absent)" : attribute_to_string(ib->second));
            }
        }
        if (!attrDiff && a.io != b.io)
        {
            add(DiffKind::kIoShape, node_loc(i, j), a.io, b.io);
        }
    }

    std::string mapped(const std::string& ref) const
    {
        if (ref.size() > 1 && ref[0] == '%')
        {
            auto it = m_Map.find(std::stoul(ref.substr(1)));
            return it == m_Map.end() ? "%?" : "%" + std::to_string(it->second);
        }
        return ref;
    }

    void compare_edges(size_t i, size_t j)
    {
        const auto& ra = m_A.nodes[i].refs;
        const auto& rb = m_B.nodes[j].refs;
        if (ra.size() != rb.size())
        {
            return; // arity change already shows in the labels
        }
        for (size_t s = 0; s < ra.size(); ++s)
        {
            if (mapped(ra[s]) != rb[s])
            {
                add(DiffKind::kEdge, node_loc(i, j) + " input " + std::to_string(s), ra[s], rb[s]);
            }
        }
    }

    void compare_outputs()
    {
        const auto& a = m_A.outputs;
        const auto& b = m_B.outputs;
        const size_t n = std::max(a.size(), b.size());
        for (size_t k = 0; k < n; ++k)
        {
            if (k >= a.size() || k >= b.size())
            {
                add(DiffKind::kIoShape, "output " + std::to_string(k), k < a.size() ? a[k] : "(absent)",
                    k < b.size() ? b[k] : "(absent)");
                continue;
            }
            const auto wa = split_words(a[k]);
            const auto wb = split_words(b[k]);
            if (wa.at(1) != wb.at(1))
            {
                add(DiffKind::kIoShape, "output " + std::to_string(k), wa[1], wb[1]);
            }
            if (mapped(wa[0]) != wb[0])
            {
                add(DiffKind::kEdge, "output " + std::to_string(k), wa[0], wb[0]);
            }
        }
    }

    const GraphView& m_A;
    const GraphView& m_B;
    std::vector<Difference>& m_Out;
    std::vector<std::pair<size_t, size_t>> m_Pairs;
    std::unordered_map<size_t, size_t> m_Map;
};

} // namespace

ArchSignature signature(const GraphIR& graph)
{
    ArchSignature sig;
    sig.canonical_text = canonicalize(graph).text();
    sig.digest = sha256_hex(sig.canonical_text);
    return sig;
}

std::string_view to_string(Verdict v)
{
    return v == Verdict::kEqual ? "EQUAL" : "DIFFER";
}

std::string_view to_string(DiffKind k)
{
    switch (k)
    {
        case DiffKind::kNodeCount:
            return "node-count";
        case DiffKind::kOpType:
            return "op-type";
        case DiffKind::kAttribute:
            return "attribute";
        case DiffKind::kEdge:
            return "edge";
        case DiffKind::kIoShape:
            return "io-shape";
        case DiffKind::kOpset:
            return "opset";
    }
    return "?";
}

VerdictReport compare(const GraphIR& a, const GraphIR& b)
{
    const GraphView va = view(a);
    const GraphView vb = view(b);
    VerdictReport report;
    const std::string ta = va.form.text();
    const std::string tb = vb.form.text();
    report.lhs_digest = sha256_hex(ta);
    report.rhs_digest = sha256_hex(tb);
    if (ta == tb)
    {
        return report;
    }
    report.verdict = Verdict::kDiffer;
    Differ(va, vb, report.differences).run();
    if (report.differences.empty())
    {
        // Structural alignment found nothing local; report the first differing canonical line.
        std::istringstream sa(ta);
        std::istringstream sb(tb);
        std::string la;
        std::string lb;
        size_t line = 0;
        while (true)
        {
            const bool ga = static_cast<bool>(std::getline(sa, la));
            const bool gb = static_cast<bool>(std::getline(sb, lb));
            if (!ga)
            {
                la = "(absent)";
            }
            if (!gb)
            {
                lb = "(absent)";
            }
            if (la != lb || (!ga && !gb))
            {
                break;
            }
            ++line;
        }
        report.differences.push_back({DiffKind::kEdge, "canonical line " + std::to_string(line), la, lb});
    }
    return report;
}

std::string report_text(const VerdictReport& report)
{
    std::string s = "verdict: " + std::string(to_string(report.verdict)) + "\n";
    s += "lhs signature: " + report.lhs_digest + "\n";
    s += "rhs signature: " + report.rhs_digest + "\n";
    for (const auto& d : report.differences)
    {
        s += "  [" + std::string(to_string(d.kind)) + "] " + d.location + ": " + d.lhs + " -> " + d.rhs + "\n";
    }
    return s;
}

Clock system_clock()
{
    return [] {
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return std::string(buf);
    };
}

Clock fixed_clock(std::string timestamp)
{
    if (!is_iso8601_utc(timestamp))
    {
        throw Error("invalid ISO-8601 UTC timestamp '" + timestamp + "'");
    }
    return [ts = std::move(timestamp)] { return ts; };
}

bool is_iso8601_utc(std::string_view s)
{
    static constexpr std::string_view kPattern = "dddd-dd-ddTdd:dd:ddZ";
    if (s.size() != kPattern.size())
    {
        return false;
    }
    for (size_t i = 0; i < s.size(); ++i)
    {
        if (kPattern[i] == 'd' ? !(s[i] >= '0' && s[i] <= '9') : s[i] != kPattern[i])
        {
            return false;
        }
    }
    auto num = [&](size_t pos, size_t len) { return std::stoi(std::string(s.substr(pos, len))); };
    const int month = num(5, 2);
    const int day = num(8, 2);
    return month >= 1 && month <= 12 && day >= 1 && day <= 31 && num(11, 2) <= 23 && num(14, 2) <= 59 &&
           num(17, 2) <= 60;
}

ModelFile emit_qualified(const ModelFile& b, const ArchSignature& against, const Clock& clock)
{
    const ArchSignature actual = signature(b);
    if (actual.digest != against.digest)
    {
        throw AttestationError("model signature " + actual.digest + " does not match validated signature " +
                               against.digest);
    }
    const std::string timestamp = clock();
    if (!is_iso8601_utc(timestamp))
    {
        throw AttestationError("clock produced an invalid timestamp '" + timestamp + "'");
    }
    ModelFile c = b;
    c.graph.metadata[std::string(meta::kAttestArch)] = actual.digest;
    c.graph.metadata[std::string(meta::kAttestTool)] = std::string(kToolName) + " " + std::string(kToolVersion);
    c.graph.metadata[std::string(meta::kAttestTime)] = timestamp;
    return c;
}

} // namespace saiw
